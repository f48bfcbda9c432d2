// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <vector>

#include "authkv/bytes.hpp"
#include "authkv/hash.hpp"

namespace authkv {

/// Byte offset of a record inside one version segment's record stream.
using JournalOffset = std::uint64_t;

inline constexpr JournalOffset kMaxJournalOffset = (JournalOffset{1} << 52) - 1;
inline constexpr char kJournalMagic[8] = {'A', 'K', 'V', 'J', 'R', 'N', 'L', '1'};
inline constexpr std::uint32_t kJournalFormat = 1;
inline constexpr std::size_t kJournalHeaderBytes = 8 + 4 + 8;
inline constexpr std::size_t kJournalFooterBytes = 8 + 8 + 32;

struct JournalRecord {
  Bytes key;
  Bytes value;
  bool operator==(const JournalRecord&) const = default;
};

struct SegmentSummary {
  std::uint64_t record_count = 0;
  std::uint64_t byte_length = 0;
  Hash256 checksum{};
};

/// Append-only payload storage split into one segment per version. Appends
/// to a version stay in memory until seal(); a sealed segment is immutable.
/// With a directory, seal() writes journal/shard-NNN/v<version>.seg and the
/// in-memory copy is dropped.
class Journal {
 public:
  Journal() = default;
  Journal(std::filesystem::path dir, std::uint32_t shard);

  JournalOffset append(Version version, ByteView key, ByteView value);
  JournalRecord read(Version version, JournalOffset offset) const;
  SegmentSummary seal(Version version);

  bool has_segment(Version version) const { return segments_.contains(version); }
  bool is_sealed(Version version) const;
  /// Versions with an open (unsealed) segment.
  std::vector<Version> open_versions() const;

  bool in_memory() const { return !dir_.has_value(); }
  std::filesystem::path segment_path(Version version) const;
  static std::filesystem::path segment_path(const std::filesystem::path& root, std::uint32_t shard,
                                            Version version);

 private:
  struct Segment {
    Bytes records;
    std::vector<JournalOffset> starts;
    std::uint64_t length = 0;
    bool sealed = false;
  };

  Segment& open_segment(Version version);

  std::optional<std::filesystem::path> dir_;
  std::uint32_t shard_ = 0;
  std::map<Version, Segment> segments_;
};

/// A fully parsed segment file, with header, footer and checksum validated.
struct SegmentFile {
  Version version = 0;
  std::vector<std::pair<JournalOffset, JournalRecord>> records;
  SegmentSummary summary;
};

SegmentFile read_segment_file(const std::filesystem::path& path);

/// Reads one record from a sealed segment file without loading the rest.
JournalRecord read_segment_record(const std::filesystem::path& path, Version version,
                                  JournalOffset offset);

}  // namespace authkv
