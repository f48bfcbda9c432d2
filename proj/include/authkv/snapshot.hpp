// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "authkv/bytes.hpp"
#include "authkv/hash.hpp"
#include "authkv/store.hpp"
#include "authkv/topology.hpp"

namespace authkv {

enum class EntryKind : std::uint8_t { Internal = 0, External = 1, Key = 2, Leaf = 3 };

/// One 40-byte snapshot record. Packed word, least significant bit first:
///   bits 0-1 kind, bit 2 is_right, bit 3 next_is_leaf, bits 4-11 depth,
///   bits 12-63 payload.
/// Payload is an entry index (Internal, left-hand refs), the branching
/// node's version (Internal, right-hand refs), a version (External, Leaf)
/// or a key-region offset (Key). Key and Leaf entries keep the flag and
/// depth bits zero.
struct Entry {
  Hash256 hash{};
  EntryKind kind = EntryKind::Internal;
  bool is_right = false;
  bool next_is_leaf = false;
  Depth depth = 0;
  std::uint64_t payload = 0;

  static constexpr std::size_t kBytes = 40;
  static constexpr std::uint64_t kMaxPayload = (std::uint64_t{1} << 52) - 1;
  static constexpr Depth kMaxDepth = 0xff;

  std::uint64_t pack() const;
  /// Throws FormatError on nonzero reserved bits.
  static Entry unpack(const Hash256& hash, std::uint64_t word);

  bool operator==(const Entry&) const = default;
};

inline constexpr char kSnapshotMagic[8] = {'A', 'K', 'V', 'S', 'N', 'A', 'P', '1'};
inline constexpr std::uint32_t kSnapshotFormat = 1;
inline constexpr Version kNoSnapshot = ~Version{0};
inline constexpr std::size_t kSnapshotHeaderBytes = 8 + 4 + 4 + 8 + 8 + 4 + 4 + 8 + 8;
inline constexpr std::size_t kDirectoryEntryBytes = 8 + 8 + 32 + 8;
inline constexpr std::size_t kSnapshotTrailerBytes = 32 + 32;

struct SnapshotHeader {
  std::uint32_t format = kSnapshotFormat;
  std::uint32_t hash_id = kHashIdBlake2s256;
  Version version = 0;
  Version prev_version = kNoSnapshot;
  Topology topology;
  std::uint64_t entry_count = 0;
  std::uint64_t key_region_bytes = 0;

  std::optional<Version> previous() const {
    return prev_version == kNoSnapshot ? std::nullopt : std::optional(prev_version);
  }
  bool operator==(const SnapshotHeader&) const = default;
};

struct DirectoryEntry {
  std::uint64_t begin = 0;  // first entry of the subtree's range
  std::uint64_t count = 0;  // 0 when the subtree was not written
  SubtreeDigest root;
  bool operator==(const DirectoryEntry&) const = default;
};

/// Everything a snapshot file holds, decoded.
struct SnapshotData {
  SnapshotHeader header;
  std::vector<DirectoryEntry> directory;
  std::vector<Entry> entries;  // Internal tags are relative to the subtree range
  Bytes key_region;            // records {u32 len, key, u64 value offset}
  Hash256 root{};
};

struct SnapshotSummary {
  Version version = 0;
  std::optional<Version> prev_version;
  std::uint64_t entry_count = 0;
  std::uint64_t subtrees_written = 0;
  std::uint64_t file_bytes = 0;
  Hash256 root{};
};

struct KeyRecord {
  ByteView key;
  JournalOffset value_offset = 0;
};

/// Serializes the subtrees changed since the previous snapshot. The store
/// must be committed; this marks paths of deleted keys first.
SnapshotData build_snapshot(Store& store);
Bytes encode_snapshot(const SnapshotData& data);
/// build + encode + write through a temporary file and rename.
SnapshotSummary write_snapshot(Store& store, const std::filesystem::path& file);

/// Entry stream for one subtree, as written by the recursive four-way split.
/// `prev` is the previous snapshot version (0 when there is none); a node is
/// written when it changed after `prev`.
void save_subtree(const ShardTree& tree, std::uint32_t subtree, Version prev,
                  std::vector<Entry>& entries, Bytes& key_region);

/// A validated, decoded snapshot file.
class SnapshotReader {
 public:
  explicit SnapshotReader(Bytes file);
  static SnapshotReader open(const std::filesystem::path& path);

  const SnapshotHeader& header() const { return data_.header; }
  const std::vector<DirectoryEntry>& directory() const { return data_.directory; }
  const Hash256& root() const { return data_.root; }
  const SnapshotData& data() const { return data_; }
  const FoldTree& fold() const { return fold_; }

  std::span<const Entry> entries(std::uint32_t global_subtree) const;
  std::span<const Entry> all_entries() const { return data_.entries; }
  /// Key-region record at `offset`; throws FormatError if none starts there.
  KeyRecord key_at(std::uint64_t offset) const;

 private:
  SnapshotData data_;
  FoldTree fold_;
};

}  // namespace authkv
