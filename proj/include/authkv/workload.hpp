// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "authkv/bytes.hpp"
#include "authkv/hash.hpp"
#include "authkv/topology.hpp"

namespace authkv {

inline constexpr const char* kPrngId = "mt19937_64/rejection-v1";

/// Seeded generator with a fixed algorithm: mt19937_64 words, bounded draws
/// by rejection sampling (std distributions differ between libraries).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}
  std::uint64_t next() { return gen_(); }
  /// Uniform in [0, n); n > 0.
  std::uint64_t below(std::uint64_t n);
  void fill(std::span<std::uint8_t> out);

 private:
  std::mt19937_64 gen_;
};

struct Mix {
  unsigned update = 90;
  unsigned insert = 5;
  unsigned del = 5;
  bool operator==(const Mix&) const = default;
};

/// Parses "90,5,5". Throws std::invalid_argument.
Mix parse_mix(const std::string& s);

struct WorkloadConfig {
  std::uint64_t seed = 1;
  std::size_t key_count = std::size_t{1} << 17;
  std::size_t op_count = std::size_t{1} << 20;
  Mix mix;
  std::size_t value_size = 32;
  std::uint64_t snapshot_period_ms = 0;  // 0 disables snapshots
  std::optional<std::filesystem::path> snapshot_dir;
  Topology topology;
  std::size_t threads = 1;
  std::size_t epoch_size = std::size_t{1} << 16;
  bool prefetch = true;

  /// Throws std::invalid_argument.
  void validate() const;
  bool snapshots_enabled() const { return snapshot_period_ms > 0; }
};

using Key32 = std::array<std::uint8_t, 32>;

enum class OpKind : std::uint8_t { Update, Insert, Delete };

struct Op {
  OpKind kind = OpKind::Insert;
  Key32 key{};
  Bytes value;  // empty for deletes
  bool operator==(const Op&) const = default;
};

/// Deterministic operation stream: `key_count` preload inserts followed by
/// `op_count` mixed operations. Updates and deletes draw from the live keys;
/// with no live key they become inserts.
class OpGenerator {
 public:
  explicit OpGenerator(const WorkloadConfig& cfg);

  bool preload_done() const { return preload_left_ == 0; }
  std::size_t ops_left() const { return ops_left_; }
  std::size_t live_keys() const { return live_.size(); }

  /// Next preload insert, then mixed ops. Returns false when exhausted.
  bool next(Op& op);

 private:
  Key32 fresh_key();
  Bytes value();

  WorkloadConfig cfg_;
  Rng rng_;
  std::vector<Key32> live_;
  std::size_t preload_left_;
  std::size_t ops_left_;
};

struct OpStream {
  std::vector<Op> preload;
  std::vector<Op> ops;
};

OpStream generate_ops(const WorkloadConfig& cfg);

struct RunReport {
  WorkloadConfig config;
  std::size_t epochs = 0;
  std::size_t ops_applied = 0;
  std::size_t inserts = 0;
  std::size_t updates = 0;
  std::size_t deletes = 0;
  std::size_t live_keys = 0;
  std::size_t measured_ops = 0;
  double measured_seconds = 0;
  double updates_per_sec = 0;
  std::vector<double> commit_ms;  // one per epoch after preload
  std::size_t snapshot_bytes = 0;
  double snapshot_seconds = 0;
  std::map<Version, Hash256> snapshots;  // version -> root
  Version final_version = 0;
  Hash256 final_root{};
  unsigned hardware_threads = 0;
};

/// Applies the stream in epochs of config.epoch_size ops, one commit per
/// epoch. Throughput counts epochs that start after the first 10% of the
/// mixed ops; preload is never counted. Snapshot writes inside that window
/// count against throughput.
RunReport run(const WorkloadConfig& cfg);

std::string format_report(const RunReport& r);
/// Throws std::invalid_argument on malformed text.
RunReport parse_report(const std::string& text);

std::filesystem::path snapshot_file(const std::filesystem::path& dir, Version v);
std::filesystem::path journal_dir(const std::filesystem::path& snapshot_dir);

struct VerifyOutcome {
  bool ok = true;
  std::string message;
  std::size_t inclusions = 0;
  std::size_t exclusions = 0;
  std::size_t chained = 0;  // proofs that had to follow an ExternalVersion
};

/// For every snapshot listed in the report: checks the file root against the
/// report, the previous-snapshot chain, and `samples` present and `samples`
/// absent keys through build/verify, following ExternalVersion verdicts.
VerifyOutcome verify_run(const RunReport& report, const std::filesystem::path& dir,
                         std::size_t samples = 16);

}  // namespace authkv
