// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "authkv/bytes.hpp"
#include "authkv/hash.hpp"
#include "authkv/thread_pool.hpp"
#include "authkv/topology.hpp"
#include "authkv/tree.hpp"

namespace authkv {

/// Combines two sibling digests at an implicit level. An empty side passes
/// the other through, so the top levels behave like the sparse tree below.
SubtreeDigest fold_pair(const SubtreeDigest& left, const SubtreeDigest& right, Depth depth);

/// levels[l] holds the 2^l digests at implicit depth l; levels[L] are the
/// subtree roots and levels[0][0] the global root.
class FoldTree {
 public:
  FoldTree() = default;
  FoldTree(unsigned implicit_levels, std::vector<SubtreeDigest> subtree_roots);

  /// Recomputes the ancestors of the given subtree indices.
  void update(std::span<const std::uint32_t> changed);
  void set(std::uint32_t subtree, const SubtreeDigest& d) { levels_.back()[subtree] = d; }

  const SubtreeDigest& root() const { return levels_.front().front(); }
  const SubtreeDigest& at(unsigned level, std::size_t index) const { return levels_[level][index]; }
  const std::vector<SubtreeDigest>& subtree_roots() const { return levels_.back(); }
  unsigned implicit_levels() const { return static_cast<unsigned>(levels_.size() - 1); }

  /// The subtree a key hash ends up in when descending the top levels,
  /// stepping aside wherever its own side is empty. nullopt if all empty.
  std::optional<std::uint32_t> descend(const Hash256& key_hash) const;

 private:
  std::vector<std::vector<SubtreeDigest>> levels_;
};

struct Update {
  Bytes key;
  std::optional<Bytes> value;  // nullopt deletes the key

  static Update put(ByteView k, ByteView v) { return {Bytes(k.begin(), k.end()), Bytes(v.begin(), v.end())}; }
  static Update erase(ByteView k) { return {Bytes(k.begin(), k.end()), std::nullopt}; }
};

struct KeyError {
  std::size_t index = 0;  // position in the submitted batch
  std::string message;
};

struct BatchResult {
  std::size_t applied = 0;
  std::size_t inserted = 0;
  std::size_t updated = 0;
  std::size_t deleted = 0;
  std::size_t absent = 0;
  std::size_t superseded = 0;  // earlier writes to a key dropped in favour of a later one
  std::vector<KeyError> errors;
};

struct CommitResult {
  Hash256 root{};
  Version version = 0;
  std::vector<SubtreeDigest> subtree_roots;
  std::size_t updates_applied = 0;
  std::size_t nodes_rehashed = 0;

  bool operator==(const CommitResult&) const = default;
};

struct StoreOptions {
  Topology topology;
  std::size_t threads = 1;
  /// Journal segments go under this directory; in-memory journal when unset.
  std::optional<std::filesystem::path> journal_dir;
  bool prefetch = true;
};

/// Sharded store: one writer per shard on the update path, a barrier at commit.
class Store {
 public:
  explicit Store(StoreOptions opts);

  BatchResult apply_batch(std::span<const Update> updates, Version version);
  CommitResult commit(Version version);

  std::optional<LeafValue> get(ByteView key) const;

  const Topology& topology() const { return opts_.topology; }
  const StoreOptions& options() const { return opts_; }
  Hash256 root() const { return fold_.root().hash; }
  const FoldTree& fold() const { return fold_; }
  /// Last committed version, 0 before the first commit.
  Version version() const { return committed_; }
  std::size_t leaf_count() const;

  ShardTree& shard(std::size_t i) { return shards_[i]; }
  const ShardTree& shard(std::size_t i) const { return shards_[i]; }
  ThreadPool& pool() { return *pool_; }

  /// Previous snapshot version, if one has been written.
  std::optional<Version> last_snapshot() const { return last_snapshot_; }
  /// Marks the current paths of keys deleted since the previous snapshot as
  /// changed in the committed version. Called by the snapshot writer.
  void prepare_snapshot();
  void snapshot_written(Version v) { last_snapshot_ = v; }

 private:
  StoreOptions opts_;
  std::unique_ptr<ThreadPool> pool_;
  std::vector<ShardTree> shards_;
  FoldTree fold_;
  Version committed_ = 0;
  Version pending_ = 0;
  std::size_t pending_updates_ = 0;
  std::optional<CommitResult> last_commit_;
  std::optional<Version> last_snapshot_;
  std::vector<Hash256> deleted_since_snapshot_;
};

}  // namespace authkv
