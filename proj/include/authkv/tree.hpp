// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "authkv/bytes.hpp"
#include "authkv/hash.hpp"
#include "authkv/journal.hpp"
#include "authkv/topology.hpp"

namespace authkv {

/// Slot in one of the two shard arenas, with the top bit selecting the leaf arena.
class NodeRef {
 public:
  static constexpr std::uint32_t kNullRaw = 0xFFFFFFFFu;
  static constexpr std::uint32_t kLeafBit = 0x80000000u;

  constexpr NodeRef() = default;
  static constexpr NodeRef internal(std::uint32_t i) { return NodeRef(i); }
  static constexpr NodeRef leaf(std::uint32_t i) { return NodeRef(i | kLeafBit); }

  constexpr bool is_null() const { return raw_ == kNullRaw; }
  constexpr bool is_leaf() const { return !is_null() && (raw_ & kLeafBit) != 0; }
  constexpr bool is_internal() const { return !is_null() && (raw_ & kLeafBit) == 0; }
  constexpr std::uint32_t index() const { return raw_ & ~kLeafBit; }

  constexpr bool operator==(const NodeRef&) const = default;

 private:
  constexpr explicit NodeRef(std::uint32_t raw) : raw_(raw) {}
  std::uint32_t raw_ = kNullRaw;
};

struct InternalNode {
  Hash256 hash{};
  Version version = 0;  // max of the children, salts the hash
  Version touched = 0;  // last epoch that changed or marked this node
  NodeRef child[2];
  Depth depth = 0;
  bool dirty = true;
};

struct LeafRecord {
  Hash256 key_hash{};
  Hash256 value_hash{};
  Hash256 hash{};
  Version version = 0;
  Version touched = 0;
  JournalOffset value_offset = 0;  // inside journal segment `version`
  std::uint32_t key_offset = 0;
  std::uint32_t key_len = 0;
  bool dirty = true;
};

struct SubtreeDigest {
  Hash256 hash{};
  Version version = 0;
  bool empty() const { return hash == kEmptyHash; }
  bool operator==(const SubtreeDigest&) const = default;
};

enum class PutResult { Inserted, Updated };
enum class DeleteResult { Deleted, Absent };

struct LeafValue {
  Bytes value;
  Version version = 0;
};

/// The sparse Merkle trees of one shard: 2^subtree_bits crit-bit trees whose
/// nodes live in two shared arenas. Writers mark paths dirty; hashes are
/// only recomputed by recompute().
class ShardTree {
 public:
  ShardTree(Topology topo, std::uint32_t shard_id, Journal journal = {});

  ShardTree(const ShardTree&) = delete;
  ShardTree& operator=(const ShardTree&) = delete;
  ShardTree(ShardTree&&) = default;
  ShardTree& operator=(ShardTree&&) = default;

  PutResult put(std::uint32_t subtree, ByteView key, ByteView value, Version version);
  /// As put(), with the key and value digests already computed.
  PutResult put_hashed(std::uint32_t subtree, ByteView key, const Hash256& key_hash, ByteView value,
                       const Hash256& value_hash, Version version);

  DeleteResult erase(std::uint32_t subtree, ByteView key, Version version);
  DeleteResult erase_hashed(std::uint32_t subtree, ByteView key, const Hash256& key_hash,
                            Version version);

  std::optional<LeafValue> get(std::uint32_t subtree, ByteView key) const;

  /// Rehashes every dirty path of one subtree and returns its root digest.
  SubtreeDigest recompute_subtree_root(std::uint32_t subtree);
  /// Rehashes all dirty subtrees of the shard in shared waves. Returns the
  /// number of nodes hashed.
  std::size_t recompute_all();

  /// Root digest as of the last recompute (all zeros for an empty subtree).
  SubtreeDigest subtree_digest(std::uint32_t subtree) const;
  bool subtree_dirty(std::uint32_t subtree) const { return subtree_dirty_[subtree]; }

  /// Nodes and leaves whose last-change epoch is `version`, children before
  /// parents, left before right.
  std::vector<NodeRef> dirty_nodes_of_version(std::uint32_t subtree, Version version) const;

  /// Marks the path a key hash follows inside a subtree, down to the leaf
  /// it reaches, as changed in `version` without altering any hash.
  void mark_path(std::uint32_t subtree, const Hash256& key_hash, Version version);

  /// Key hashes deleted since the last call.
  std::vector<Hash256> take_deleted();

  std::size_t leaf_count(std::uint32_t subtree) const { return leaf_counts_[subtree]; }
  std::size_t leaf_count() const;

  void set_prefetch(bool on) { prefetch_ = on; }
  /// Advisory: pulls the first nodes on a key's path toward the cache.
  void prefetch_path(std::uint32_t subtree, const Hash256& key_hash) const;

  NodeRef root(std::uint32_t subtree) const { return roots_[subtree]; }
  const InternalNode& node(NodeRef r) const { return nodes_[r.index()]; }
  const LeafRecord& leaf(NodeRef r) const { return leaves_[r.index()]; }
  ByteView key_of(const LeafRecord& l) const { return ByteView(keys_).subspan(l.key_offset, l.key_len); }
  static const Hash256& hash_of(const ShardTree& t, NodeRef r) {
    return r.is_leaf() ? t.leaf(r).hash : t.node(r).hash;
  }
  Version touched_of(NodeRef r) const { return r.is_leaf() ? leaf(r).touched : node(r).touched; }
  Version version_of(NodeRef r) const { return r.is_leaf() ? leaf(r).version : node(r).version; }

  const Topology& topology() const { return topo_; }
  std::uint32_t shard_id() const { return shard_; }
  Journal& journal() { return journal_; }
  const Journal& journal() const { return journal_; }

 private:
  void check_route(std::uint32_t subtree, const Hash256& key_hash) const;
  void check_version(std::uint32_t subtree, Version version) const;
  NodeRef alloc_leaf(ByteView key, const Hash256& kh, const Hash256& vh, JournalOffset off, Version v);
  NodeRef alloc_node(Depth depth, NodeRef left, NodeRef right, Version v);
  void free_leaf(NodeRef r);
  void free_node(NodeRef r);
  void mark_dirty(std::uint32_t subtree);
  std::size_t recompute(std::span<const std::uint32_t> subtrees);

  Topology topo_;
  std::uint32_t shard_;
  Journal journal_;
  bool prefetch_ = true;

  std::vector<InternalNode> nodes_;
  std::vector<LeafRecord> leaves_;
  Bytes keys_;
  std::vector<std::uint32_t> free_nodes_;
  std::vector<std::uint32_t> free_leaves_;

  std::vector<NodeRef> roots_;
  std::vector<Version> latest_;
  std::vector<std::size_t> leaf_counts_;
  std::vector<bool> subtree_dirty_;
  std::vector<std::uint32_t> dirty_list_;
  std::vector<Hash256> deleted_;
};

}  // namespace authkv
