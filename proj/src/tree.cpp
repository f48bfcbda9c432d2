// SPDX-License-Identifier: Apache-2.0
#include "authkv/tree.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <string>

#include "authkv/errors.hpp"

namespace authkv {

namespace {

bool same_bytes(ByteView a, ByteView b) {
  return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin());
}

unsigned first_differing_bit(const Hash256& a, const Hash256& b) {
  for (unsigned i = 0; i < a.size(); ++i) {
    auto x = static_cast<unsigned>(a[i] ^ b[i]);
    if (x != 0) return i * 8 + static_cast<unsigned>(std::countr_zero(x));
  }
  return 256;
}

inline void prefetch(const void* p) {
#if defined(__GNUC__) || defined(__clang__)
  __builtin_prefetch(p);
#else
  (void)p;
#endif
}

// Below this many jobs a wave is hashed one digest at a time.
constexpr std::size_t kMinBatch = 4;

}  // namespace

ShardTree::ShardTree(Topology topo, std::uint32_t shard_id, Journal journal)
    : topo_(topo), shard_(shard_id), journal_(std::move(journal)) {
  topo_.validate();
  if (shard_id >= topo_.shard_count()) throw DomainError("shard id outside topology");
  std::size_t n = topo_.subtrees_per_shard();
  roots_.assign(n, NodeRef{});
  latest_.assign(n, 0);
  leaf_counts_.assign(n, 0);
  subtree_dirty_.assign(n, false);
}

void ShardTree::check_route(std::uint32_t subtree, const Hash256& key_hash) const {
  Route r = route(key_hash, topo_);
  if (r.shard != shard_ || r.subtree != subtree)
    throw RoutingError("key routes to shard " + std::to_string(r.shard) + " subtree " +
                       std::to_string(r.subtree) + ", not shard " + std::to_string(shard_) +
                       " subtree " + std::to_string(subtree));
}

void ShardTree::check_version(std::uint32_t subtree, Version version) const {
  if (version > kMaxVersion) throw DomainError("version does not fit in 52 bits");
  if (version < latest_[subtree])
    throw VersionError("version " + std::to_string(version) + " older than " +
                       std::to_string(latest_[subtree]));
}

NodeRef ShardTree::alloc_leaf(ByteView key, const Hash256& kh, const Hash256& vh, JournalOffset off,
                              Version v) {
  LeafRecord rec;
  rec.key_hash = kh;
  rec.value_hash = vh;
  rec.version = v;
  rec.touched = v;
  rec.value_offset = off;
  rec.key_len = static_cast<std::uint32_t>(key.size());
  std::uint32_t idx;
  if (!free_leaves_.empty()) {
    idx = free_leaves_.back();
    free_leaves_.pop_back();
    const LeafRecord& old = leaves_[idx];
    if (old.key_len == key.size()) {
      rec.key_offset = old.key_offset;
      std::memcpy(keys_.data() + rec.key_offset, key.data(), key.size());
    } else {
      rec.key_offset = static_cast<std::uint32_t>(keys_.size());
      append_bytes(keys_, key);
    }
    leaves_[idx] = rec;
  } else {
    idx = static_cast<std::uint32_t>(leaves_.size());
    if (idx >= NodeRef::kLeafBit) throw CapacityError("leaf arena full");
    rec.key_offset = static_cast<std::uint32_t>(keys_.size());
    append_bytes(keys_, key);
    leaves_.push_back(rec);
  }
  if (keys_.size() > 0xFFFFFFFFu) throw CapacityError("key arena exceeds 4 GiB");
  return NodeRef::leaf(idx);
}

NodeRef ShardTree::alloc_node(Depth depth, NodeRef left, NodeRef right, Version v) {
  InternalNode n;
  n.depth = depth;
  n.child[0] = left;
  n.child[1] = right;
  n.touched = v;
  std::uint32_t idx;
  if (!free_nodes_.empty()) {
    idx = free_nodes_.back();
    free_nodes_.pop_back();
    nodes_[idx] = n;
  } else {
    idx = static_cast<std::uint32_t>(nodes_.size());
    if (idx >= NodeRef::kLeafBit) throw CapacityError("node arena full");
    nodes_.push_back(n);
  }
  return NodeRef::internal(idx);
}

void ShardTree::free_leaf(NodeRef r) { free_leaves_.push_back(r.index()); }
void ShardTree::free_node(NodeRef r) { free_nodes_.push_back(r.index()); }

void ShardTree::mark_dirty(std::uint32_t subtree) {
  if (!subtree_dirty_[subtree]) {
    subtree_dirty_[subtree] = true;
    dirty_list_.push_back(subtree);
  }
}

PutResult ShardTree::put(std::uint32_t subtree, ByteView key, ByteView value, Version version) {
  return put_hashed(subtree, key, hash_data(key), value, hash_data(value), version);
}

PutResult ShardTree::put_hashed(std::uint32_t subtree, ByteView key, const Hash256& kh,
                                ByteView value, const Hash256& vh, Version version) {
  check_route(subtree, kh);
  check_version(subtree, version);

  NodeRef cur = roots_[subtree];
  while (cur.is_internal()) cur = nodes_[cur.index()].child[key_bit(kh, nodes_[cur.index()].depth)];

  unsigned delta = 0;
  if (cur.is_leaf()) {
    const LeafRecord& found = leaves_[cur.index()];
    if (found.key_hash == kh) {
      if (!same_bytes(key_of(found), key))
        throw IntegrityError("two distinct keys share one 256-bit key hash");
    } else {
      delta = first_differing_bit(kh, found.key_hash);
    }
  }

  JournalOffset off = journal_.append(version, key, value);
  latest_[subtree] = version;
  mark_dirty(subtree);

  if (cur.is_null()) {
    roots_[subtree] = alloc_leaf(key, kh, vh, off, version);
    ++leaf_counts_[subtree];
    return PutResult::Inserted;
  }

  if (leaves_[cur.index()].key_hash == kh) {
    LeafRecord& l = leaves_[cur.index()];
    l.value_hash = vh;
    l.value_offset = off;
    l.version = version;
    l.touched = version;
    l.dirty = true;
    for (NodeRef n = roots_[subtree]; n.is_internal();) {
      InternalNode& in = nodes_[n.index()];
      in.dirty = true;
      in.touched = version;
      n = in.child[key_bit(kh, in.depth)];
    }
    return PutResult::Updated;
  }

  // Allocate first: the arenas may move, and the descent below keeps a
  // pointer to the link being replaced.
  NodeRef nl = alloc_leaf(key, kh, vh, off, version);
  NodeRef nn = alloc_node(static_cast<Depth>(delta), NodeRef{}, NodeRef{}, version);

  NodeRef* link = &roots_[subtree];
  while (link->is_internal() && nodes_[link->index()].depth < delta) {
    InternalNode& in = nodes_[link->index()];
    in.dirty = true;
    in.touched = version;
    link = &in.child[key_bit(kh, in.depth)];
  }
  bool b = key_bit(kh, delta);
  InternalNode& fresh = nodes_[nn.index()];
  fresh.child[b] = nl;
  fresh.child[!b] = *link;
  *link = nn;
  ++leaf_counts_[subtree];
  return PutResult::Inserted;
}

DeleteResult ShardTree::erase(std::uint32_t subtree, ByteView key, Version version) {
  return erase_hashed(subtree, key, hash_data(key), version);
}

DeleteResult ShardTree::erase_hashed(std::uint32_t subtree, ByteView key, const Hash256& kh,
                                     Version version) {
  check_route(subtree, kh);
  check_version(subtree, version);

  NodeRef path[256];
  bool dirs[256];
  std::size_t depth = 0;
  NodeRef cur = roots_[subtree];
  if (cur.is_null()) return DeleteResult::Absent;
  while (cur.is_internal()) {
    const InternalNode& in = nodes_[cur.index()];
    bool b = key_bit(kh, in.depth);
    path[depth] = cur;
    dirs[depth] = b;
    ++depth;
    cur = in.child[b];
  }
  const LeafRecord& l = leaves_[cur.index()];
  if (l.key_hash != kh || !same_bytes(key_of(l), key)) return DeleteResult::Absent;

  if (depth == 0) {
    roots_[subtree] = NodeRef{};
  } else {
    NodeRef parent = path[depth - 1];
    NodeRef sibling = nodes_[parent.index()].child[!dirs[depth - 1]];
    if (depth == 1)
      roots_[subtree] = sibling;
    else
      nodes_[path[depth - 2].index()].child[dirs[depth - 2]] = sibling;
    free_node(parent);
    for (std::size_t i = 0; i + 1 < depth; ++i) {
      InternalNode& in = nodes_[path[i].index()];
      in.dirty = true;
      in.touched = version;
    }
  }
  free_leaf(cur);
  --leaf_counts_[subtree];
  latest_[subtree] = version;
  deleted_.push_back(kh);
  mark_dirty(subtree);
  return DeleteResult::Deleted;
}

std::optional<LeafValue> ShardTree::get(std::uint32_t subtree, ByteView key) const {
  Hash256 kh = hash_data(key);
  check_route(subtree, kh);
  NodeRef cur = roots_[subtree];
  while (cur.is_internal()) cur = nodes_[cur.index()].child[key_bit(kh, nodes_[cur.index()].depth)];
  if (cur.is_null()) return std::nullopt;
  const LeafRecord& l = leaves_[cur.index()];
  if (l.key_hash != kh || !same_bytes(key_of(l), key)) return std::nullopt;
  JournalRecord rec = journal_.read(l.version, l.value_offset);
  if (!same_bytes(rec.key, key)) throw CorruptionError("journal record holds a different key");
  return LeafValue{std::move(rec.value), l.version};
}

void ShardTree::prefetch_path(std::uint32_t subtree, const Hash256& key_hash) const {
  if (!prefetch_) return;
  NodeRef cur = roots_[subtree];
  for (int i = 0; i < 3 && cur.is_internal(); ++i) {
    const InternalNode& in = nodes_[cur.index()];
    prefetch(&in);
    cur = in.child[key_bit(key_hash, in.depth)];
  }
  if (cur.is_leaf()) prefetch(&leaves_[cur.index()]);
  else if (cur.is_internal()) prefetch(&nodes_[cur.index()]);
}

SubtreeDigest ShardTree::subtree_digest(std::uint32_t subtree) const {
  NodeRef r = roots_[subtree];
  if (r.is_null()) return {};
  return {hash_of(*this, r), version_of(r)};
}

SubtreeDigest ShardTree::recompute_subtree_root(std::uint32_t subtree) {
  if (subtree_dirty_[subtree]) {
    std::uint32_t one = subtree;
    recompute(std::span(&one, 1));
    std::erase(dirty_list_, subtree);
  }
  return subtree_digest(subtree);
}

std::size_t ShardTree::recompute_all() {
  std::size_t n = recompute(dirty_list_);
  dirty_list_.clear();
  return n;
}

std::size_t ShardTree::recompute(std::span<const std::uint32_t> subtrees) {
  // Dirty nodes are grouped by height above the lowest dirty level so each
  // wave only depends on waves already hashed.
  std::vector<std::vector<NodeRef>> waves;
  auto collect = [&](auto& self, NodeRef r) -> int {
    int h;
    if (r.is_leaf()) {
      if (!leaves_[r.index()].dirty) return -1;
      h = 0;
    } else {
      const InternalNode& in = nodes_[r.index()];
      if (!in.dirty) return -1;
      h = 1 + std::max(self(self, in.child[0]), self(self, in.child[1]));
    }
    if (waves.size() <= static_cast<std::size_t>(h)) waves.resize(h + 1);
    waves[h].push_back(r);
    return h;
  };
  for (auto s : subtrees) {
    if (!roots_[s].is_null()) collect(collect, roots_[s]);
    subtree_dirty_[s] = false;
  }

  std::size_t total = 0;
  Bytes inputs;
  std::vector<HashJob> jobs;
  std::vector<Hash256> out;
  for (const auto& wave : waves) {
    inputs.resize(wave.size() * 64);
    jobs.resize(wave.size());
    out.resize(wave.size());
    for (std::size_t i = 0; i < wave.size(); ++i) {
      std::uint8_t* buf = inputs.data() + 64 * i;
      NodeRef r = wave[i];
      if (r.is_leaf()) {
        const LeafRecord& l = leaves_[r.index()];
        std::memcpy(buf, l.key_hash.data(), 32);
        std::memcpy(buf + 32, l.value_hash.data(), 32);
        jobs[i].salt = make_salt(l.version, kLeafDepth);
      } else {
        InternalNode& in = nodes_[r.index()];
        in.version = std::max(version_of(in.child[0]), version_of(in.child[1]));
        std::memcpy(buf, hash_of(*this, in.child[0]).data(), 32);
        std::memcpy(buf + 32, hash_of(*this, in.child[1]).data(), 32);
        if (in.depth >= kLeafDepth) throw DomainError("internal node at the reserved leaf depth");
        jobs[i].salt = make_salt(in.version, in.depth);
      }
      jobs[i].input = ByteView(buf, 64);
    }
    if (wave.size() < kMinBatch) {
      for (std::size_t i = 0; i < wave.size(); ++i) out[i] = Blake2s::digest(jobs[i].input, jobs[i].salt);
    } else {
      batch_hash(jobs, out);
    }
    for (std::size_t i = 0; i < wave.size(); ++i) {
      NodeRef r = wave[i];
      if (r.is_leaf()) {
        leaves_[r.index()].hash = out[i];
        leaves_[r.index()].dirty = false;
      } else {
        nodes_[r.index()].hash = out[i];
        nodes_[r.index()].dirty = false;
      }
    }
    total += wave.size();
  }
  return total;
}

std::vector<NodeRef> ShardTree::dirty_nodes_of_version(std::uint32_t subtree, Version version) const {
  std::vector<NodeRef> out;
  auto walk = [&](auto& self, NodeRef r) -> void {
    if (r.is_null() || touched_of(r) != version) return;
    if (r.is_internal()) {
      self(self, nodes_[r.index()].child[0]);
      self(self, nodes_[r.index()].child[1]);
    }
    out.push_back(r);
  };
  walk(walk, roots_[subtree]);
  return out;
}

void ShardTree::mark_path(std::uint32_t subtree, const Hash256& key_hash, Version version) {
  NodeRef cur = roots_[subtree];
  while (cur.is_internal()) {
    InternalNode& in = nodes_[cur.index()];
    in.touched = std::max(in.touched, version);
    cur = in.child[key_bit(key_hash, in.depth)];
  }
  if (cur.is_leaf()) leaves_[cur.index()].touched = std::max(leaves_[cur.index()].touched, version);
}

std::vector<Hash256> ShardTree::take_deleted() {
  std::vector<Hash256> out;
  out.swap(deleted_);
  return out;
}

std::size_t ShardTree::leaf_count() const {
  std::size_t n = 0;
  for (auto c : leaf_counts_) n += c;
  return n;
}

}  // namespace authkv
