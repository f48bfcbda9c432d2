// SPDX-License-Identifier: Apache-2.0
#include "authkv/store.hpp"

#include <algorithm>
#include <cstring>
#include <unordered_set>

#include "authkv/errors.hpp"

namespace authkv {

SubtreeDigest fold_pair(const SubtreeDigest& left, const SubtreeDigest& right, Depth depth) {
  if (left.empty()) return right;
  if (right.empty()) return left;
  Version v = std::max(left.version, right.version);
  return {hash_internal(left.hash, right.hash, v, depth), v};
}

FoldTree::FoldTree(unsigned implicit_levels, std::vector<SubtreeDigest> subtree_roots) {
  if (subtree_roots.size() != (std::size_t{1} << implicit_levels))
    throw std::invalid_argument("FoldTree: need 2^L subtree roots");
  levels_.resize(implicit_levels + 1);
  levels_[implicit_levels] = std::move(subtree_roots);
  for (unsigned l = implicit_levels; l-- > 0;) {
    auto& up = levels_[l];
    const auto& down = levels_[l + 1];
    up.resize(std::size_t{1} << l);
    for (std::size_t i = 0; i < up.size(); ++i)
      up[i] = fold_pair(down[2 * i], down[2 * i + 1], static_cast<Depth>(l));
  }
}

void FoldTree::update(std::span<const std::uint32_t> changed) {
  std::vector<std::uint32_t> idx(changed.begin(), changed.end());
  for (unsigned l = implicit_levels(); l-- > 0;) {
    for (auto& i : idx) i >>= 1;
    std::sort(idx.begin(), idx.end());
    idx.erase(std::unique(idx.begin(), idx.end()), idx.end());
    const auto& down = levels_[l + 1];
    for (auto i : idx) levels_[l][i] = fold_pair(down[2 * i], down[2 * i + 1], static_cast<Depth>(l));
  }
}

std::optional<std::uint32_t> FoldTree::descend(const Hash256& key_hash) const {
  if (root().empty()) return std::nullopt;
  std::size_t i = 0;
  for (unsigned l = 0; l < implicit_levels(); ++l) {
    std::size_t want = 2 * i + (key_bit(key_hash, l) ? 1 : 0);
    i = levels_[l + 1][want].empty() ? (want ^ 1) : want;
  }
  return static_cast<std::uint32_t>(i);
}

Store::Store(StoreOptions opts) : opts_(std::move(opts)) {
  opts_.topology.validate();
  pool_ = std::make_unique<ThreadPool>(std::max<std::size_t>(1, opts_.threads));
  const Topology& t = opts_.topology;
  shards_.reserve(t.shard_count());
  for (std::uint32_t s = 0; s < t.shard_count(); ++s) {
    Journal j = opts_.journal_dir ? Journal(*opts_.journal_dir, s) : Journal();
    shards_.emplace_back(t, s, std::move(j));
    shards_.back().set_prefetch(opts_.prefetch);
  }
  fold_ = FoldTree(t.implicit_levels(), std::vector<SubtreeDigest>(t.subtree_count()));
}

std::size_t Store::leaf_count() const {
  std::size_t n = 0;
  for (const auto& s : shards_) n += s.leaf_count();
  return n;
}

namespace {

struct Prepared {
  Hash256 key_hash;
  Hash256 value_hash;
  Route route;
};

struct HashPrefix {
  std::size_t operator()(const Hash256& h) const {
    std::size_t v;
    std::memcpy(&v, h.data(), sizeof v);
    return v;
  }
};

}  // namespace

BatchResult Store::apply_batch(std::span<const Update> updates, Version version) {
  if (version == 0 || version > kMaxVersion) throw DomainError("versions start at 1 and fit 52 bits");
  if (version <= committed_)
    throw VersionError("version " + std::to_string(version) + " is not after committed version " +
                       std::to_string(committed_));
  if (pending_updates_ > 0 && version < pending_)
    throw VersionError("version " + std::to_string(version) + " older than the open epoch");
  BatchResult res;
  if (updates.empty()) return res;
  pending_ = version;

  // Phase 1: hash and route, in parallel chunks.
  std::vector<Prepared> prep(updates.size());
  constexpr std::size_t kChunk = 4096;
  std::size_t chunks = (updates.size() + kChunk - 1) / kChunk;
  pool_->parallel_for(chunks, [&](std::size_t c) {
    std::size_t end = std::min(updates.size(), (c + 1) * kChunk);
    for (std::size_t i = c * kChunk; i < end; ++i) {
      prep[i].key_hash = hash_data(updates[i].key);
      if (updates[i].value) prep[i].value_hash = hash_data(*updates[i].value);
      prep[i].route = route(prep[i].key_hash, opts_.topology);
    }
  });

  std::vector<std::vector<std::uint32_t>> per_shard(shards_.size());
  for (std::uint32_t i = 0; i < updates.size(); ++i) per_shard[prep[i].route.shard].push_back(i);

  struct ShardOutcome {
    BatchResult r;
  };
  std::vector<ShardOutcome> outcome(shards_.size());

  // Phase 2: one writer per shard.
  pool_->parallel_for(shards_.size(), [&](std::size_t s) {
    auto& list = per_shard[s];
    BatchResult& r = outcome[s].r;
    // Last writer wins: keep only the final write to each key.
    std::unordered_set<Hash256, HashPrefix> seen;
    std::vector<std::uint32_t> keep;
    keep.reserve(list.size());
    for (auto it = list.rbegin(); it != list.rend(); ++it) {
      if (seen.insert(prep[*it].key_hash).second)
        keep.push_back(*it);
      else
        ++r.superseded;
    }
    std::reverse(keep.begin(), keep.end());

    ShardTree& tree = shards_[s];
    constexpr std::size_t kAhead = 8;
    for (std::size_t j = 0; j < keep.size(); ++j) {
      if (j + kAhead < keep.size()) {
        const auto& p = prep[keep[j + kAhead]];
        tree.prefetch_path(p.route.subtree, p.key_hash);
      }
      std::uint32_t i = keep[j];
      const Update& u = updates[i];
      const Prepared& p = prep[i];
      try {
        if (u.value) {
          auto pr = tree.put_hashed(p.route.subtree, u.key, p.key_hash, *u.value, p.value_hash, version);
          ++(pr == PutResult::Inserted ? r.inserted : r.updated);
        } else {
          auto dr = tree.erase_hashed(p.route.subtree, u.key, p.key_hash, version);
          ++(dr == DeleteResult::Deleted ? r.deleted : r.absent);
        }
        ++r.applied;
      } catch (const Error& e) {
        r.errors.push_back({i, e.what()});
      }
    }
  });

  for (auto& o : outcome) {
    res.applied += o.r.applied;
    res.inserted += o.r.inserted;
    res.updated += o.r.updated;
    res.deleted += o.r.deleted;
    res.absent += o.r.absent;
    res.superseded += o.r.superseded;
    res.errors.insert(res.errors.end(), o.r.errors.begin(), o.r.errors.end());
  }
  std::sort(res.errors.begin(), res.errors.end(),
            [](const KeyError& a, const KeyError& b) { return a.index < b.index; });
  pending_updates_ += res.applied;
  return res;
}

CommitResult Store::commit(Version version) {
  if (version == committed_ && pending_updates_ == 0 && last_commit_) return *last_commit_;
  if (version <= committed_)
    throw VersionError("commit version " + std::to_string(version) + " is not after " +
                       std::to_string(committed_));
  if (pending_updates_ > 0 && version != pending_)
    throw VersionError("commit version differs from the open epoch");
  if (version > kMaxVersion) throw DomainError("version does not fit in 52 bits");

  const Topology& t = opts_.topology;
  std::vector<std::vector<std::uint32_t>> changed(shards_.size());
  std::vector<std::size_t> rehashed(shards_.size());
  pool_->parallel_for(shards_.size(), [&](std::size_t s) {
    ShardTree& tree = shards_[s];
    for (std::uint32_t i = 0; i < t.subtrees_per_shard(); ++i)
      if (tree.subtree_dirty(i)) changed[s].push_back(static_cast<std::uint32_t>(s << t.subtree_bits | i));
    rehashed[s] = tree.recompute_all();
    for (Version v : tree.journal().open_versions())
      if (v <= version) tree.journal().seal(v);
  });

  std::vector<std::uint32_t> all_changed;
  CommitResult res;
  for (std::size_t s = 0; s < shards_.size(); ++s) {
    for (auto g : changed[s]) {
      fold_.set(g, shards_[s].subtree_digest(g & ((1u << t.subtree_bits) - 1)));
      all_changed.push_back(g);
    }
    res.nodes_rehashed += rehashed[s];
    auto del = shards_[s].take_deleted();
    deleted_since_snapshot_.insert(deleted_since_snapshot_.end(), del.begin(), del.end());
  }
  fold_.update(all_changed);

  res.root = fold_.root().hash;
  res.version = version;
  res.subtree_roots = fold_.subtree_roots();
  res.updates_applied = pending_updates_;
  committed_ = version;
  pending_ = 0;
  pending_updates_ = 0;
  last_commit_ = res;
  return res;
}

std::optional<LeafValue> Store::get(ByteView key) const {
  Route r = route(hash_data(key), opts_.topology);
  return shards_[r.shard].get(r.subtree, key);
}

void Store::prepare_snapshot() {
  if (pending_updates_ > 0) throw StateError("snapshot requested with uncommitted updates");
  const Topology& t = opts_.topology;
  for (const Hash256& kh : deleted_since_snapshot_) {
    auto g = fold_.descend(kh);
    if (!g) break;
    shards_[*g >> t.subtree_bits].mark_path(*g & ((1u << t.subtree_bits) - 1), kh, committed_);
  }
  deleted_since_snapshot_.clear();
}

}  // namespace authkv
