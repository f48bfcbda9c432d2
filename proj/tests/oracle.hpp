// Independent reference models used by the tests. Nothing here touches the
// arenas or the incremental paths; everything is rebuilt from the key set.
#pragma once

#include <map>
#include <optional>
#include <set>
#include <span>
#include <vector>

#include "authkv/hash.hpp"
#include "authkv/snapshot.hpp"
#include "authkv/store.hpp"
#include "authkv/tree.hpp"

namespace oracle {

using namespace authkv;

struct Item {
  Bytes key;
  Bytes value;
  Hash256 kh{};
  Hash256 vh{};
  Version version = 0;
};

using Set = std::vector<const Item*>;

/// First bit at which the key hashes of `s` disagree; s.size() >= 2.
inline unsigned split_bit(const Set& s) {
  for (unsigned d = 0; d < 256; ++d) {
    bool b = key_bit(s[0]->kh, d);
    for (const Item* it : s)
      if (key_bit(it->kh, d) != b) return d;
  }
  throw IntegrityError("duplicate key hash in oracle set");
}

inline std::pair<Set, Set> partition(const Set& s, unsigned d) {
  Set l, r;
  for (const Item* it : s) (key_bit(it->kh, d) ? r : l).push_back(it);
  return {l, r};
}

/// Root digest of a sparse tree over `s`, rebuilt from scratch.
inline SubtreeDigest rebuild(const Set& s) {
  if (s.empty()) return {};
  if (s.size() == 1) return {hash_leaf(s[0]->kh, s[0]->vh, s[0]->version), s[0]->version};
  unsigned d = split_bit(s);
  auto [l, r] = partition(s, d);
  SubtreeDigest a = rebuild(l), b = rebuild(r);
  Version v = std::max(a.version, b.version);
  return {hash_internal(a.hash, b.hash, v, static_cast<Depth>(d)), v};
}

inline std::uint32_t global_index(const Hash256& kh, unsigned levels) {
  std::uint32_t g = 0;
  for (unsigned i = 0; i < levels; ++i) g = g << 1 | (key_bit(kh, i) ? 1u : 0u);
  return g;
}

/// Full-rebuild model of the store: a map of live keys plus the set of key
/// hashes deleted since the last snapshot.
class Model {
 public:
  void put(ByteView key, ByteView value, Version v) {
    Hash256 kh = hash_data(key);
    Item& it = items_[kh];
    it.key.assign(key.begin(), key.end());
    it.value.assign(value.begin(), value.end());
    it.kh = kh;
    it.vh = hash_data(value);
    it.version = v;
  }
  void erase(ByteView key) {
    Hash256 kh = hash_data(key);
    if (items_.erase(kh)) deleted_.insert(kh);
  }
  void apply(const Update& u, Version v) {
    if (u.value)
      put(u.key, *u.value, v);
    else
      erase(u.key);
  }

  /// Batch semantics of the store: only the last write to each key counts.
  void apply_batch(std::span<const Update> batch, Version v) {
    std::map<Hash256, const Update*> last;
    for (const Update& u : batch) last[hash_data(u.key)] = &u;
    for (const Update& u : batch)
      if (last[hash_data(u.key)] == &u) apply(u, v);
  }

  Set all() const {
    Set s;
    for (const auto& [_, it] : items_) s.push_back(&it);
    return s;
  }
  Set subtree(std::uint32_t g, unsigned levels) const {
    Set s;
    for (const auto& [_, it] : items_)
      if (global_index(it.kh, levels) == g) s.push_back(&it);
    return s;
  }
  Hash256 root() const { return rebuild(all()).hash; }
  const Item* find(ByteView key) const {
    auto it = items_.find(hash_data(key));
    return it == items_.end() ? nullptr : &it->second;
  }
  const std::map<Hash256, Item>& items() const { return items_; }
  std::size_t size() const { return items_.size(); }

  /// Where a deleted key hash lands when descending the current tree: at
  /// every branching it follows its own bit, elsewhere it goes where the keys are.
  std::optional<std::uint32_t> landing_subtree(const Hash256& kh, unsigned levels) const {
    Set s = all();
    if (s.empty()) return std::nullopt;
    for (unsigned l = 0; l < levels; ++l) {
      auto [a, b] = partition(s, l);
      if (a.empty() || b.empty()) continue;
      s = key_bit(kh, l) ? b : a;
    }
    return global_index(s[0]->kh, levels);
  }
  const std::set<Hash256>& deleted() const { return deleted_; }
  void snapshot_taken() { deleted_.clear(); }

 private:
  std::map<Hash256, Item> items_;
  std::set<Hash256> deleted_;
};

/// Reference entry-stream writer. Key entries carry the key bytes' position
/// in `keys` instead of a key-region offset.
class RefWriter {
 public:
  RefWriter(Version prev, std::vector<Entry>& out, std::vector<Bytes>& keys)
      : prev_(prev), out_(out), keys_(keys), base_(out.size()) {}

  /// Marks are deleted key hashes whose descent passes through `s`.
  bool current(const Set& s, const std::vector<Hash256>& marks) const {
    if (!marks.empty()) return true;
    for (const Item* it : s)
      if (it->version > prev_) return true;
    return false;
  }

  void write_root(const Set& s, const std::vector<Hash256>& marks) {
    if (!s.empty() && current(s, marks)) save(s, marks);
  }

 private:
  Entry make(const Hash256& h, EntryKind k, bool right, unsigned d, std::uint64_t p) {
    Entry e;
    e.hash = h;
    e.kind = k;
    e.is_right = right;
    e.depth = static_cast<Depth>(d);
    e.payload = p;
    e.next_is_leaf = out_.size() > base_ && out_.back().kind == EntryKind::Key;
    return e;
  }

  void save(const Set& s, const std::vector<Hash256>& marks) {
    if (s.size() == 1) {
      Entry leaf;
      leaf.hash = s[0]->vh;
      leaf.kind = EntryKind::Leaf;
      leaf.payload = s[0]->version;
      out_.push_back(leaf);
      Entry key;
      key.hash = s[0]->kh;
      key.kind = EntryKind::Key;
      key.payload = keys_.size();
      keys_.push_back(s[0]->key);
      out_.push_back(key);
      return;
    }
    unsigned d = split_bit(s);
    auto [l, r] = partition(s, d);
    std::vector<Hash256> ml, mr;
    for (const auto& m : marks) (key_bit(m, d) ? mr : ml).push_back(m);
    SubtreeDigest dl = rebuild(l), dr = rebuild(r);
    Version v = std::max(dl.version, dr.version);
    bool cl = current(l, ml), cr = current(r, mr);
    if (cl && cr) {
      save(l, ml);
      std::uint64_t m = out_.size() - base_;
      out_.push_back(make(dr.hash, EntryKind::Internal, true, d, v));
      save(r, mr);
      out_.push_back(make(dl.hash, EntryKind::Internal, false, d, m));
    } else if (cl) {
      save(l, ml);
      out_.push_back(make(dr.hash, EntryKind::External, true, d, dr.version));
    } else if (cr) {
      save(r, mr);
      out_.push_back(make(dl.hash, EntryKind::External, false, d, dl.version));
    } else {
      out_.push_back(make(dr.hash, EntryKind::External, true, d, dr.version));
      out_.push_back(make(dl.hash, EntryKind::External, false, d, dl.version));
    }
  }

  Version prev_;
  std::vector<Entry>& out_;
  std::vector<Bytes>& keys_;
  std::size_t base_;
};

/// Expected entries of global subtree g for a snapshot taken now.
inline std::vector<Entry> expected_entries(const Model& m, std::uint32_t g, unsigned levels, Version prev,
                                           std::vector<Bytes>& keys) {
  std::vector<Hash256> marks;
  for (const auto& kh : m.deleted())
    if (m.landing_subtree(kh, levels) == g) marks.push_back(kh);
  std::vector<Entry> out;
  RefWriter(prev, out, keys).write_root(m.subtree(g, levels), marks);
  return out;
}

}  // namespace oracle
