#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>
#include <string>

#include "authkv/tree.hpp"
#include "oracle.hpp"

using namespace authkv;

namespace {

Bytes key_n(std::uint64_t n) {
  std::string s = "key-" + std::to_string(n);
  return Bytes(s.begin(), s.end());
}

Bytes value_n(std::uint64_t n, Version v) {
  std::string s = "value-" + std::to_string(n) + "@" + std::to_string(v);
  return Bytes(s.begin(), s.end());
}

const Topology kFlat{0, 0};

}  // namespace

TEST_CASE("empty and single-leaf subtrees") {
  ShardTree t(kFlat, 0);
  CHECK(t.recompute_subtree_root(0).empty());
  CHECK(t.put(0, key_n(1), value_n(1, 1), 1) == PutResult::Inserted);
  SubtreeDigest d = t.recompute_subtree_root(0);
  CHECK(d.hash == hash_leaf(hash_data(key_n(1)), hash_data(value_n(1, 1)), 1));
  CHECK(d.version == 1);
  CHECK(t.erase(0, key_n(1), 2) == DeleteResult::Deleted);
  CHECK(t.recompute_subtree_root(0).empty());
  CHECK(t.leaf_count() == 0);
  CHECK(t.erase(0, key_n(1), 3) == DeleteResult::Absent);
}

TEST_CASE("two leaves branch at their first differing bit") {
  ShardTree t(kFlat, 0);
  Bytes a = key_n(1), b = key_n(2);
  t.put(0, a, value_n(1, 1), 1);
  t.put(0, b, value_n(2, 2), 2);
  Hash256 ha = hash_data(a), hb = hash_data(b);
  unsigned d = 0;
  while (key_bit(ha, d) == key_bit(hb, d)) ++d;
  Hash256 la = hash_leaf(ha, hash_data(value_n(1, 1)), 1);
  Hash256 lb = hash_leaf(hb, hash_data(value_n(2, 2)), 2);
  Hash256 want = key_bit(ha, d) ? hash_internal(lb, la, 2, static_cast<Depth>(d))
                                : hash_internal(la, lb, 2, static_cast<Depth>(d));
  CHECK(t.recompute_subtree_root(0) == SubtreeDigest{want, 2});
}

TEST_CASE("incremental root matches the full rebuild") {
  std::mt19937_64 rng(5);
  ShardTree t(kFlat, 0);
  oracle::Model m;
  std::vector<std::uint64_t> live;
  std::uint64_t next = 0;
  for (Version v = 1; v <= 40; ++v) {
    int n = 1 + static_cast<int>(rng() % 60);
    for (int i = 0; i < n; ++i) {
      auto r = rng() % 100;
      if (live.empty() || r < 30) {
        std::uint64_t k = next++;
        t.put(0, key_n(k), value_n(k, v), v);
        m.put(key_n(k), value_n(k, v), v);
        live.push_back(k);
      } else if (r < 85) {
        std::uint64_t k = live[rng() % live.size()];
        CHECK(t.put(0, key_n(k), value_n(k, v), v) == PutResult::Updated);
        m.put(key_n(k), value_n(k, v), v);
      } else {
        std::size_t i = rng() % live.size();
        CHECK(t.erase(0, key_n(live[i]), v) == DeleteResult::Deleted);
        m.erase(key_n(live[i]));
        live[i] = live.back();
        live.pop_back();
      }
    }
    SubtreeDigest got = v % 2 ? t.recompute_subtree_root(0) : (t.recompute_all(), t.subtree_digest(0));
    REQUIRE(got == oracle::rebuild(m.all()));
    CHECK(t.leaf_count() == m.size());
  }
  for (const auto& [kh, it] : m.items()) {
    auto got = t.get(0, it.key);
    REQUIRE(got);
    CHECK(got->value == it.value);
    CHECK(got->version == it.version);
  }
}

TEST_CASE("root does not depend on insertion order") {
  std::vector<std::uint64_t> keys(200);
  for (std::size_t i = 0; i < keys.size(); ++i) keys[i] = i;
  ShardTree a(kFlat, 0), b(kFlat, 0);
  for (auto k : keys) a.put(0, key_n(k), value_n(k, 1), 1);
  std::shuffle(keys.begin(), keys.end(), std::mt19937_64(9));
  for (auto k : keys) b.put(0, key_n(k), value_n(k, 1), 1);
  CHECK(a.recompute_subtree_root(0) == b.recompute_subtree_root(0));
}

TEST_CASE("writes are checked against route and version") {
  Topology topo{1, 2};
  ShardTree t(topo, 1);
  // find one key that belongs here and one that does not
  Bytes mine, other;
  std::uint32_t mine_sub = 0;
  for (std::uint64_t i = 0; mine.empty() || other.empty(); ++i) {
    Route r = route(hash_data(key_n(i)), topo);
    if (r.shard == 1 && mine.empty()) {
      mine = key_n(i);
      mine_sub = r.subtree;
    } else if (r.shard == 0 && other.empty()) {
      other = key_n(i);
    }
  }
  CHECK_THROWS_AS(t.put(0, other, value_n(0, 1), 1), RoutingError);
  CHECK_THROWS_AS(t.put((mine_sub + 1) % 4, mine, value_n(0, 1), 1), RoutingError);
  t.put(mine_sub, mine, value_n(0, 1), 5);
  CHECK_THROWS_AS(t.put(mine_sub, mine, value_n(0, 1), 4), VersionError);
  CHECK_THROWS_AS(t.erase(mine_sub, mine, 4), VersionError);
  CHECK_THROWS_AS(t.put(mine_sub, mine, value_n(0, 1), kMaxVersion + 1), DomainError);
  CHECK_THROWS_AS(ShardTree(topo, 2), DomainError);
}

TEST_CASE("version salting") {
  ShardTree a(kFlat, 0), b(kFlat, 0);
  a.put(0, key_n(1), value_n(1, 0), 1);
  b.put(0, key_n(1), value_n(1, 0), 2);
  CHECK(a.recompute_subtree_root(0).hash != b.recompute_subtree_root(0).hash);

  // A -> B -> A leaves a different root than the original A.
  ShardTree c(kFlat, 0);
  c.put(0, key_n(1), value_n(1, 0), 1);
  c.put(0, key_n(2), value_n(2, 0), 1);
  Hash256 r1 = c.recompute_subtree_root(0).hash;
  c.put(0, key_n(1), value_n(9, 9), 2);
  c.recompute_subtree_root(0);
  c.put(0, key_n(1), value_n(1, 0), 3);
  CHECK(c.recompute_subtree_root(0).hash != r1);
}

TEST_CASE("dirty nodes of a version come children first") {
  ShardTree t(kFlat, 0);
  for (int i = 0; i < 50; ++i) t.put(0, key_n(i), value_n(i, 1), 1);
  t.recompute_subtree_root(0);
  t.put(0, key_n(7), value_n(7, 2), 2);
  t.put(0, key_n(8), value_n(8, 2), 2);
  t.recompute_subtree_root(0);
  auto nodes = t.dirty_nodes_of_version(0, 2);
  REQUIRE_FALSE(nodes.empty());
  CHECK(nodes.back() == t.root(0));
  std::size_t leaves = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    CHECK(t.touched_of(nodes[i]) == 2);
    if (nodes[i].is_leaf()) {
      ++leaves;
      continue;
    }
    // each dirty child must already have been listed
    for (NodeRef c : t.node(nodes[i]).child)
      if (t.touched_of(c) == 2) CHECK(std::find(nodes.begin(), nodes.begin() + i, c) != nodes.begin() + i);
  }
  CHECK(leaves == 2);
  CHECK(t.dirty_nodes_of_version(0, 1).size() < 100);
}

TEST_CASE("marking a path leaves hashes alone") {
  ShardTree t(kFlat, 0);
  for (int i = 0; i < 30; ++i) t.put(0, key_n(i), value_n(i, 1), 1);
  SubtreeDigest before = t.recompute_subtree_root(0);
  Hash256 probe = hash_data(key_n(1000));
  t.mark_path(0, probe, 4);
  CHECK_FALSE(t.subtree_dirty(0));
  CHECK(t.recompute_subtree_root(0) == before);
  CHECK(t.touched_of(t.root(0)) == 4);
  NodeRef cur = t.root(0);
  while (cur.is_internal()) cur = t.node(cur).child[key_bit(probe, t.node(cur).depth)];
  CHECK(t.touched_of(cur) == 4);
}

TEST_CASE("deleted key hashes are reported once") {
  ShardTree t(kFlat, 0);
  t.put(0, key_n(1), value_n(1, 1), 1);
  t.put(0, key_n(2), value_n(2, 1), 1);
  t.erase(0, key_n(1), 2);
  t.erase(0, key_n(3), 2);
  CHECK(t.take_deleted() == std::vector<Hash256>{hash_data(key_n(1))});
  CHECK(t.take_deleted().empty());
}
