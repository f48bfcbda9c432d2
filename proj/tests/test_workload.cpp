#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "authkv/snapshot.hpp"
#include "authkv/workload.hpp"

using namespace authkv;
namespace fs = std::filesystem;

namespace {

WorkloadConfig small(std::uint64_t seed) {
  WorkloadConfig c;
  c.seed = seed;
  c.key_count = 1500;
  c.op_count = 12000;
  c.epoch_size = 1000;
  c.topology = Topology{1, 2};
  return c;
}

fs::path fresh_dir(const char* name) {
  fs::path p = fs::temp_directory_path() / name;
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("generator is a pure function of the seed") {
  WorkloadConfig c = small(3);
  OpStream a = generate_ops(c), b = generate_ops(c);
  CHECK(a.preload.size() == c.key_count);
  CHECK(a.ops.size() == c.op_count);
  CHECK(a.preload == b.preload);
  CHECK(a.ops == b.ops);
  c.seed = 4;
  CHECK(generate_ops(c).ops != a.ops);
}

TEST_CASE("rng draws are bounded and reproducible") {
  Rng a(7), b(7);
  for (int i = 0; i < 1000; ++i) {
    auto x = a.below(13);
    CHECK(x < 13);
    CHECK(x == b.below(13));
  }
  CHECK(a.below(1) == 0);
  CHECK_THROWS_AS(a.below(0), std::invalid_argument);
  // mt19937_64 with the default seed 5489, 10000th output, from the C++ standard
  Rng r(5489);
  for (int i = 0; i < 9999; ++i) r.next();
  CHECK(r.next() == 9981545732273789042ull);
}

TEST_CASE("mix parsing") {
  CHECK(parse_mix("90,5,5") == Mix{90, 5, 5});
  CHECK(parse_mix("100,0,0") == Mix{100, 0, 0});
  CHECK_THROWS_AS(parse_mix("90,5"), std::invalid_argument);
  CHECK_THROWS_AS(parse_mix("90,5,6"), std::invalid_argument);
  CHECK_THROWS_AS(parse_mix("90,5,5x"), std::invalid_argument);
}

TEST_CASE("updates only keep the live set constant") {
  WorkloadConfig c = small(1);
  c.mix = {100, 0, 0};
  OpGenerator g(c);
  Op op;
  while (!g.preload_done()) g.next(op);
  CHECK(g.live_keys() == c.key_count);
  while (g.next(op)) CHECK(op.kind == OpKind::Update);
  CHECK(g.live_keys() == c.key_count);
}

TEST_CASE("realized mix is close to the target") {
  WorkloadConfig c = small(2);
  c.op_count = 100'000;
  std::size_t counts[3] = {};
  for (const Op& op : generate_ops(c).ops) ++counts[static_cast<int>(op.kind)];
  // within 1% of 100000, i.e. 1000 ops
  CHECK(counts[0] >= 89'000);
  CHECK(counts[0] <= 91'000);
  CHECK(counts[1] >= 4'000);
  CHECK(counts[1] <= 6'000);
  CHECK(counts[2] >= 4'000);
  CHECK(counts[2] <= 6'000);
}

TEST_CASE("updates and deletes on an empty key set become inserts") {
  WorkloadConfig c = small(5);
  c.key_count = 0;
  c.op_count = 10;
  c.mix = {0, 0, 100};
  auto ops = generate_ops(c).ops;
  for (std::size_t i = 0; i < ops.size(); ++i)
    CHECK(ops[i].kind == (i % 2 == 0 ? OpKind::Insert : OpKind::Delete));
}

TEST_CASE("config validation") {
  WorkloadConfig c = small(1);
  c.mix = {50, 0, 0};
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = small(1);
  c.snapshot_period_ms = 10;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = small(1);
  c.epoch_size = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = small(1);
  c.topology = Topology{15, 15};
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("final root does not depend on snapshots, shards or threads") {
  WorkloadConfig base = small(11);
  RunReport ref = run(base);
  CHECK(ref.ops_applied == base.op_count);
  CHECK(ref.inserts + ref.updates + ref.deletes == base.op_count);
  CHECK(ref.live_keys == base.key_count + ref.inserts - ref.deletes);
  CHECK(ref.commit_ms.size() == 12);
  CHECK(ref.measured_ops > 0);
  CHECK(ref.updates_per_sec > 0);

  for (Topology t : {Topology{0, 0}, Topology{2, 2}, Topology{0, 6}}) {
    WorkloadConfig c = base;
    c.topology = t;
    c.threads = 3;
    CHECK(run(c).final_root == ref.final_root);
  }
  WorkloadConfig c = base;
  c.snapshot_period_ms = 1;
  c.snapshot_dir = fresh_dir("authkv_workload_roots");
  RunReport snap = run(c);
  CHECK(snap.final_root == ref.final_root);
  CHECK_FALSE(snap.snapshots.empty());
  CHECK(snap.snapshot_bytes > 0);
  fs::remove_all(*c.snapshot_dir);
}

TEST_CASE("report text round-trips") {
  RunReport r = run(small(12));
  std::string text = format_report(r);
  CHECK(text.find("prng = mt19937_64/rejection-v1\n") != std::string::npos);
  RunReport back = parse_report(text);
  CHECK(back.config.seed == 12);
  CHECK(back.config.topology == r.config.topology);
  CHECK(back.final_root == r.final_root);
  CHECK(back.final_version == r.final_version);
  CHECK(back.commit_ms.size() == r.commit_ms.size());
  CHECK(back.snapshots == r.snapshots);
  CHECK(parse_report(format_report(back)).commit_ms == back.commit_ms);
  CHECK_THROWS_AS(parse_report("seed 12\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_report("seed = 12\n"), std::invalid_argument);
}

TEST_CASE("verify_run") {
  WorkloadConfig c = small(13);
  c.snapshot_period_ms = 1;
  c.snapshot_dir = fresh_dir("authkv_workload_verify");
  RunReport r = run(c);
  REQUIRE(r.snapshots.size() >= 2);
  REQUIRE(fs::exists(snapshot_file(*c.snapshot_dir, r.final_version)));

  VerifyOutcome ok = verify_run(r, *c.snapshot_dir, 8);
  CHECK_MESSAGE(ok.ok, ok.message);
  CHECK(ok.inclusions == 8 * r.snapshots.size());
  CHECK(ok.exclusions == 8 * r.snapshots.size());

  SUBCASE("wrong trusted root") {
    RunReport bad = r;
    bad.snapshots.begin()->second[5] ^= 1;
    VerifyOutcome v = verify_run(bad, *c.snapshot_dir, 4);
    CHECK_FALSE(v.ok);
    CHECK(v.message.find("v" + std::to_string(bad.snapshots.begin()->first)) != std::string::npos);
  }
  SUBCASE("corrupted snapshot byte") {
    fs::path f = snapshot_file(*c.snapshot_dir, r.snapshots.rbegin()->first);
    {
      std::fstream s(f, std::ios::in | std::ios::out | std::ios::binary);
      auto at = static_cast<std::streamoff>(fs::file_size(f) / 2);
      s.seekg(at);
      char b = static_cast<char>(s.get());
      s.seekp(at);
      s.put(static_cast<char>(b ^ 0x5a));
    }
    CHECK_FALSE(verify_run(r, *c.snapshot_dir, 4).ok);
  }
  SUBCASE("missing snapshot") {
    fs::remove(snapshot_file(*c.snapshot_dir, r.snapshots.begin()->first));
    CHECK_FALSE(verify_run(r, *c.snapshot_dir, 4).ok);
  }
  fs::remove_all(*c.snapshot_dir);
}
