// SPDX-License-Identifier: Apache-2.0
#include "authkv/workload.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "authkv/errors.hpp"
#include "authkv/journal.hpp"
#include "authkv/proof.hpp"
#include "authkv/snapshot.hpp"
#include "authkv/store.hpp"

namespace authkv {

namespace fs = std::filesystem;

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("Rng::below(0)");
  const std::uint64_t threshold = (0 - n) % n;  // 2^64 mod n
  for (;;) {
    std::uint64_t x = next();
    if (x >= threshold) return x % n;
  }
}

void Rng::fill(std::span<std::uint8_t> out) {
  std::size_t i = 0;
  while (i < out.size()) {
    std::uint64_t w = next();
    for (int b = 0; b < 8 && i < out.size(); ++b, ++i) out[i] = static_cast<std::uint8_t>(w >> (8 * b));
  }
}

Mix parse_mix(const std::string& s) {
  Mix m;
  char tail;
  if (std::sscanf(s.c_str(), "%u,%u,%u%c", &m.update, &m.insert, &m.del, &tail) != 3)
    throw std::invalid_argument("mix must look like 90,5,5");
  if (m.update + m.insert + m.del != 100) throw std::invalid_argument("mix percentages must sum to 100");
  return m;
}

void WorkloadConfig::validate() const {
  if (mix.update + mix.insert + mix.del != 100) throw std::invalid_argument("mix percentages must sum to 100");
  if (epoch_size == 0) throw std::invalid_argument("epoch size must be positive");
  if (threads == 0) throw std::invalid_argument("thread count must be positive");
  if (snapshots_enabled() && !snapshot_dir) throw std::invalid_argument("snapshots need a snapshot directory");
  try {
    topology.validate();
  } catch (const DomainError& e) {
    throw std::invalid_argument(e.what());
  }
}

OpGenerator::OpGenerator(const WorkloadConfig& cfg)
    : cfg_(cfg), rng_(cfg.seed), preload_left_(cfg.key_count), ops_left_(cfg.op_count) {
  cfg_.validate();
  live_.reserve(cfg.key_count + cfg.op_count / 10);
}

Key32 OpGenerator::fresh_key() {
  Key32 k;
  rng_.fill(k);
  return k;
}

Bytes OpGenerator::value() {
  Bytes v(cfg_.value_size);
  rng_.fill(v);
  return v;
}

bool OpGenerator::next(Op& op) {
  if (preload_left_ > 0) {
    --preload_left_;
    op.kind = OpKind::Insert;
    op.key = fresh_key();
    op.value = value();
    live_.push_back(op.key);
    return true;
  }
  if (ops_left_ == 0) return false;
  --ops_left_;
  std::uint64_t r = rng_.below(100);
  OpKind kind = r < cfg_.mix.update                     ? OpKind::Update
                : r < cfg_.mix.update + cfg_.mix.insert ? OpKind::Insert
                                                        : OpKind::Delete;
  if (live_.empty()) kind = OpKind::Insert;
  op.kind = kind;
  switch (kind) {
    case OpKind::Insert:
      op.key = fresh_key();
      op.value = value();
      live_.push_back(op.key);
      break;
    case OpKind::Update:
      op.key = live_[rng_.below(live_.size())];
      op.value = value();
      break;
    case OpKind::Delete: {
      std::size_t i = rng_.below(live_.size());
      op.key = live_[i];
      op.value.clear();
      live_[i] = live_.back();
      live_.pop_back();
      break;
    }
  }
  return true;
}

OpStream generate_ops(const WorkloadConfig& cfg) {
  OpGenerator g(cfg);
  OpStream s;
  Op op;
  while (!g.preload_done() && g.next(op)) s.preload.push_back(op);
  while (g.next(op)) s.ops.push_back(op);
  return s;
}

fs::path snapshot_file(const fs::path& dir, Version v) { return dir / ("v" + std::to_string(v) + ".snap"); }
fs::path journal_dir(const fs::path& snapshot_dir) { return snapshot_dir / "journal"; }

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

Update to_update(const Op& op) {
  if (op.kind == OpKind::Delete) return Update::erase(op.key);
  return Update::put(op.key, op.value);
}

}  // namespace

RunReport run(const WorkloadConfig& cfg) {
  cfg.validate();
  RunReport rep;
  rep.config = cfg;
  rep.hardware_threads = std::thread::hardware_concurrency();

  StoreOptions so;
  so.topology = cfg.topology;
  so.threads = cfg.threads;
  so.prefetch = cfg.prefetch;
  if (cfg.snapshots_enabled()) {
    fs::create_directories(*cfg.snapshot_dir);
    so.journal_dir = journal_dir(*cfg.snapshot_dir);
  }
  Store store(so);
  OpGenerator gen(cfg);

  Version version = 0;
  Clock::time_point last_snapshot{};
  bool any_snapshot = false;
  auto snapshot = [&] {
    auto t0 = Clock::now();
    SnapshotSummary s = write_snapshot(store, snapshot_file(*cfg.snapshot_dir, store.version()));
    rep.snapshot_seconds += seconds_since(t0);
    rep.snapshot_bytes += s.file_bytes;
    rep.snapshots[s.version] = s.root;
    last_snapshot = Clock::now();
    any_snapshot = true;
  };

  std::vector<Update> batch;
  batch.reserve(cfg.epoch_size);
  Op op;

  // Preload in epochs; never measured.
  while (!gen.preload_done()) {
    batch.clear();
    while (batch.size() < cfg.epoch_size && !gen.preload_done() && gen.next(op)) batch.push_back(to_update(op));
    store.apply_batch(batch, ++version);
    store.commit(version);
    ++rep.epochs;
    if (cfg.snapshots_enabled() && !any_snapshot) snapshot();
  }

  const std::size_t warmup = cfg.op_count / 10;
  std::size_t done = 0;
  while (gen.ops_left() > 0) {
    batch.clear();
    std::size_t first = done;
    while (batch.size() < cfg.epoch_size && gen.next(op)) {
      batch.push_back(to_update(op));
      switch (op.kind) {
        case OpKind::Insert: ++rep.inserts; break;
        case OpKind::Update: ++rep.updates; break;
        case OpKind::Delete: ++rep.deletes; break;
      }
    }
    done += batch.size();

    auto t0 = Clock::now();
    BatchResult br = store.apply_batch(batch, ++version);
    if (!br.errors.empty())
      throw Error("update " + std::to_string(br.errors.front().index) + " failed: " + br.errors.front().message);
    auto tc = Clock::now();
    store.commit(version);
    rep.commit_ms.push_back(seconds_since(tc) * 1e3);
    ++rep.epochs;
    rep.ops_applied += batch.size();
    if (cfg.snapshots_enabled()) {
      auto since = std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - last_snapshot);
      if (static_cast<std::uint64_t>(since.count()) >= cfg.snapshot_period_ms || gen.ops_left() == 0)
        snapshot();
    }
    if (first >= warmup) {
      rep.measured_ops += batch.size();
      rep.measured_seconds += seconds_since(t0);
    }
  }
  if (cfg.snapshots_enabled() && (!any_snapshot || rep.snapshots.rbegin()->first != store.version()))
    snapshot();

  if (rep.measured_ops == 0) {
    // Too few epochs for a steady-state window; fall back to the whole run.
    rep.measured_ops = rep.ops_applied;
    for (double ms : rep.commit_ms) rep.measured_seconds += ms / 1e3;
  }
  rep.updates_per_sec = rep.measured_seconds > 0 ? rep.measured_ops / rep.measured_seconds : 0;
  rep.live_keys = store.leaf_count();
  rep.final_version = store.version();
  rep.final_root = store.root();
  return rep;
}

namespace {

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

double percentile(std::vector<double> v, double q) {
  if (v.empty()) return 0;
  std::sort(v.begin(), v.end());
  std::size_t i = static_cast<std::size_t>(q * static_cast<double>(v.size() - 1) + 0.5);
  return v[std::min(i, v.size() - 1)];
}

Hash256 parse_hash(const std::string& hex) {
  Bytes b = from_hex(hex);
  if (b.size() != 32) throw std::invalid_argument("expected a 32-byte hex digest");
  Hash256 h;
  std::copy(b.begin(), b.end(), h.begin());
  return h;
}

}  // namespace

std::string format_report(const RunReport& r) {
  const WorkloadConfig& c = r.config;
  std::ostringstream o;
  auto kv = [&](const std::string& k, const auto& v) { o << k << " = " << v << '\n'; };
  kv("prng", kPrngId);
  kv("seed", c.seed);
  kv("keys", c.key_count);
  kv("ops", c.op_count);
  kv("mix", std::to_string(c.mix.update) + "," + std::to_string(c.mix.insert) + "," + std::to_string(c.mix.del));
  kv("value_size", c.value_size);
  kv("shard_bits", c.topology.shard_bits);
  kv("subtree_bits", c.topology.subtree_bits);
  kv("threads", c.threads);
  kv("epoch_size", c.epoch_size);
  kv("snapshot_period_ms", c.snapshot_period_ms);
  kv("prefetch", c.prefetch ? 1 : 0);
  kv("hardware_threads", r.hardware_threads);
  kv("epochs", r.epochs);
  kv("ops_applied", r.ops_applied);
  kv("inserts", r.inserts);
  kv("updates", r.updates);
  kv("deletes", r.deletes);
  kv("live_keys", r.live_keys);
  kv("measured_ops", r.measured_ops);
  kv("measured_seconds", fmt_double(r.measured_seconds));
  kv("updates_per_sec", fmt_double(r.updates_per_sec));
  double mean = 0;
  for (double ms : r.commit_ms) mean += ms;
  if (!r.commit_ms.empty()) mean /= static_cast<double>(r.commit_ms.size());
  kv("commit_ms_mean", fmt_double(mean));
  kv("commit_ms_p50", fmt_double(percentile(r.commit_ms, 0.5)));
  kv("commit_ms_p99", fmt_double(percentile(r.commit_ms, 0.99)));
  kv("commit_ms_max", fmt_double(r.commit_ms.empty() ? 0 : *std::max_element(r.commit_ms.begin(), r.commit_ms.end())));
  std::string all;
  for (double ms : r.commit_ms) all += (all.empty() ? "" : ",") + fmt_double(ms);
  kv("commit_ms", all);
  kv("snapshot_count", r.snapshots.size());
  kv("snapshot_bytes", r.snapshot_bytes);
  kv("snapshot_seconds", fmt_double(r.snapshot_seconds));
  for (const auto& [v, root] : r.snapshots) kv("snapshot." + std::to_string(v), to_hex(root));
  kv("final_version", r.final_version);
  kv("final_root", to_hex(r.final_root));
  return o.str();
}

RunReport parse_report(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    auto eq = line.find(" = ");
    if (eq == std::string::npos) throw std::invalid_argument("malformed report line: " + line);
    kv[line.substr(0, eq)] = line.substr(eq + 3);
  }
  auto get = [&](const std::string& k) -> const std::string& {
    auto it = kv.find(k);
    if (it == kv.end()) throw std::invalid_argument("report lacks " + k);
    return it->second;
  };
  auto num = [&](const std::string& k) { return std::stoull(get(k)); };

  RunReport r;
  if (get("prng") != kPrngId) throw std::invalid_argument("report uses a different PRNG");
  WorkloadConfig& c = r.config;
  c.seed = num("seed");
  c.key_count = num("keys");
  c.op_count = num("ops");
  c.mix = parse_mix(get("mix"));
  c.value_size = num("value_size");
  c.topology.shard_bits = static_cast<unsigned>(num("shard_bits"));
  c.topology.subtree_bits = static_cast<unsigned>(num("subtree_bits"));
  c.threads = num("threads");
  c.epoch_size = num("epoch_size");
  c.snapshot_period_ms = num("snapshot_period_ms");
  c.prefetch = num("prefetch") != 0;
  r.hardware_threads = static_cast<unsigned>(num("hardware_threads"));
  r.epochs = num("epochs");
  r.ops_applied = num("ops_applied");
  r.inserts = num("inserts");
  r.updates = num("updates");
  r.deletes = num("deletes");
  r.live_keys = num("live_keys");
  r.measured_ops = num("measured_ops");
  r.measured_seconds = std::stod(get("measured_seconds"));
  r.updates_per_sec = std::stod(get("updates_per_sec"));
  std::istringstream ms(get("commit_ms"));
  for (std::string tok; std::getline(ms, tok, ',');) r.commit_ms.push_back(std::stod(tok));
  r.snapshot_bytes = num("snapshot_bytes");
  r.snapshot_seconds = std::stod(get("snapshot_seconds"));
  for (const auto& [k, v] : kv)
    if (k.rfind("snapshot.", 0) == 0) r.snapshots[std::stoull(k.substr(9))] = parse_hash(v);
  if (r.snapshots.size() != num("snapshot_count")) throw std::invalid_argument("snapshot list incomplete");
  r.final_version = num("final_version");
  r.final_root = parse_hash(get("final_root"));
  return r;
}

namespace {

class Verifier {
 public:
  Verifier(const RunReport& rep, const fs::path& dir) : rep_(rep), dir_(dir) {}

  const SnapshotReader& reader(Version v) {
    auto it = readers_.find(v);
    if (it == readers_.end()) it = readers_.emplace(v, SnapshotReader::open(snapshot_file(dir_, v))).first;
    return it->second;
  }

  TrustedRoot trusted(Version v) const { return {rep_.snapshots.at(v), v}; }

  /// Proves `key` at snapshot v, following ExternalVersion verdicts into
  /// older snapshots.
  Verdict prove(ByteView key, Version v, std::size_t& hops) {
    for (;;) {
      const SnapshotReader& r = reader(v);
      Proof p = build_proof(key, r);
      Proof wire = decode_proof(encode_proof(p));
      Verdict verdict = verify(wire, trusted(v), key);
      if (verdict.kind != Verdict::Kind::ExternalVersion) return verdict;
      // Walk back one snapshot at a time: the first one that resolves the
      // key saw its latest change. Jumping straight to verdict.version would
      // miss deletes, which do not raise versions.
      auto prev = r.header().previous();
      if (!prev || *prev < verdict.version)
        throw InvalidProofError("ExternalVersion " + std::to_string(verdict.version) +
                                " has no earlier snapshot to follow");
      if (!rep_.snapshots.contains(*prev))
        throw InvalidProofError("previous snapshot " + std::to_string(*prev) + " missing from the report");
      v = *prev;
      ++hops;
    }
  }

 private:
  const RunReport& rep_;
  fs::path dir_;
  std::map<Version, SnapshotReader> readers_;
};

}  // namespace

VerifyOutcome verify_run(const RunReport& rep, const fs::path& dir, std::size_t samples) {
  VerifyOutcome out;
  auto fail = [&](const std::string& msg) {
    out.ok = false;
    out.message = msg;
    return out;
  };
  if (rep.snapshots.empty()) return fail("report lists no snapshots");
  if (rep.snapshots.rbegin()->first != rep.final_version || rep.snapshots.rbegin()->second != rep.final_root)
    return fail("last snapshot does not carry the final root of the run");

  Verifier ver(rep, dir);
  std::optional<Version> expected_prev;
  Version current = 0;
  try {
    for (const auto& [v, root] : rep.snapshots) {
      current = v;
      const SnapshotReader& r = ver.reader(v);
      if (r.header().version != v) return fail("snapshot v" + std::to_string(v) + " has a different version inside");
      if (r.root() != root) return fail("snapshot v" + std::to_string(v) + " root differs from the report");
      if (r.header().previous() != expected_prev)
        return fail("snapshot v" + std::to_string(v) + " does not chain to the previous snapshot");
      if (r.header().topology != rep.config.topology)
        return fail("snapshot v" + std::to_string(v) + " topology differs from the report");
      expected_prev = v;

      Rng rng(rep.config.seed ^ (v * 0x9E3779B97F4A7C15ull));
      std::vector<std::size_t> keys;
      auto all = r.all_entries();
      for (std::size_t i = 0; i < all.size(); ++i)
        if (all[i].kind == EntryKind::Key) keys.push_back(i);
      for (std::size_t s = 0; s < samples && !keys.empty(); ++s) {
        std::size_t i = keys[rng.below(keys.size())];
        KeyRecord kr = r.key_at(all[i].payload);
        std::size_t hops = 0;
        Verdict vd = ver.prove(kr.key, v, hops);
        if (vd.kind != Verdict::Kind::Inclusion)
          return fail("present key " + to_hex(kr.key) + " not included at v" + std::to_string(v));
        if (vd.value_hash != all[i - 1].hash) return fail("inclusion proof and snapshot disagree on the value");
        fs::path seg = Journal::segment_path(journal_dir(dir), route(hash_data(kr.key), rep.config.topology).shard,
                                             vd.version);
        if (fs::exists(seg)) {
          JournalRecord rec = read_segment_record(seg, vd.version, kr.value_offset);
          if (!std::equal(rec.key.begin(), rec.key.end(), kr.key.begin(), kr.key.end()) ||
              hash_data(rec.value) != vd.value_hash)
            return fail("journal value for " + to_hex(kr.key) + " does not match its proof");
        }
        ++out.inclusions;
      }
      for (std::size_t s = 0; s < samples; ++s) {
        Key32 k;
        rng.fill(k);
        std::size_t hops = 0;
        Verdict vd = ver.prove(k, v, hops);
        if (vd.kind != Verdict::Kind::Exclusion)
          return fail("random key " + to_hex(k) + " not excluded at v" + std::to_string(v));
        out.chained += hops > 0;
        ++out.exclusions;
      }
    }
  } catch (const Error& e) {
    return fail("v" + std::to_string(current) + ": " + e.what());
  }
  return out;
}

}  // namespace authkv
