// SPDX-License-Identifier: Apache-2.0
#include "authkv/snapshot.hpp"

#include <cstring>
#include <fstream>
#include <string>

#include "authkv/errors.hpp"

namespace authkv {

namespace fs = std::filesystem;

std::uint64_t Entry::pack() const {
  return static_cast<std::uint64_t>(kind) | std::uint64_t{is_right} << 2 |
         std::uint64_t{next_is_leaf} << 3 | std::uint64_t{depth} << 4 | payload << 12;
}

Entry Entry::unpack(const Hash256& hash, std::uint64_t word) {
  Entry e;
  e.hash = hash;
  e.kind = static_cast<EntryKind>(word & 3);
  e.is_right = (word >> 2 & 1) != 0;
  e.next_is_leaf = (word >> 3 & 1) != 0;
  e.depth = static_cast<Depth>(word >> 4 & 0xff);
  e.payload = word >> 12;
  if ((e.kind == EntryKind::Key || e.kind == EntryKind::Leaf) && (word & 0xffc) != 0)
    throw FormatError("reserved bits set in a key or leaf entry");
  return e;
}

namespace {

Entry make_entry(const Hash256& h, EntryKind k, bool right, Depth d, std::uint64_t payload,
                 const std::vector<Entry>& out, std::size_t base) {
  if (d > Entry::kMaxDepth) throw CapacityError("branching depth does not fit the entry format");
  if (payload > Entry::kMaxPayload) throw CapacityError("entry payload exceeds 52 bits");
  Entry e;
  e.hash = h;
  e.kind = k;
  e.is_right = right;
  e.depth = d;
  e.payload = payload;
  e.next_is_leaf = out.size() > base && out.back().kind == EntryKind::Key;
  return e;
}

class SubtreeWriter {
 public:
  SubtreeWriter(const ShardTree& t, Version prev, std::vector<Entry>& out, Bytes& keys)
      : t_(t), prev_(prev), out_(out), keys_(keys), base_(out.size()) {}

  bool current(NodeRef r) const { return t_.touched_of(r) > prev_; }

  void save(NodeRef r) {
    if (r.is_leaf()) {
      const LeafRecord& l = t_.leaf(r);
      Entry leaf;
      leaf.hash = l.value_hash;
      leaf.kind = EntryKind::Leaf;
      leaf.payload = l.version;
      out_.push_back(leaf);
      Entry key;
      key.hash = l.key_hash;
      key.kind = EntryKind::Key;
      key.payload = keys_.size();
      if (key.payload > Entry::kMaxPayload) throw CapacityError("key region exceeds 52 bits");
      out_.push_back(key);
      ByteView k = t_.key_of(l);
      append_u32_le(keys_, static_cast<std::uint32_t>(k.size()));
      append_bytes(keys_, k);
      append_u64_le(keys_, l.value_offset);
      return;
    }
    const InternalNode& n = t_.node(r);
    NodeRef lc = n.child[0], rc = n.child[1];
    const Hash256& hl = ShardTree::hash_of(t_, lc);
    const Hash256& hr = ShardTree::hash_of(t_, rc);
    bool cl = current(lc), cr = current(rc);
    if (cl && cr) {
      save(lc);
      std::uint64_t m = out_.size() - base_;
      out_.push_back(make_entry(hr, EntryKind::Internal, true, n.depth, n.version, out_, base_));
      save(rc);
      out_.push_back(make_entry(hl, EntryKind::Internal, false, n.depth, m, out_, base_));
    } else if (cl) {
      save(lc);
      out_.push_back(make_entry(hr, EntryKind::External, true, n.depth, t_.version_of(rc), out_, base_));
    } else if (cr) {
      save(rc);
      out_.push_back(make_entry(hl, EntryKind::External, false, n.depth, t_.version_of(lc), out_, base_));
    } else {
      out_.push_back(make_entry(hr, EntryKind::External, true, n.depth, t_.version_of(rc), out_, base_));
      out_.push_back(make_entry(hl, EntryKind::External, false, n.depth, t_.version_of(lc), out_, base_));
    }
  }

 private:
  const ShardTree& t_;
  Version prev_;
  std::vector<Entry>& out_;
  Bytes& keys_;
  std::size_t base_;
};

void put_file(const fs::path& path, const Bytes& data) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw StorageError("cannot create " + tmp.string());
    f.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
    f.flush();
    if (!f) throw StorageError("write failed on " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw StorageError("cannot rename " + tmp.string() + ": " + ec.message());
}

}  // namespace

void save_subtree(const ShardTree& tree, std::uint32_t subtree, Version prev,
                  std::vector<Entry>& entries, Bytes& key_region) {
  NodeRef root = tree.root(subtree);
  if (root.is_null() || tree.touched_of(root) <= prev) return;
  SubtreeWriter(tree, prev, entries, key_region).save(root);
}

SnapshotData build_snapshot(Store& store) {
  if (store.version() == 0) throw StateError("snapshot before the first commit");
  if (store.last_snapshot() && *store.last_snapshot() >= store.version())
    throw StateError("version " + std::to_string(store.version()) + " already snapshotted");
  store.prepare_snapshot();

  const Topology& t = store.topology();
  Version prev = store.last_snapshot().value_or(0);

  struct Part {
    std::vector<Entry> entries;
    Bytes keys;
    std::vector<std::pair<std::uint64_t, std::uint64_t>> ranges;  // per subtree, local
  };
  std::vector<Part> parts(t.shard_count());
  store.pool().parallel_for(t.shard_count(), [&](std::size_t s) {
    Part& p = parts[s];
    const ShardTree& tree = store.shard(s);
    p.ranges.resize(t.subtrees_per_shard());
    for (std::uint32_t i = 0; i < t.subtrees_per_shard(); ++i) {
      std::size_t b = p.entries.size();
      save_subtree(tree, i, prev, p.entries, p.keys);
      p.ranges[i] = {b, p.entries.size() - b};
    }
  });

  SnapshotData d;
  d.header.version = store.version();
  d.header.prev_version = store.last_snapshot().value_or(kNoSnapshot);
  d.header.topology = t;
  d.directory.resize(t.subtree_count());
  const auto& digests = store.fold().subtree_roots();
  for (std::size_t s = 0; s < parts.size(); ++s) {
    Part& p = parts[s];
    std::uint64_t entry_base = d.entries.size();
    std::uint64_t key_base = d.key_region.size();
    for (Entry& e : p.entries)
      if (e.kind == EntryKind::Key) e.payload += key_base;
    d.entries.insert(d.entries.end(), p.entries.begin(), p.entries.end());
    d.key_region.insert(d.key_region.end(), p.keys.begin(), p.keys.end());
    for (std::size_t i = 0; i < p.ranges.size(); ++i) {
      std::size_t g = s << t.subtree_bits | i;
      d.directory[g] = {entry_base + p.ranges[i].first, p.ranges[i].second, digests[g]};
    }
  }
  d.header.entry_count = d.entries.size();
  d.header.key_region_bytes = d.key_region.size();
  d.root = store.root();
  store.snapshot_written(store.version());
  return d;
}

Bytes encode_snapshot(const SnapshotData& d) {
  Bytes out(kSnapshotMagic, kSnapshotMagic + 8);
  out.reserve(kSnapshotHeaderBytes + d.directory.size() * kDirectoryEntryBytes +
              d.entries.size() * Entry::kBytes + d.key_region.size() + kSnapshotTrailerBytes);
  append_u32_le(out, d.header.format);
  append_u32_le(out, d.header.hash_id);
  append_u64_le(out, d.header.version);
  append_u64_le(out, d.header.prev_version);
  append_u32_le(out, d.header.topology.shard_bits);
  append_u32_le(out, d.header.topology.subtree_bits);
  append_u64_le(out, d.entries.size());
  append_u64_le(out, d.key_region.size());
  for (const auto& de : d.directory) {
    append_u64_le(out, de.begin);
    append_u64_le(out, de.count);
    append_bytes(out, de.root.hash);
    append_u64_le(out, de.root.version);
  }
  for (const auto& e : d.entries) {
    append_bytes(out, e.hash);
    append_u64_le(out, e.pack());
  }
  append_bytes(out, d.key_region);
  append_bytes(out, d.root);
  append_bytes(out, hash_data(out));
  return out;
}

SnapshotSummary write_snapshot(Store& store, const fs::path& file) {
  SnapshotData d = build_snapshot(store);
  Bytes bytes = encode_snapshot(d);
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  put_file(file, bytes);
  std::uint64_t written = 0;
  for (const auto& de : d.directory) written += de.count > 0;
  return {d.header.version, d.header.previous(), d.header.entry_count, written, bytes.size(), d.root};
}

SnapshotReader SnapshotReader::open(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StorageError("cannot open " + path.string());
  Bytes data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw StorageError("read failed on " + path.string());
  return SnapshotReader(std::move(data));
}

SnapshotReader::SnapshotReader(Bytes file) {
  if (file.size() < 8) throw CorruptionError("snapshot truncated");
  if (std::memcmp(file.data(), kSnapshotMagic, 8) != 0) throw FormatError("not a snapshot file");
  if (file.size() < kSnapshotHeaderBytes + kSnapshotTrailerBytes) throw CorruptionError("snapshot truncated");

  ByteReader r(file, "snapshot header");
  r.take(8);
  SnapshotHeader& h = data_.header;
  h.format = r.u32();
  if (h.format != kSnapshotFormat) throw FormatError("unsupported snapshot format " + std::to_string(h.format));
  h.hash_id = r.u32();
  if (h.hash_id != kHashIdBlake2s256) throw FormatError("snapshot uses an unknown hash function");
  h.version = r.u64();
  h.prev_version = r.u64();
  h.topology.shard_bits = r.u32();
  h.topology.subtree_bits = r.u32();
  h.entry_count = r.u64();
  h.key_region_bytes = r.u64();
  try {
    h.topology.validate();
  } catch (const DomainError& e) {
    throw FormatError(std::string("snapshot topology: ") + e.what());
  }
  if (h.version == 0 || h.version > kMaxVersion) throw FormatError("snapshot version out of range");
  if (h.prev_version != kNoSnapshot && h.prev_version >= h.version)
    throw FormatError("previous snapshot version not older than this one");

  const std::uint64_t n_dir = h.topology.subtree_count();
  const std::uint64_t limit = file.size();
  if (h.entry_count > limit / Entry::kBytes || h.key_region_bytes > limit)
    throw CorruptionError("snapshot truncated");
  const std::uint64_t expect = kSnapshotHeaderBytes + n_dir * kDirectoryEntryBytes +
                               h.entry_count * Entry::kBytes + h.key_region_bytes +
                               kSnapshotTrailerBytes;
  if (file.size() != expect) throw CorruptionError("snapshot size does not match its header");

  ByteView body(file.data(), file.size() - 32);
  Hash256 sum;
  std::copy(file.end() - 32, file.end(), sum.begin());
  if (hash_data(body) != sum) throw CorruptionError("snapshot checksum mismatch");

  data_.directory.resize(n_dir);
  std::uint64_t next = 0;
  for (auto& de : data_.directory) {
    de.begin = r.u64();
    de.count = r.u64();
    auto hb = r.take(32);
    std::copy(hb.begin(), hb.end(), de.root.hash.begin());
    de.root.version = r.u64();
    if (de.begin != next) throw FormatError("snapshot directory ranges are not contiguous");
    next += de.count;
    if (next > h.entry_count) throw FormatError("snapshot directory range past the entry stream");
    if (de.count > 0 && de.root.empty()) throw FormatError("entries recorded for an empty subtree");
  }
  if (next != h.entry_count) throw FormatError("snapshot directory does not cover the entry stream");

  data_.entries.resize(h.entry_count);
  for (auto& e : data_.entries) {
    Hash256 eh;
    auto hb = r.take(32);
    std::copy(hb.begin(), hb.end(), eh.begin());
    e = Entry::unpack(eh, r.u64());
  }
  auto kr = r.take(h.key_region_bytes);
  data_.key_region.assign(kr.begin(), kr.end());
  auto rb = r.take(32);
  std::copy(rb.begin(), rb.end(), data_.root.begin());

  for (const auto& e : data_.entries)
    if (e.kind == EntryKind::Key) key_at(e.payload);

  std::vector<SubtreeDigest> roots(n_dir);
  for (std::size_t i = 0; i < n_dir; ++i) roots[i] = data_.directory[i].root;
  fold_ = FoldTree(h.topology.implicit_levels(), std::move(roots));
  if (fold_.root().hash != data_.root) throw CorruptionError("snapshot root does not match its directory");
}

std::span<const Entry> SnapshotReader::entries(std::uint32_t global_subtree) const {
  const DirectoryEntry& de = data_.directory.at(global_subtree);
  return std::span(data_.entries).subspan(de.begin, de.count);
}

KeyRecord SnapshotReader::key_at(std::uint64_t offset) const {
  const Bytes& k = data_.key_region;
  if (offset > k.size() || k.size() - offset < 12) throw FormatError("key offset outside the key region");
  std::uint32_t len = load_u32_le(k.data() + offset);
  if (k.size() - offset - 12 < len) throw FormatError("key record overruns the key region");
  return {ByteView(k.data() + offset + 4, len), load_u64_le(k.data() + offset + 4 + len)};
}

}  // namespace authkv
