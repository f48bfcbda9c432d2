// SPDX-License-Identifier: Apache-2.0
#include "authkv/journal.hpp"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>

#include "authkv/errors.hpp"

namespace authkv {

namespace fs = std::filesystem;

namespace {

Bytes encode_header(Version version) {
  Bytes out(kJournalMagic, kJournalMagic + 8);
  append_u32_le(out, kJournalFormat);
  append_u64_le(out, version);
  return out;
}

// Parses a record at `offset` of a record stream. Returns the encoded length.
std::size_t parse_record(ByteView stream, JournalOffset offset, JournalRecord* rec) {
  if (offset >= stream.size()) throw CorruptionError("journal offset beyond segment end");
  ByteReader r(stream.subspan(offset), "journal record");
  try {
    auto klen = r.u32();
    auto key = r.take(klen);
    auto vlen = r.u32();
    auto value = r.take(vlen);
    if (rec != nullptr) {
      rec->key.assign(key.begin(), key.end());
      rec->value.assign(value.begin(), value.end());
    }
  } catch (const FormatError&) {
    throw CorruptionError("journal record truncated");
  }
  return r.position();
}

Bytes read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StorageError("cannot open " + path.string());
  Bytes data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw StorageError("read failed on " + path.string());
  return data;
}

}  // namespace

Journal::Journal(fs::path dir, std::uint32_t shard) : dir_(std::move(dir)), shard_(shard) {}

fs::path Journal::segment_path(const fs::path& root, std::uint32_t shard, Version version) {
  char name[32];
  std::snprintf(name, sizeof name, "shard-%03u", shard);
  return root / name / ("v" + std::to_string(version) + ".seg");
}

fs::path Journal::segment_path(Version version) const {
  if (!dir_) throw StateError("in-memory journal has no segment files");
  return segment_path(*dir_, shard_, version);
}

bool Journal::is_sealed(Version version) const {
  auto it = segments_.find(version);
  return it != segments_.end() && it->second.sealed;
}

std::vector<Version> Journal::open_versions() const {
  std::vector<Version> out;
  for (const auto& [v, seg] : segments_)
    if (!seg.sealed) out.push_back(v);
  return out;
}

Journal::Segment& Journal::open_segment(Version version) {
  if (version > kMaxVersion) throw DomainError("journal version does not fit in 52 bits");
  return segments_[version];
}

JournalOffset Journal::append(Version version, ByteView key, ByteView value) {
  Segment& seg = open_segment(version);
  if (seg.sealed) throw StateError("append to sealed journal segment v" + std::to_string(version));
  constexpr auto kMaxLen = std::numeric_limits<std::uint32_t>::max();
  if (key.size() > kMaxLen || value.size() > kMaxLen)
    throw CapacityError("journal record field longer than 2^32-1 bytes");
  std::uint64_t len = 8 + key.size() + value.size();
  if (seg.length + len > kMaxJournalOffset) throw CapacityError("journal segment exceeds 2^52 bytes");

  JournalOffset off = seg.length;
  append_u32_le(seg.records, static_cast<std::uint32_t>(key.size()));
  append_bytes(seg.records, key);
  append_u32_le(seg.records, static_cast<std::uint32_t>(value.size()));
  append_bytes(seg.records, value);
  seg.starts.push_back(off);
  seg.length += len;
  return off;
}

JournalRecord Journal::read(Version version, JournalOffset offset) const {
  auto it = segments_.find(version);
  if (it == segments_.end())
    throw CorruptionError("no journal segment for version " + std::to_string(version));
  const Segment& seg = it->second;
  if (!std::binary_search(seg.starts.begin(), seg.starts.end(), offset))
    throw CorruptionError("journal offset " + std::to_string(offset) + " is not a record start");
  if (seg.sealed && dir_) return read_segment_record(segment_path(version), version, offset);
  JournalRecord rec;
  parse_record(seg.records, offset, &rec);
  return rec;
}

SegmentSummary Journal::seal(Version version) {
  Segment& seg = open_segment(version);
  if (seg.sealed) throw StateError("journal segment v" + std::to_string(version) + " already sealed");
  SegmentSummary sum{seg.starts.size(), seg.length, hash_data(seg.records)};
  if (dir_) {
    fs::path path = segment_path(version);
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw StorageError("cannot create " + path.parent_path().string() + ": " + ec.message());
    Bytes out = encode_header(version);
    append_bytes(out, seg.records);
    append_u64_le(out, sum.record_count);
    append_u64_le(out, sum.byte_length);
    append_bytes(out, sum.checksum);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
    f.flush();
    if (!f) throw StorageError("write failed on " + path.string());
    Bytes().swap(seg.records);
  }
  seg.sealed = true;
  return sum;
}

SegmentFile read_segment_file(const fs::path& path) {
  Bytes data = read_file(path);
  if (data.size() < kJournalHeaderBytes + kJournalFooterBytes)
    throw CorruptionError("journal segment truncated: " + path.string());
  if (std::memcmp(data.data(), kJournalMagic, 8) != 0)
    throw FormatError("not a journal segment: " + path.string());
  if (load_u32_le(data.data() + 8) != kJournalFormat)
    throw FormatError("unsupported journal format in " + path.string());

  SegmentFile out;
  out.version = load_u64_le(data.data() + 12);
  const std::uint8_t* foot = data.data() + data.size() - kJournalFooterBytes;
  out.summary.record_count = load_u64_le(foot);
  out.summary.byte_length = load_u64_le(foot + 8);
  std::copy(foot + 16, foot + 48, out.summary.checksum.begin());
  std::size_t stream_len = data.size() - kJournalHeaderBytes - kJournalFooterBytes;
  if (out.summary.byte_length != stream_len)
    throw CorruptionError("journal payload length mismatch in " + path.string());
  ByteView stream(data.data() + kJournalHeaderBytes, stream_len);
  if (hash_data(stream) != out.summary.checksum)
    throw CorruptionError("journal checksum mismatch in " + path.string());

  JournalOffset off = 0;
  while (off < stream.size()) {
    JournalRecord rec;
    std::size_t n = parse_record(stream, off, &rec);
    out.records.emplace_back(off, std::move(rec));
    off += n;
  }
  if (out.records.size() != out.summary.record_count)
    throw CorruptionError("journal record count mismatch in " + path.string());
  return out;
}

JournalRecord read_segment_record(const fs::path& path, Version version, JournalOffset offset) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StorageError("cannot open " + path.string());
  std::uint8_t hdr[kJournalHeaderBytes];
  in.read(reinterpret_cast<char*>(hdr), sizeof hdr);
  if (!in) throw CorruptionError("journal segment truncated: " + path.string());
  if (std::memcmp(hdr, kJournalMagic, 8) != 0) throw FormatError("not a journal segment: " + path.string());
  if (load_u64_le(hdr + 12) != version) throw CorruptionError("journal segment version mismatch");

  std::error_code ec;
  const std::uint64_t file_size = fs::file_size(path, ec);
  if (ec) throw StorageError("cannot stat " + path.string());
  auto read_exact = [&](std::uint8_t* dst, std::size_t n) {
    if (n > file_size) throw CorruptionError("journal record truncated");
    in.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n) throw CorruptionError("journal record truncated");
  };
  in.seekg(static_cast<std::streamoff>(kJournalHeaderBytes + offset));
  JournalRecord rec;
  std::uint8_t len[4];
  read_exact(len, 4);
  rec.key.resize(load_u32_le(len));
  read_exact(rec.key.data(), rec.key.size());
  read_exact(len, 4);
  rec.value.resize(load_u32_le(len));
  read_exact(rec.value.data(), rec.value.size());
  return rec;
}

}  // namespace authkv
