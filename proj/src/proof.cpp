// SPDX-License-Identifier: Apache-2.0
#include "authkv/proof.hpp"

#include <algorithm>
#include <cstring>
#include <string>

#include "authkv/errors.hpp"

namespace authkv {

TraversalResult traverse(const Hash256& kh, std::span<const Entry> entries) {
  if (entries.empty()) throw FormatError("traversal over an empty entry stream");
  TraversalResult res;
  std::vector<bool> seen(entries.size());
  std::size_t p = entries.size() - 1;

  auto step_back = [&] {
    if (p == 0) throw FormatError("entry stream ends before a leaf is reached");
    --p;
  };
  auto check_flag = [&](const Entry& e) {
    bool want = p > 0 && entries[p - 1].kind == EntryKind::Key;
    if (e.next_is_leaf != want) throw FormatError("next_is_leaf flag disagrees with the stream");
  };
  // A left-hand internal ref points back at its right-hand partner.
  auto partner = [&](const Entry& e) -> const Entry& {
    if (e.payload >= p) throw FormatError("internal tag does not point backwards");
    const Entry& r = entries[e.payload];
    if (r.kind != EntryKind::Internal || !r.is_right || r.depth != e.depth)
      throw FormatError("internal tag does not point at the matching right-hand ref");
    return r;
  };

  for (;;) {
    if (seen[p]) throw FormatError("cycle in entry stream");
    seen[p] = true;
    const Entry& e = entries[p];
    switch (e.kind) {
      case EntryKind::Key:
        res.key_hash = e.hash;
        step_back();
        if (entries[p].kind != EntryKind::Leaf) throw FormatError("key entry without its leaf entry");
        break;
      case EntryKind::Leaf:
        if (!res.key_hash) throw FormatError("leaf entry reached without a key entry");
        res.version = e.payload;
        res.cursor = p;
        res.last = e;
        return res;
      case EntryKind::Internal: {
        check_flag(e);
        const Depth d = e.depth;
        if (key_bit(kh, d) == e.is_right) {
          if (e.is_right) throw FormatError("right-hand internal ref entered from the right");
          partner(e);
          p = static_cast<std::size_t>(e.payload);
          continue;
        }
        Version ver_c = e.is_right ? e.payload : partner(e).payload;
        res.path.push_back({e.hash, e.is_right, d, ver_c, false});
        step_back();
        break;
      }
      case EntryKind::External: {
        check_flag(e);
        const Depth d = e.depth;
        bool latched_here = false;
        if (!res.external && key_bit(kh, d) == e.is_right) {
          res.external = e.payload;
          latched_here = true;
        }
        if (!res.path.empty() && res.path.back().depth == d) {
          res.cursor = p;
          res.last = e;
          return res;
        }
        res.path.push_back({e.hash, e.is_right, d, e.payload, latched_here});
        if (latched_here) res.latch = res.path.size() - 1;
        step_back();
        break;
      }
    }
  }
}

Proof build_proof(ByteView key, const SnapshotReader& snap) {
  const Hash256 kh = hash_data(key);
  Proof p;
  p.snapshot_version = snap.header().version;
  p.claimed_root = snap.root();
  p.key.assign(key.begin(), key.end());

  const FoldTree& fold = snap.fold();
  if (fold.root().empty()) return p;

  std::size_t i = 0;
  for (unsigned l = 0; l < fold.implicit_levels(); ++l) {
    std::size_t want = 2 * i + (key_bit(kh, l) ? 1 : 0);
    std::size_t other = want ^ 1;
    const SubtreeDigest& a = fold.at(l + 1, want);
    const SubtreeDigest& b = fold.at(l + 1, other);
    if (a.empty()) {
      i = other;
      continue;
    }
    i = want;
    if (b.empty()) continue;
    p.steps.push_back({b.hash, (other & 1) != 0, static_cast<Depth>(l), b.version, false});
  }

  const std::size_t bridge = p.steps.size();
  std::optional<std::size_t> latch;
  const DirectoryEntry& de = snap.directory()[i];
  if (de.count == 0) {
    p.terminal.kind = TerminalKind::SubtreeRoot;
    p.terminal.hash = de.root.hash;
    p.terminal.version = de.root.version;
    p.external = de.root.version;
  } else {
    TraversalResult tr = traverse(kh, snap.entries(static_cast<std::uint32_t>(i)));
    p.steps.insert(p.steps.end(), tr.path.begin(), tr.path.end());
    p.external = tr.external;
    if (tr.latch) latch = bridge + *tr.latch;
    if (tr.last.kind == EntryKind::Leaf) {
      p.terminal.kind = TerminalKind::Leaf;
      p.terminal.key_hash = *tr.key_hash;
      p.terminal.value_hash = tr.last.hash;
      p.terminal.version = tr.version;
    } else {
      p.terminal.kind = TerminalKind::External;
      p.terminal.hash = tr.last.hash;
      p.terminal.version = tr.last.payload;
      p.terminal.is_right = tr.last.is_right;
      p.terminal.depth = tr.last.depth;
    }
  }

  // Canonical form: a version only travels with a step if it raises the
  // running maximum, except at the latched step which names the version.
  Version running = p.terminal.version;
  for (std::size_t k = p.steps.size(); k-- > 0;) {
    PathStep& s = p.steps[k];
    s.external = latch && *latch == k;
    if (s.external) {
      running = std::max(running, s.ver_c);
    } else if (s.ver_c > running) {
      running = s.ver_c;
    } else {
      s.ver_c = 0;
    }
  }
  return p;
}

Verdict verify(const Proof& proof, const TrustedRoot& trusted, ByteView key) {
  if (!std::equal(key.begin(), key.end(), proof.key.begin(), proof.key.end()))
    throw InvalidProofError("proof is for a different key");
  return verify(proof, trusted);
}

Verdict verify(const Proof& proof, const TrustedRoot& trusted) {
  if (proof.claimed_root != trusted.root) throw InvalidProofError("proof claims a different root");
  if (proof.snapshot_version != trusted.version) throw InvalidProofError("proof is for a different version");
  const Hash256 kh = hash_data(proof.key);
  const auto& steps = proof.steps;

  std::optional<std::size_t> latch;
  for (std::size_t k = 0; k < steps.size(); ++k) {
    const PathStep& s = steps[k];
    if (s.depth > Entry::kMaxDepth) throw InvalidProofError("path depth out of range");
    if (k > 0 && s.depth <= steps[k - 1].depth) throw InvalidProofError("path depths not increasing");
    if (s.ver_c > kMaxVersion) throw InvalidProofError("step version out of range");
    // Up to the first divergence the path must follow the key; that step is
    // the external witness. Below it the path only rebuilds the other side.
    if (latch) {
      if (s.external) throw InvalidProofError("more than one external step");
      continue;
    }
    bool diverges = key_bit(kh, s.depth) == s.is_right;
    if (diverges != s.external) throw InvalidProofError("step direction disagrees with the key");
    if (diverges) latch = k;
  }

  const Terminal& t = proof.terminal;
  Hash256 h{};
  Version ver_f = 0;
  std::optional<Version> derived;
  if (latch) derived = steps[*latch].ver_c;
  switch (t.kind) {
    case TerminalKind::Empty:
      if (!steps.empty()) throw InvalidProofError("empty terminal below a path");
      break;
    case TerminalKind::Leaf:
      h = hash_leaf(t.key_hash, t.value_hash, t.version);
      ver_f = t.version;
      break;
    case TerminalKind::External:
      if (steps.empty() || steps.back().depth != t.depth || steps.back().is_right || !t.is_right)
        throw InvalidProofError("external terminal does not pair with the last step");
      if (!derived) {
        // Only reachable when the key goes right at the last branching.
        if (!key_bit(kh, t.depth)) throw InvalidProofError("external terminal off the key path");
        derived = t.version;
      }
      h = t.hash;
      ver_f = t.version;
      break;
    case TerminalKind::SubtreeRoot:
      if (latch) throw InvalidProofError("untouched subtree below an external step");
      derived = t.version;
      h = t.hash;
      ver_f = t.version;
      break;
  }

  for (std::size_t k = steps.size(); k-- > 0;) {
    const PathStep& s = steps[k];
    if (!s.external && s.ver_c != 0 && s.ver_c <= ver_f)
      throw InvalidProofError("non-canonical step version");
    ver_f = std::max(ver_f, s.ver_c);
    h = s.is_right ? hash_internal(h, s.peer, ver_f, s.depth) : hash_internal(s.peer, h, ver_f, s.depth);
  }
  if (h != trusted.root) throw InvalidProofError("recomputed root does not match the trusted root");
  if (derived != proof.external) throw InvalidProofError("external version does not match the path");

  Verdict v;
  if (proof.external) {
    v.kind = Verdict::Kind::ExternalVersion;
    v.version = *proof.external;
  } else if (t.kind == TerminalKind::Leaf && t.key_hash == kh) {
    v.kind = Verdict::Kind::Inclusion;
    v.version = t.version;
    v.value_hash = t.value_hash;
  } else {
    v.kind = Verdict::Kind::Exclusion;
  }
  return v;
}

namespace {

std::uint64_t pack_step(const PathStep& s) {
  Entry e;
  e.kind = s.external ? EntryKind::External : EntryKind::Internal;
  e.is_right = s.is_right;
  e.depth = s.depth;
  e.payload = s.ver_c;
  return e.pack();
}

Hash256 read_hash(ByteReader& r) {
  Hash256 h;
  auto b = r.take(32);
  std::copy(b.begin(), b.end(), h.begin());
  return h;
}

std::uint64_t read_version(ByteReader& r) {
  std::uint64_t v = r.u64();
  if (v > kMaxVersion) throw FormatError("proof version exceeds 52 bits");
  return v;
}

}  // namespace

Bytes encode_proof(const Proof& p) {
  if (p.key.size() > 0xFFFFFFFFu || p.steps.size() > 0xFFFFFFFFu) throw CapacityError("proof too large");
  for (const auto& s : p.steps)
    if (s.depth > Entry::kMaxDepth || s.ver_c > kMaxVersion) throw DomainError("proof step out of range");
  Bytes out(kProofMagic, kProofMagic + 8);
  append_u32_le(out, kProofFormat);
  append_u32_le(out, kHashIdBlake2s256);
  append_u64_le(out, p.snapshot_version);
  append_bytes(out, p.claimed_root);
  append_u32_le(out, static_cast<std::uint32_t>(p.key.size()));
  append_bytes(out, p.key);
  const Terminal& t = p.terminal;
  append_u8(out, static_cast<std::uint8_t>(t.kind));
  switch (t.kind) {
    case TerminalKind::Empty:
      break;
    case TerminalKind::Leaf:
      append_bytes(out, t.key_hash);
      append_bytes(out, t.value_hash);
      append_u64_le(out, t.version);
      break;
    case TerminalKind::External: {
      Entry e;
      e.kind = EntryKind::External;
      e.is_right = t.is_right;
      e.depth = t.depth;
      e.payload = t.version;
      append_bytes(out, t.hash);
      append_u64_le(out, e.pack());
      break;
    }
    case TerminalKind::SubtreeRoot:
      append_bytes(out, t.hash);
      append_u64_le(out, t.version);
      break;
  }
  append_u8(out, p.external ? 1 : 0);
  append_u64_le(out, p.external.value_or(0));
  append_u32_le(out, static_cast<std::uint32_t>(p.steps.size()));
  for (const auto& s : p.steps) {
    append_bytes(out, s.peer);
    append_u64_le(out, pack_step(s));
  }
  return out;
}

Proof decode_proof(ByteView bytes) {
  ByteReader r(bytes, "proof");
  auto magic = r.take(8);
  if (!std::equal(magic.begin(), magic.end(), kProofMagic)) throw FormatError("not a proof");
  if (r.u32() != kProofFormat) throw FormatError("unsupported proof format");
  if (r.u32() != kHashIdBlake2s256) throw FormatError("proof uses an unknown hash function");
  Proof p;
  p.snapshot_version = read_version(r);
  p.claimed_root = read_hash(r);
  auto key = r.take(r.u32());
  p.key.assign(key.begin(), key.end());

  Terminal& t = p.terminal;
  std::uint8_t kind = r.u8();
  switch (kind) {
    case 0:
      t.kind = TerminalKind::Empty;
      break;
    case 1:
      t.kind = TerminalKind::Leaf;
      t.key_hash = read_hash(r);
      t.value_hash = read_hash(r);
      t.version = read_version(r);
      break;
    case 2: {
      t.kind = TerminalKind::External;
      t.hash = read_hash(r);
      Entry e = Entry::unpack(t.hash, r.u64());
      if (e.kind != EntryKind::External || e.next_is_leaf)
        throw FormatError("malformed external terminal");
      t.is_right = e.is_right;
      t.depth = e.depth;
      t.version = e.payload;
      break;
    }
    case 3:
      t.kind = TerminalKind::SubtreeRoot;
      t.hash = read_hash(r);
      t.version = read_version(r);
      break;
    default:
      throw FormatError("unknown proof terminal kind");
  }

  std::uint8_t has_ext = r.u8();
  std::uint64_t ext = read_version(r);
  if (has_ext > 1 || (has_ext == 0 && ext != 0)) throw FormatError("malformed external version field");
  if (has_ext) p.external = ext;

  std::uint32_t n = r.u32();
  if (n > r.remaining() / Entry::kBytes) throw FormatError("proof: unexpected end of data");
  p.steps.resize(n);
  for (auto& s : p.steps) {
    s.peer = read_hash(r);
    Entry e = Entry::unpack(s.peer, r.u64());
    if ((e.kind != EntryKind::Internal && e.kind != EntryKind::External) || e.next_is_leaf)
      throw FormatError("malformed proof step");
    s.external = e.kind == EntryKind::External;
    s.is_right = e.is_right;
    s.depth = e.depth;
    s.ver_c = e.payload;
  }
  if (!r.at_end()) throw FormatError("trailing bytes after proof");
  return p;
}

}  // namespace authkv
