// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "authkv/bytes.hpp"
#include "authkv/hash.hpp"
#include "authkv/snapshot.hpp"

namespace authkv {

/// One sibling on the way from the root to the proof terminal.
struct PathStep {
  Hash256 peer{};
  bool is_right = false;  // the peer is the right child
  Depth depth = 0;
  Version ver_c = 0;
  bool external = false;  // the step where the key leaves the written path

  bool operator==(const PathStep&) const = default;
};

struct TraversalResult {
  std::vector<PathStep> path;
  std::optional<Version> external;
  /// Index into path of the step that latched `external`; unset when the
  /// final entry itself latched it or nothing did.
  std::optional<std::size_t> latch;
  std::optional<Hash256> key_hash;  // k_f
  Version version = 0;              // ver_f
  std::size_t cursor = 0;           // P at exit
  Entry last;                       // entry at P: a Leaf, or an External
};

/// Walks a subtree's entry stream backwards from its last entry, choosing
/// sides by the bits of `key_hash`. Throws FormatError on malformed streams.
TraversalResult traverse(const Hash256& key_hash, std::span<const Entry> entries);

enum class TerminalKind : std::uint8_t { Empty = 0, Leaf = 1, External = 2, SubtreeRoot = 3 };

/// What the verifier starts hashing from.
struct Terminal {
  TerminalKind kind = TerminalKind::Empty;
  Hash256 key_hash{};    // Leaf
  Hash256 value_hash{};  // Leaf
  Hash256 hash{};        // External, SubtreeRoot
  Version version = 0;   // Leaf, External, SubtreeRoot
  bool is_right = false; // External
  Depth depth = 0;       // External

  bool operator==(const Terminal&) const = default;
};

struct Proof {
  Version snapshot_version = 0;
  Hash256 claimed_root{};
  Bytes key;
  Terminal terminal;
  std::optional<Version> external;
  std::vector<PathStep> steps;  // root to leaf, implicit levels first

  bool operator==(const Proof&) const = default;
};

/// The commitment a verifier trusts: a state root and the version it is for.
struct TrustedRoot {
  Hash256 root{};
  Version version = 0;
};

struct Verdict {
  enum class Kind { Inclusion, Exclusion, ExternalVersion };
  Kind kind = Kind::Exclusion;
  Version version = 0;   // ExternalVersion: where to look; Inclusion: leaf version
  Hash256 value_hash{};  // Inclusion only

  bool operator==(const Verdict&) const = default;
};

Proof build_proof(ByteView key, const SnapshotReader& snapshot);

/// Throws InvalidProofError unless the proof recomputes the trusted root
/// and is in canonical form.
Verdict verify(const Proof& proof, const TrustedRoot& trusted);
/// As above, additionally requiring the proof to be about `key`.
Verdict verify(const Proof& proof, const TrustedRoot& trusted, ByteView key);

inline constexpr char kProofMagic[8] = {'S', 'M', 'T', 'P', 'R', 'O', 'O', 'F'};
inline constexpr std::uint32_t kProofFormat = 1;

Bytes encode_proof(const Proof& proof);
/// Throws FormatError on anything but a canonical encoding.
Proof decode_proof(ByteView bytes);

}  // namespace authkv
