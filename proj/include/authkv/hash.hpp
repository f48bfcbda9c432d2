// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <concepts>
#include <cstdint>
#include <span>
#include <vector>

#include "authkv/blake2s.hpp"
#include "authkv/bytes.hpp"
#include "authkv/errors.hpp"

namespace authkv {

using Hash256 = std::array<std::uint8_t, 32>;
using Version = std::uint64_t;
using Depth = std::uint16_t;
using SaltBytes = std::array<std::uint8_t, 8>;

inline constexpr Version kMaxVersion = (Version{1} << 52) - 1;
inline constexpr Depth kLeafDepth = 0xfff;
inline constexpr Hash256 kEmptyHash{};

/// Identifier recorded in snapshot and proof headers for the default hash.
inline constexpr std::uint32_t kHashIdBlake2s256 = 1;

/// 8-byte little-endian encoding of (version << 12) | depth.
SaltBytes make_salt(Version version, Depth depth);

Hash256 hash_data(ByteView data);
Hash256 hash_leaf(const Hash256& key_hash, const Hash256& value_hash, Version version);
Hash256 hash_internal(const Hash256& left, const Hash256& right, Version version, Depth depth);

/// Bit d of a key hash, in the order the tree branches on.
inline bool key_bit(const Hash256& h, unsigned d) { return (h[d / 8] & (1u << (d % 8))) != 0; }

struct HashJob {
  SaltBytes salt{};
  ByteView input;
};

/// Hashes every job; out[i] equals hashing jobs[i] alone. Lanes are refilled
/// independently, so input lengths may differ freely.
void batch_hash(std::span<const HashJob> jobs, std::span<Hash256> out);
std::vector<Hash256> batch_hash(std::span<const HashJob> jobs);

/// One-at-a-time reference for batch_hash.
std::vector<Hash256> sequential_hash(std::span<const HashJob> jobs);

/// A 256-bit hash that accepts an 8-byte salt.
template <class H>
concept SaltedHash = requires(ByteView data, const SaltBytes& salt) {
  { H::digest(data) } -> std::convertible_to<Hash256>;
  { H::digest(data, salt) } -> std::convertible_to<Hash256>;
};

/// The default: BLAKE2s-256 with the salt in its parameter block.
struct Blake2s256 {
  static constexpr std::uint32_t id = kHashIdBlake2s256;
  static Hash256 digest(ByteView data) { return Blake2s::digest(data); }
  static Hash256 digest(ByteView data, const SaltBytes& salt) { return Blake2s::digest(data, salt); }
};

/// Adapts an unsalted 256-bit hash by prepending the salt to the input.
template <class H>
  requires requires(ByteView d) {
    { H::digest(d) } -> std::convertible_to<Hash256>;
  }
struct PrefixSalted {
  static Hash256 digest(ByteView data) { return H::digest(data); }
  static Hash256 digest(ByteView data, const SaltBytes& salt) {
    Bytes buf(salt.begin(), salt.end());
    buf.insert(buf.end(), data.begin(), data.end());
    return H::digest(buf);
  }
};

template <SaltedHash H = Blake2s256>
Hash256 leaf_digest(const Hash256& key_hash, const Hash256& value_hash, Version version) {
  std::array<std::uint8_t, 64> buf;
  std::copy(key_hash.begin(), key_hash.end(), buf.begin());
  std::copy(value_hash.begin(), value_hash.end(), buf.begin() + 32);
  return H::digest(buf, make_salt(version, kLeafDepth));
}

template <SaltedHash H = Blake2s256>
Hash256 internal_digest(const Hash256& left, const Hash256& right, Version version, Depth depth) {
  if (depth >= kLeafDepth) throw DomainError("internal node depth 0xfff is reserved for leaves");
  std::array<std::uint8_t, 64> buf;
  std::copy(left.begin(), left.end(), buf.begin());
  std::copy(right.begin(), right.end(), buf.begin() + 32);
  return H::digest(buf, make_salt(version, depth));
}

}  // namespace authkv
