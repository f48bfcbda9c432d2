// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>

#include "authkv/hash.hpp"

namespace authkv {

/// Static split of the key space. The first shard_bits key-hash bits pick a
/// shard, the next subtree_bits pick a subtree inside it.
struct Topology {
  unsigned shard_bits = 3;
  unsigned subtree_bits = 8;

  static constexpr unsigned kMaxImplicitLevels = 20;

  unsigned implicit_levels() const { return shard_bits + subtree_bits; }
  std::size_t shard_count() const { return std::size_t{1} << shard_bits; }
  std::size_t subtrees_per_shard() const { return std::size_t{1} << subtree_bits; }
  std::size_t subtree_count() const { return std::size_t{1} << implicit_levels(); }

  /// Throws DomainError when the directory would be unreasonably large.
  void validate() const;

  bool operator==(const Topology&) const = default;
};

struct Route {
  std::uint32_t shard = 0;
  std::uint32_t subtree = 0;  // index inside the shard
  std::uint32_t global = 0;   // shard << subtree_bits | subtree

  bool operator==(const Route&) const = default;
};

/// Key-hash bit 0 is the most significant bit of the global subtree index,
/// so subtree order is the left-to-right order of the tree.
Route route(const Hash256& key_hash, const Topology& topo);

}  // namespace authkv
