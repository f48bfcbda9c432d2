// SPDX-License-Identifier: Apache-2.0
#include "authkv/topology.hpp"

#include <string>

#include "authkv/errors.hpp"

namespace authkv {

void Topology::validate() const {
  if (implicit_levels() > kMaxImplicitLevels)
    throw DomainError("shard_bits + subtree_bits must be at most " +
                      std::to_string(kMaxImplicitLevels));
}

Route route(const Hash256& key_hash, const Topology& topo) {
  std::uint32_t g = 0;
  for (unsigned d = 0; d < topo.implicit_levels(); ++d) g = g << 1 | (key_bit(key_hash, d) ? 1u : 0u);
  std::uint32_t mask = (std::uint32_t{1} << topo.subtree_bits) - 1;
  return {g >> topo.subtree_bits, g & mask, g};
}

}  // namespace authkv
