// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>

#include "authkv/bytes.hpp"

namespace authkv {

/// BLAKE2s with a 32-byte digest, no key, and the optional 8-byte salt of the
/// parameter block (RFC 7693).
class Blake2s {
 public:
  static constexpr std::size_t kBlockBytes = 64;
  static constexpr std::size_t kDigestBytes = 32;
  static constexpr std::size_t kSaltBytes = 8;

  using Digest = std::array<std::uint8_t, kDigestBytes>;
  using SaltBytes = std::array<std::uint8_t, kSaltBytes>;

  Blake2s();
  explicit Blake2s(const SaltBytes& salt);

  void update(ByteView data);
  Digest finish();

  static Digest digest(ByteView data);
  static Digest digest(ByteView data, const SaltBytes& salt);

  /// Initial chaining value for a 32-byte, unkeyed, sequential-mode hash.
  static std::array<std::uint32_t, 8> initial_state(const SaltBytes* salt);

  /// One compression; `last` marks the final block. Exposed so the lane
  /// batch implementation can share the exact same constants.
  static void compress(std::array<std::uint32_t, 8>& h, const std::uint8_t* block,
                       std::uint64_t counter, bool last);

 private:
  std::array<std::uint32_t, 8> h_;
  std::array<std::uint8_t, kBlockBytes> buf_{};
  std::size_t buf_len_ = 0;
  std::uint64_t counter_ = 0;
};

namespace blake2s_detail {

inline constexpr std::array<std::uint32_t, 8> kIV = {
    0x6A09E667u, 0xBB67AE85u, 0x3C6EF372u, 0xA54FF53Au,
    0x510E527Fu, 0x9B05688Cu, 0x1F83D9ABu, 0x5BE0CD19u};

inline constexpr std::uint8_t kSigma[10][16] = {
    {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15},
    {14, 10, 4, 8, 9, 15, 13, 6, 1, 12, 0, 2, 11, 7, 5, 3},
    {11, 8, 12, 0, 5, 2, 15, 13, 10, 14, 3, 6, 7, 1, 9, 4},
    {7, 9, 3, 1, 13, 12, 11, 14, 2, 6, 5, 10, 4, 0, 15, 8},
    {9, 0, 5, 7, 2, 4, 10, 15, 14, 1, 11, 12, 6, 8, 3, 13},
    {2, 12, 6, 10, 0, 11, 8, 3, 4, 13, 7, 5, 15, 14, 1, 9},
    {12, 5, 1, 15, 14, 13, 4, 10, 0, 7, 6, 3, 9, 2, 8, 11},
    {13, 11, 7, 14, 12, 1, 3, 9, 5, 0, 15, 4, 8, 6, 2, 10},
    {6, 15, 14, 9, 11, 3, 0, 8, 12, 2, 13, 7, 1, 4, 10, 5},
    {10, 2, 8, 4, 7, 6, 1, 5, 15, 11, 9, 14, 3, 12, 13, 0},
};

}  // namespace blake2s_detail

}  // namespace authkv
