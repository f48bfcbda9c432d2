// SPDX-License-Identifier: Apache-2.0
#include "authkv/blake2s.hpp"

#include <algorithm>
#include <bit>
#include <cstring>

namespace authkv {

using blake2s_detail::kIV;
using blake2s_detail::kSigma;

namespace {

inline void mix(std::uint32_t* v, int a, int b, int c, int d, std::uint32_t x, std::uint32_t y) {
  v[a] = v[a] + v[b] + x;
  v[d] = std::rotr(v[d] ^ v[a], 16);
  v[c] = v[c] + v[d];
  v[b] = std::rotr(v[b] ^ v[c], 12);
  v[a] = v[a] + v[b] + y;
  v[d] = std::rotr(v[d] ^ v[a], 8);
  v[c] = v[c] + v[d];
  v[b] = std::rotr(v[b] ^ v[c], 7);
}

}  // namespace

std::array<std::uint32_t, 8> Blake2s::initial_state(const SaltBytes* salt) {
  std::array<std::uint32_t, 8> h = kIV;
  // digest_length=32, key_length=0, fanout=1, depth=1
  h[0] ^= 0x01010000u | kDigestBytes;
  if (salt != nullptr) {
    h[4] ^= load_u32_le(salt->data());
    h[5] ^= load_u32_le(salt->data() + 4);
  }
  return h;
}

void Blake2s::compress(std::array<std::uint32_t, 8>& h, const std::uint8_t* block,
                       std::uint64_t counter, bool last) {
  std::uint32_t m[16];
  for (int i = 0; i < 16; ++i) m[i] = load_u32_le(block + 4 * i);

  std::uint32_t v[16];
  for (int i = 0; i < 8; ++i) {
    v[i] = h[i];
    v[i + 8] = kIV[i];
  }
  v[12] ^= static_cast<std::uint32_t>(counter);
  v[13] ^= static_cast<std::uint32_t>(counter >> 32);
  if (last) v[14] = ~v[14];

  for (const auto& s : kSigma) {
    mix(v, 0, 4, 8, 12, m[s[0]], m[s[1]]);
    mix(v, 1, 5, 9, 13, m[s[2]], m[s[3]]);
    mix(v, 2, 6, 10, 14, m[s[4]], m[s[5]]);
    mix(v, 3, 7, 11, 15, m[s[6]], m[s[7]]);
    mix(v, 0, 5, 10, 15, m[s[8]], m[s[9]]);
    mix(v, 1, 6, 11, 12, m[s[10]], m[s[11]]);
    mix(v, 2, 7, 8, 13, m[s[12]], m[s[13]]);
    mix(v, 3, 4, 9, 14, m[s[14]], m[s[15]]);
  }
  for (int i = 0; i < 8; ++i) h[i] ^= v[i] ^ v[i + 8];
}

Blake2s::Blake2s() : h_(initial_state(nullptr)) {}

Blake2s::Blake2s(const SaltBytes& salt) : h_(initial_state(&salt)) {}

void Blake2s::update(ByteView data) {
  const std::uint8_t* p = data.data();
  std::size_t n = data.size();
  while (n > 0) {
    // The final block must be compressed with the last flag, so a full
    // buffer is only flushed once more input arrives.
    if (buf_len_ == kBlockBytes) {
      counter_ += kBlockBytes;
      compress(h_, buf_.data(), counter_, false);
      buf_len_ = 0;
    }
    std::size_t take = std::min(n, kBlockBytes - buf_len_);
    std::memcpy(buf_.data() + buf_len_, p, take);
    buf_len_ += take;
    p += take;
    n -= take;
  }
}

Blake2s::Digest Blake2s::finish() {
  counter_ += buf_len_;
  std::fill(buf_.begin() + static_cast<std::ptrdiff_t>(buf_len_), buf_.end(), 0);
  compress(h_, buf_.data(), counter_, true);
  Digest out;
  for (int i = 0; i < 8; ++i) store_u32_le(out.data() + 4 * i, h_[i]);
  return out;
}

Blake2s::Digest Blake2s::digest(ByteView data) {
  Blake2s b;
  b.update(data);
  return b.finish();
}

Blake2s::Digest Blake2s::digest(ByteView data, const SaltBytes& salt) {
  Blake2s b(salt);
  b.update(data);
  return b.finish();
}

}  // namespace authkv
