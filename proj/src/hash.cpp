// SPDX-License-Identifier: Apache-2.0
#include "authkv/hash.hpp"

#include <cstring>

#include "authkv/errors.hpp"

namespace authkv {

SaltBytes make_salt(Version version, Depth depth) {
  if (version > kMaxVersion) throw DomainError("version does not fit in 52 bits");
  if (depth > kLeafDepth) throw DomainError("depth does not fit in 12 bits");
  SaltBytes s;
  store_u64_le(s.data(), version << 12 | depth);
  return s;
}

Hash256 hash_data(ByteView data) { return Blake2s256::digest(data); }

Hash256 hash_leaf(const Hash256& key_hash, const Hash256& value_hash, Version version) {
  return leaf_digest<>(key_hash, value_hash, version);
}

Hash256 hash_internal(const Hash256& left, const Hash256& right, Version version, Depth depth) {
  return internal_digest<>(left, right, version, depth);
}

std::vector<Hash256> sequential_hash(std::span<const HashJob> jobs) {
  std::vector<Hash256> out;
  out.reserve(jobs.size());
  for (const auto& j : jobs) out.push_back(Blake2s::digest(j.input, j.salt));
  return out;
}

namespace {

constexpr int kLanes = 8;
using Lane = std::uint32_t[kLanes];

inline std::uint32_t rotr32(std::uint32_t x, int n) { return (x >> n) | (x << (32 - n)); }

inline void mix8(Lane* v, int a, int b, int c, int d, const Lane& x, const Lane& y) {
  for (int l = 0; l < kLanes; ++l) {
    v[a][l] = v[a][l] + v[b][l] + x[l];
    v[d][l] = rotr32(v[d][l] ^ v[a][l], 16);
    v[c][l] = v[c][l] + v[d][l];
    v[b][l] = rotr32(v[b][l] ^ v[c][l], 12);
    v[a][l] = v[a][l] + v[b][l] + y[l];
    v[d][l] = rotr32(v[d][l] ^ v[a][l], 8);
    v[c][l] = v[c][l] + v[d][l];
    v[b][l] = rotr32(v[b][l] ^ v[c][l], 7);
  }
}

// State words are stored transposed (word-major, lane-minor) so each step of
// the mixing function is a straight loop over lanes.
struct Lanes {
  Lane h[8];
  Lane m[16];
  Lane t0, t1, f0;

  void compress() {
    using blake2s_detail::kIV;
    using blake2s_detail::kSigma;
    Lane v[16];
    for (int i = 0; i < 8; ++i) {
      for (int l = 0; l < kLanes; ++l) {
        v[i][l] = h[i][l];
        v[i + 8][l] = kIV[i];
      }
    }
    for (int l = 0; l < kLanes; ++l) {
      v[12][l] ^= t0[l];
      v[13][l] ^= t1[l];
      v[14][l] ^= f0[l];
    }
    for (const auto& s : kSigma) {
      mix8(v, 0, 4, 8, 12, m[s[0]], m[s[1]]);
      mix8(v, 1, 5, 9, 13, m[s[2]], m[s[3]]);
      mix8(v, 2, 6, 10, 14, m[s[4]], m[s[5]]);
      mix8(v, 3, 7, 11, 15, m[s[6]], m[s[7]]);
      mix8(v, 0, 5, 10, 15, m[s[8]], m[s[9]]);
      mix8(v, 1, 6, 11, 12, m[s[10]], m[s[11]]);
      mix8(v, 2, 7, 8, 13, m[s[12]], m[s[13]]);
      mix8(v, 3, 4, 9, 14, m[s[14]], m[s[15]]);
    }
    for (int i = 0; i < 8; ++i)
      for (int l = 0; l < kLanes; ++l) h[i][l] ^= v[i][l] ^ v[i + 8][l];
  }
};

}  // namespace

void batch_hash(std::span<const HashJob> jobs, std::span<Hash256> out) {
  if (out.size() != jobs.size()) throw std::invalid_argument("batch_hash: output size mismatch");
  constexpr std::size_t kIdle = static_cast<std::size_t>(-1);

  Lanes st{};
  std::size_t job_of[kLanes];
  std::size_t pos[kLanes] = {};
  std::fill(std::begin(job_of), std::end(job_of), kIdle);
  std::size_t next = 0;

  for (;;) {
    int active = 0;
    for (int l = 0; l < kLanes; ++l) {
      if (job_of[l] == kIdle && next < jobs.size()) {
        job_of[l] = next++;
        pos[l] = 0;
        auto iv = Blake2s::initial_state(&jobs[job_of[l]].salt);
        for (int i = 0; i < 8; ++i) st.h[i][l] = iv[i];
      }
      if (job_of[l] == kIdle) {
        for (auto& w : st.m) w[l] = 0;
        st.t0[l] = st.t1[l] = st.f0[l] = 0;
        continue;
      }
      ++active;
      ByteView in = jobs[job_of[l]].input;
      std::size_t rem = in.size() - pos[l];
      std::uint8_t block[Blake2s::kBlockBytes] = {};
      std::uint64_t counter;
      if (rem > Blake2s::kBlockBytes) {
        std::memcpy(block, in.data() + pos[l], Blake2s::kBlockBytes);
        pos[l] += Blake2s::kBlockBytes;
        counter = pos[l];
        st.f0[l] = 0;
      } else {
        if (rem > 0) std::memcpy(block, in.data() + pos[l], rem);
        pos[l] = in.size();
        counter = in.size();
        st.f0[l] = 0xFFFFFFFFu;
      }
      for (int i = 0; i < 16; ++i) st.m[i][l] = load_u32_le(block + 4 * i);
      st.t0[l] = static_cast<std::uint32_t>(counter);
      st.t1[l] = static_cast<std::uint32_t>(counter >> 32);
    }
    if (active == 0) break;

    st.compress();

    for (int l = 0; l < kLanes; ++l) {
      if (job_of[l] == kIdle || st.f0[l] == 0) continue;
      Hash256& d = out[job_of[l]];
      for (int i = 0; i < 8; ++i) store_u32_le(d.data() + 4 * i, st.h[i][l]);
      job_of[l] = kIdle;
    }
  }
}

std::vector<Hash256> batch_hash(std::span<const HashJob> jobs) {
  std::vector<Hash256> out(jobs.size());
  batch_hash(jobs, out);
  return out;
}

}  // namespace authkv
