#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>
#include <string_view>

#include "authkv/hash.hpp"

using namespace authkv;

namespace {

ByteView bytes_of(std::string_view s) { return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()}; }

Hash256 iota32(std::uint8_t start) {
  Hash256 h;
  for (int i = 0; i < 32; ++i) h[i] = static_cast<std::uint8_t>(start + i);
  return h;
}

Bytes concat(const Hash256& a, const Hash256& b) {
  Bytes out(a.begin(), a.end());
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

}  // namespace

// Expected digests below come from Python's hashlib.blake2s (digest_size=32,
// salt=8-byte little-endian (v << 12) | d).
TEST_CASE("blake2s reference vectors") {
  CHECK(to_hex(hash_data({})) == "69217a3079908094e11121d042354a7c1f55b6482ca1a51e1b250dfd1ed0eef9");
  CHECK(to_hex(hash_data(bytes_of("abc"))) == "508c5e8c327c14e2e1a72ba34eeb452f37458b209ed63a294d999b4c86675982");
  std::string a1000(1000, 'a');
  CHECK(to_hex(hash_data(bytes_of(a1000))) == "a4691c2bf852334ece63c024234338fc6c150bdf04fa3f6e0e4c5209b326438d");
  CHECK(to_hex(Blake2s::digest(bytes_of("abc"), make_salt(1, 0))) ==
        "8e50d7658f9d007abeaf17b2c1a90f5c90a758d6d77e0080c4b43ac5002f21bb");
}

TEST_CASE("incremental updates match one-shot digests") {
  std::mt19937_64 rng(3);
  Bytes data(777);
  for (auto& b : data) b = static_cast<std::uint8_t>(rng());
  for (std::size_t cut : {0u, 1u, 63u, 64u, 65u, 128u, 500u, 777u}) {
    Blake2s h(make_salt(9, 3));
    h.update(ByteView(data).first(cut));
    h.update(ByteView(data).subspan(cut));
    CHECK(h.finish() == Blake2s::digest(data, make_salt(9, 3)));
  }
}

TEST_CASE("salt encoding") {
  SaltBytes s = make_salt(1, 0xfff);
  CHECK(s == SaltBytes{0xff, 0x1f, 0, 0, 0, 0, 0, 0});
  CHECK(make_salt(kMaxVersion, 0xfff) == SaltBytes{0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff});
  CHECK_THROWS_AS(make_salt(kMaxVersion + 1, 0), DomainError);
  CHECK_THROWS_AS(make_salt(1, 0x1000), DomainError);
}

TEST_CASE("leaf and internal digests") {
  Hash256 kh = iota32(0), vh = iota32(32);
  CHECK(to_hex(hash_leaf(kh, vh, 7)) == "7d8f7ea21e9685facf67ef2d86b78cc16d3a65268802b44bf25df521bcf2bf34");
  CHECK(to_hex(hash_internal(kh, vh, 5, 17)) == "6679c75521a907cd418493431636a0aab0d391558495c17c910306b00d81f8c9");
  Hash256 zero{};
  CHECK(to_hex(hash_leaf(zero, zero, kMaxVersion)) ==
        "887610612221a629282d8a844d9d9796919696e68764220dee7f38cef3a124c9");
  CHECK(hash_internal(kh, vh, 5, 17) == Blake2s::digest(concat(kh, vh), make_salt(5, 17)));
  CHECK_THROWS_AS(hash_internal(kh, vh, 1, kLeafDepth), DomainError);
  CHECK_THROWS_AS(hash_leaf(kh, vh, kMaxVersion + 1), DomainError);
}

TEST_CASE("salting separates versions and depths") {
  Hash256 kh = iota32(1), vh = iota32(2);
  CHECK(hash_leaf(kh, vh, 1) != hash_leaf(kh, vh, 2));
  CHECK(hash_internal(kh, vh, 1, 3) != hash_internal(kh, vh, 1, 4));
  CHECK(hash_internal(kh, vh, 1, 3) != hash_internal(kh, vh, 2, 3));
  // A leaf can never be mistaken for an internal node at any depth.
  for (Depth d : {Depth{0}, Depth{1}, Depth{255}, Depth{0xffe}}) CHECK(hash_leaf(kh, vh, 4) != hash_internal(kh, vh, 4, d));
}

TEST_CASE("key bits") {
  Hash256 h{};
  h[0] = 0b0000'0101;
  h[31] = 0x80;
  CHECK(key_bit(h, 0));
  CHECK_FALSE(key_bit(h, 1));
  CHECK(key_bit(h, 2));
  CHECK(key_bit(h, 255));
  CHECK_FALSE(key_bit(h, 254));
}

TEST_CASE("swappable hash function") {
  CHECK(SaltedHash<Blake2s256>);
  CHECK(SaltedHash<PrefixSalted<Blake2s256>>);
  Hash256 kh = iota32(0), vh = iota32(32);
  CHECK(leaf_digest<Blake2s256>(kh, vh, 7) == hash_leaf(kh, vh, 7));
  CHECK(to_hex(PrefixSalted<Blake2s256>::digest(bytes_of("abc"), make_salt(1, 0))) ==
        "53b90c0aa51493107ff26ea11217e96719094582ae4bd2e7de7401ce90a840b1");
  CHECK(leaf_digest<PrefixSalted<Blake2s256>>(kh, vh, 7) != hash_leaf(kh, vh, 7));
  CHECK_THROWS_AS(internal_digest<PrefixSalted<Blake2s256>>(kh, vh, 1, kLeafDepth), DomainError);
}

TEST_CASE("batch hashing equals sequential hashing") {
  std::mt19937_64 rng(11);
  std::vector<Bytes> inputs;
  std::vector<HashJob> jobs;
  for (std::size_t n : {0u, 1u, 7u, 8u, 9u, 17u, 100u, 1000u}) {
    inputs.clear();
    jobs.clear();
    for (std::size_t i = 0; i < n; ++i) {
      Bytes b(rng() % 300);
      for (auto& x : b) x = static_cast<std::uint8_t>(rng());
      inputs.push_back(std::move(b));
    }
    for (std::size_t i = 0; i < n; ++i)
      jobs.push_back({make_salt(rng() & kMaxVersion, static_cast<Depth>(rng() & 0xfff)), inputs[i]});
    auto got = batch_hash(jobs);
    auto want = sequential_hash(jobs);
    REQUIRE(got.size() == n);
    CHECK(got == want);
    for (std::size_t i = 0; i < n; ++i) CHECK(want[i] == Blake2s::digest(inputs[i], jobs[i].salt));
  }
}

TEST_CASE("batch hashing rejects a short output span") {
  Bytes b(5);
  std::vector<HashJob> jobs(3, HashJob{make_salt(1, 1), b});
  std::vector<Hash256> out(2);
  CHECK_THROWS(batch_hash(jobs, out));
}
