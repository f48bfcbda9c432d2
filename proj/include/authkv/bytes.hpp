// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace authkv {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

inline ByteView as_bytes(std::string_view s) {
  return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

inline Bytes to_bytes(std::string_view s) {
  auto v = as_bytes(s);
  return {v.begin(), v.end()};
}

// All on-disk integers are little-endian regardless of host order.
inline std::uint32_t load_u32_le(const std::uint8_t* p) {
  return std::uint32_t{p[0]} | std::uint32_t{p[1]} << 8 | std::uint32_t{p[2]} << 16 |
         std::uint32_t{p[3]} << 24;
}

inline std::uint64_t load_u64_le(const std::uint8_t* p) {
  return std::uint64_t{load_u32_le(p)} | std::uint64_t{load_u32_le(p + 4)} << 32;
}

inline void store_u32_le(std::uint8_t* p, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) p[i] = static_cast<std::uint8_t>(v >> (8 * i));
}

inline void store_u64_le(std::uint8_t* p, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) p[i] = static_cast<std::uint8_t>(v >> (8 * i));
}

inline void append_u8(Bytes& out, std::uint8_t v) { out.push_back(v); }

inline void append_u32_le(Bytes& out, std::uint32_t v) {
  std::uint8_t buf[4];
  store_u32_le(buf, v);
  out.insert(out.end(), buf, buf + 4);
}

inline void append_u64_le(Bytes& out, std::uint64_t v) {
  std::uint8_t buf[8];
  store_u64_le(buf, v);
  out.insert(out.end(), buf, buf + 8);
}

inline void append_bytes(Bytes& out, ByteView v) { out.insert(out.end(), v.begin(), v.end()); }

std::string to_hex(ByteView v);
/// Throws FormatError on odd length or non-hex characters.
Bytes from_hex(std::string_view hex);

/// Bounds-checked little-endian reader over a byte buffer. Every read past the
/// end throws FormatError with `what` naming the structure being decoded.
class ByteReader {
 public:
  ByteReader(ByteView data, const char* what) : data_(data), what_(what) {}

  std::uint8_t u8();
  std::uint32_t u32();
  std::uint64_t u64();
  ByteView take(std::size_t n);

  std::size_t position() const { return pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }
  bool at_end() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n) const;

  ByteView data_;
  const char* what_;
  std::size_t pos_ = 0;
};

}  // namespace authkv
