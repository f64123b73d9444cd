#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace nfclab {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RangeError : Error {
  using Error::Error;
};

/// Timestamp regression while appending to a log.
struct OrderingError : Error {
  using Error::Error;
};

/// Decoding failure; `offset` is the byte position of the offending data.
struct ParseError : Error {
  std::size_t offset;
  ParseError(std::size_t off, const std::string& msg)
      : Error(msg + " (offset " + std::to_string(off) + ")"), offset(off) {}
};

struct ValidationError : Error {
  using Error::Error;
};

struct ProtocolError : Error {
  using Error::Error;
};

std::string to_hex(ByteView data);
Bytes from_hex(const std::string& hex);

inline Bytes to_bytes(std::initializer_list<int> vals) {
  Bytes out;
  out.reserve(vals.size());
  for (int v : vals) out.push_back(static_cast<std::uint8_t>(v));
  return out;
}

inline Bytes xor_bytes(ByteView a, ByteView b) {
  if (a.size() != b.size()) throw RangeError("xor_bytes: length mismatch");
  Bytes out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] ^ b[i];
  return out;
}

inline void append(Bytes& dst, ByteView src) { dst.insert(dst.end(), src.begin(), src.end()); }

inline Bytes concat(ByteView a, ByteView b) {
  Bytes out(a.begin(), a.end());
  append(out, b);
  return out;
}

inline Bytes slice(ByteView v, std::size_t from, std::size_t len) {
  if (from + len > v.size()) throw RangeError("slice out of range");
  return Bytes(v.begin() + from, v.begin() + from + len);
}

inline void put_u16_be(Bytes& b, std::uint16_t v) {
  b.push_back(static_cast<std::uint8_t>(v >> 8));
  b.push_back(static_cast<std::uint8_t>(v));
}

inline void put_u32_be(Bytes& b, std::uint32_t v) {
  b.push_back(static_cast<std::uint8_t>(v >> 24));
  b.push_back(static_cast<std::uint8_t>(v >> 16));
  b.push_back(static_cast<std::uint8_t>(v >> 8));
  b.push_back(static_cast<std::uint8_t>(v));
}

inline std::uint16_t get_u16_be(ByteView b, std::size_t at) {
  return static_cast<std::uint16_t>((b[at] << 8) | b[at + 1]);
}

inline std::uint32_t get_u32_be(ByteView b, std::size_t at) {
  return (static_cast<std::uint32_t>(b[at]) << 24) | (static_cast<std::uint32_t>(b[at + 1]) << 16) |
         (static_cast<std::uint32_t>(b[at + 2]) << 8) | static_cast<std::uint32_t>(b[at + 3]);
}

}  // namespace nfclab
