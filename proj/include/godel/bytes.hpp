#pragma once

#include <cstdint>
#include <string>
#include <stdexcept>
#include <gmpxx.h>

namespace godel {

// Byte strings are the primary representation of Godel codes: a code is the
// big-endian base-256 value of its bytes. Leading byte is always nonzero
// (0x01 formula / 0x02 program / 0x03 proof), so value<->bytes is a bijection
// on well-formed codes.
using Bytes = std::string;

inline void put_varint(Bytes& out, std::uint64_t v) {
  while (v >= 0x80) {
    out.push_back(static_cast<char>(0x80 | (v & 0x7f)));
    v >>= 7;
  }
  out.push_back(static_cast<char>(v));
}

// Little-endian-group LEB128, highest bit = continuation.
inline std::uint64_t get_varint(const Bytes& in, std::size_t& pos) {
  std::uint64_t v = 0;
  int shift = 0;
  for (;;) {
    if (pos >= in.size()) throw std::runtime_error("varint: truncated");
    if (shift > 63) throw std::runtime_error("varint: overflow");
    std::uint8_t b = static_cast<std::uint8_t>(in[pos++]);
    v |= static_cast<std::uint64_t>(b & 0x7f) << shift;
    if (!(b & 0x80)) return v;
    shift += 7;
  }
}

inline mpz_class bytes_to_value(const Bytes& b) {
  mpz_class v;
  if (b.empty()) return v;
  mpz_import(v.get_mpz_t(), b.size(), 1 /*msb first*/, 1, 0, 0, b.data());
  return v;
}

inline Bytes value_to_bytes(const mpz_class& v) {
  if (v < 0) throw std::runtime_error("value_to_bytes: negative");
  if (v == 0) return Bytes();
  std::size_t count = 0;
  Bytes out;
  out.resize((mpz_sizeinbase(v.get_mpz_t(), 2) + 7) / 8);
  mpz_export(out.data(), &count, 1, 1, 0, 0, v.get_mpz_t());
  out.resize(count);
  return out;
}

inline std::string to_hex(const Bytes& b) {
  static const char* digits = "0123456789abcdef";
  std::string s;
  s.reserve(b.size() * 2);
  for (unsigned char c : b) {
    s.push_back(digits[c >> 4]);
    s.push_back(digits[c & 0xf]);
  }
  return s;
}

inline Bytes from_hex(const std::string& s) {
  auto nib = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
  };
  if (s.size() % 2) throw std::runtime_error("hex: odd length");
  Bytes out;
  out.reserve(s.size() / 2);
  for (std::size_t i = 0; i < s.size(); i += 2) {
    int hi = nib(s[i]), lo = nib(s[i + 1]);
    if (hi < 0 || lo < 0) throw std::runtime_error("hex: bad digit");
    out.push_back(static_cast<char>(hi * 16 + lo));
  }
  return out;
}

// FNV-1a 64-bit; used for interning and fast structural comparisons.
inline std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t seed = 1469598103934665603ull) {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < n; i++) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

inline std::uint64_t fnv1a(const Bytes& b) { return fnv1a(b.data(), b.size()); }

}  // namespace godel
