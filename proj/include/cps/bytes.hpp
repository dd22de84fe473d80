#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace cps {

using Byte = std::uint8_t;
using Bytes = std::vector<Byte>;
using ByteView = std::span<const Byte>;

// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class HexError : public Error {
 public:
  using Error::Error;
};

namespace detail {

inline int hex_value(char c) noexcept {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  return -1;
}

}  // namespace detail

/// Canonical hex form: uppercase, no separators.
inline std::string hex_format(ByteView bytes) {
  static constexpr char kDigits[] = "0123456789ABCDEF";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (Byte b : bytes) {
    out.push_back(kDigits[b >> 4]);
    out.push_back(kDigits[b & 0x0F]);
  }
  return out;
}

inline std::string hex_format(Byte b) { return hex_format(ByteView(&b, 1)); }

/// Strict parser. Lowercase digits are accepted; whitespace and other
/// separators are not.
inline Bytes hex_parse(std::string_view text) {
  if (text.size() % 2 != 0) {
    throw HexError("odd number of hex digits (" + std::to_string(text.size()) + ")");
  }
  Bytes out;
  out.reserve(text.size() / 2);
  for (std::size_t i = 0; i < text.size(); i += 2) {
    const int hi = detail::hex_value(text[i]);
    const int lo = detail::hex_value(text[i + 1]);
    if (hi < 0 || lo < 0) {
      const std::size_t bad = hi < 0 ? i : i + 1;
      throw HexError("invalid hex digit '" + std::string(1, text[bad]) + "' at offset " +
                     std::to_string(bad));
    }
    out.push_back(static_cast<Byte>((hi << 4) | lo));
  }
  return out;
}

inline Byte hex_parse_byte(std::string_view text) {
  if (text.size() != 2) throw HexError("expected one hex byte, got '" + std::string(text) + "'");
  return hex_parse(text).front();
}

// 64-bit FNV-1a; stable across platforms, used to derive per-step seeds.
inline std::uint64_t fnv1a(std::string_view text, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (char c : text) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace cps
