#ifndef DYNTRAJ_IO_FORMAT_HPP_
#define DYNTRAJ_IO_FORMAT_HPP_

#include <charconv>
#include <cstdint>
#include <string>
#include <string_view>
#include <system_error>

namespace dyntraj::io {

/// Locale-independent shortest-round-trip formatting of a double.
inline std::string format_number(double value) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

inline std::string format_number(std::int64_t value) { return std::to_string(value); }
inline std::string format_number(std::uint64_t value) { return std::to_string(value); }
inline std::string format_number(int value) { return std::to_string(value); }

/// FNV-1a 64-bit hash; stable across platforms and builds, used to fingerprint
/// scenario configurations in output headers.
inline std::uint64_t fnv1a(std::string_view data) {
  std::uint64_t h = 1469598103934665603ull;
  for (const char c : data) {
    h ^= static_cast<std::uint8_t>(c);
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string hash_string(std::uint64_t h) {
  char buf[19] = "0x";
  static const char* digits = "0123456789abcdef";
  for (int i = 0; i < 16; ++i) buf[2 + i] = digits[(h >> (60 - 4 * i)) & 0xF];
  return std::string(buf, 18);
}

}  // namespace dyntraj::io

#endif  // DYNTRAJ_IO_FORMAT_HPP_
