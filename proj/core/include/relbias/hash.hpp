#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace relbias {

// 64-bit FNV-1a. Used for config hashes and solver cache keys; stable
// across platforms by construction.
inline uint64_t fnv1a64(std::string_view bytes,
                        uint64_t h = 14695981039346656037ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::string hex64(uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<size_t>(i)] = digits[v & 0xf];
    v >>= 4;
  }
  return out;
}

inline std::string hash_hex(std::string_view bytes) {
  return hex64(fnv1a64(bytes));
}

}  // namespace relbias
