#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace sway {

// FNV-1a, 64-bit. Used for cache keys and for the synthetic backend's
// per-item draws, so the exact constants matter for reproducibility:
//   offset basis 0xcbf29ce484222325, prime 0x100000001b3.
inline std::uint64_t fnv1a64(std::string_view bytes,
                             std::uint64_t h = 0xcbf29ce484222325ull) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

// Feeds the 8 little-endian bytes of v into an ongoing FNV-1a stream.
inline std::uint64_t fnv1a64_u64le(std::uint64_t v, std::uint64_t h) {
  for (int i = 0; i < 8; ++i) {
    h ^= (v >> (8 * i)) & 0xffu;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<size_t>(i)] = digits[v & 0xf];
    v >>= 4;
  }
  return out;
}

}  // namespace sway
