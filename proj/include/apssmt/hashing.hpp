#pragma once

#include <cstdint>

#include "apssmt/bytes.hpp"

namespace apssmt {

// FNV-1a. Used for share checksums and as the mixing core of the simulated
// crypto provider; none of this is cryptographic.
inline constexpr std::uint32_t kFnv32Offset = 0x811c9dc5u;
inline constexpr std::uint32_t kFnv32Prime = 0x01000193u;
inline constexpr std::uint64_t kFnv64Offset = 0xcbf29ce484222325ull;
inline constexpr std::uint64_t kFnv64Prime = 0x00000100000001b3ull;

inline std::uint32_t fnv1a32(ByteView data, std::uint32_t h = kFnv32Offset) {
  for (std::uint8_t b : data) {
    h ^= b;
    h *= kFnv32Prime;
  }
  return h;
}

inline std::uint64_t fnv1a64(ByteView data, std::uint64_t h = kFnv64Offset) {
  for (std::uint8_t b : data) {
    h ^= b;
    h *= kFnv64Prime;
  }
  return h;
}

// splitmix64 finalizer; decorrelates counter-derived values.
inline constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline constexpr std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b) {
  return mix64(a ^ mix64(b));
}

}  // namespace apssmt
