#pragma once

#include <cstdint>
#include <string_view>

namespace boxverify::detail {

inline std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 14695981039346656037ull) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

/// Seed for a stream keyed by (seed, name, salt); independent of call order.
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view name, std::uint64_t salt = 0) {
  return splitmix64(seed ^ splitmix64(fnv1a(name) ^ splitmix64(salt)));
}

}  // namespace boxverify::detail
