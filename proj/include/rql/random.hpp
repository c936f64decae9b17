#pragma once

#include <cstdint>
#include <random>

namespace rql {

/// All sampling in the library draws from explicitly passed streams of this type.
using RandomStream = std::mt19937_64;

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Independent substream `stream_id` of a run seeded with `seed`.
inline RandomStream make_stream(std::uint64_t seed, std::uint64_t stream_id) {
  return RandomStream(splitmix64(splitmix64(seed) ^ splitmix64(~stream_id)));
}

inline double uniform01(RandomStream& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

}  // namespace rql
