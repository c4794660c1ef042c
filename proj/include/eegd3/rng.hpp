#pragma once

#include <cstdint>
#include <random>

namespace eegd3 {

using Rng = std::mt19937_64;

// Stable 64-bit mix for deriving per-unit seeds from a global seed, so that
// per-trial work can run in any order and still be reproducible.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t x = seed + 0x9e3779b97f4a7c15ull * (salt + 1);
  x ^= x >> 30; x *= 0xbf58476d1ce4e5b9ull;
  x ^= x >> 27; x *= 0x94d049bb133111ebull;
  x ^= x >> 31;
  return x;
}

inline Rng make_rng(std::uint64_t seed, std::uint64_t salt = 0) {
  return Rng(mix_seed(seed, salt));
}

inline double uniform(Rng& rng, double lo = 0.0, double hi = 1.0) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline double gaussian(Rng& rng, double mean = 0.0, double stddev = 1.0) {
  return std::normal_distribution<double>(mean, stddev)(rng);
}

inline long uniform_index(Rng& rng, long n) {
  return std::uniform_int_distribution<long>(0, n - 1)(rng);
}

} // namespace eegd3
