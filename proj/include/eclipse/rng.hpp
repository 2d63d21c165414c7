#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace eclipse {

using Rng = std::mt19937_64;

// Derives an independent stream from a base seed and a tuple of counters
// (epoch, episode id, ...), so parallel work stays reproducible.
inline Rng make_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> counters = {}) {
  std::uint64_t h = seed ^ 0x9E3779B97F4A7C15ULL;
  for (auto c : counters) {
    h ^= c + 0x9E3779B97F4A7C15ULL + (h << 6) + (h >> 2);
    h *= 0xBF58476D1CE4E5B9ULL;
    h ^= h >> 31;
  }
  std::seed_seq mixed{static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32),
                      static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(counters.size())};
  return Rng(mixed);
}

// Uniform double in the open interval (0, 1), built from the top 53 bits.
inline double uniform_open01(Rng& rng) {
  for (;;) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    if (u > 0.0) return u;
  }
}

inline double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform_open01(rng); }

inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  return static_cast<std::size_t>(std::uniform_int_distribution<std::uint64_t>(0, n - 1)(rng));
}

}  // namespace eclipse
