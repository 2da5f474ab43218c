#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>

namespace rpd {

// Engine used for every seeded stream in training (student sampling, env
// resets, minibatch shuffles).
using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Order-dependent combination of a running hash with a new word.
inline std::uint64_t hash_combine(std::uint64_t h, std::uint64_t v) { return splitmix64(h ^ splitmix64(v)); }

inline std::uint64_t hash_doubles(std::uint64_t h, std::span<const double> xs) {
  for (double x : xs) h = hash_combine(h, std::bit_cast<std::uint64_t>(x));
  return h;
}

// Derives an independent child seed, e.g. per lane or per episode.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return hash_combine(hash_combine(0x5EEDULL, seed), stream);
}

// Uniform in [0, 1) from the top 53 bits of a hash.
inline double hash_uniform(std::uint64_t h) { return static_cast<double>(h >> 11) * 0x1.0p-53; }

// Standard normal from a hash via Box-Muller. Pure function of its input so
// remote and local teachers can reproduce each other's noise exactly.
inline double hash_normal(std::uint64_t h) {
  const double u1 = 1.0 - hash_uniform(splitmix64(h));  // (0, 1]
  const double u2 = hash_uniform(splitmix64(h ^ 0xA5A5A5A5A5A5A5A5ULL));
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

inline double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

}  // namespace rpd
