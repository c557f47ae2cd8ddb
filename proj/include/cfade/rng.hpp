#pragma once

#include <cstdint>
#include <random>

namespace cfade {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer; used to derive independent child streams.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed for the stream identified by (seed, index). Streams for distinct
/// indices are decorrelated, so work can be scheduled in any order.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  return mix64(mix64(seed) ^ mix64(index + 0x632be59bd9b4e019ULL));
}

inline Rng make_rng(std::uint64_t seed, std::uint64_t index) {
  return Rng(derive_seed(seed, index));
}

/// Uniform double in [0, 1) from 53 random bits. Unlike
/// std::uniform_real_distribution this is identical across standard libraries.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Uniform integer in [0, n) by rejection; portable across standard libraries.
inline std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t r;
  do {
    r = rng();
  } while (r >= limit);
  return r % n;
}

/// Standard normal via Box-Muller (portable, consumes two draws).
double standard_normal(Rng& rng);

}  // namespace cfade
