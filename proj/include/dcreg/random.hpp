#pragma once

#include <cstdint>
#include <random>

namespace dcreg {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed of the independent stream `index` under `base`; used for
/// replications, bootstrap resamples and trees alike.
inline std::uint64_t substream_seed(std::uint64_t base, std::uint64_t index) {
  return splitmix64(splitmix64(base) ^ splitmix64(index + 0x632be59bd9b4e019ULL));
}

inline Rng substream(std::uint64_t base, std::uint64_t index) { return Rng(substream_seed(base, index)); }

/// Uniform on [0, 1) with 53 random bits; portable across standard libraries.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Uniform index in [0, n) by rejection, so results do not depend on the
/// library's distribution implementation.
inline std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % n;
}

}  // namespace dcreg
