#ifndef LOOPSPACE_RANDOM_HPP
#define LOOPSPACE_RANDOM_HPP

#include <cstdint>
#include <random>

namespace loopspace {

// Distributions are written out by hand: the standard library ones are
// implementation-defined, and reports must be byte-identical across builds.

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed for the `index`-th independent stream derived from `seed`.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  return splitmix64(splitmix64(seed) ^ (index * 0xd1b54a32d192ed03ULL + 1));
}

inline Rng make_rng(std::uint64_t seed) { return Rng(splitmix64(seed)); }

/// Uniform on [0, 1).
inline double uniform01(Rng &rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform(Rng &rng, double lo, double hi) {
  return lo + (hi - lo) * uniform01(rng);
}

/// Uniform on {0, ..., n-1}; n must be positive.
inline std::size_t uniform_index(Rng &rng, std::size_t n) {
  return static_cast<std::size_t>(rng() % n);
}

} // namespace loopspace

#endif // LOOPSPACE_RANDOM_HPP
