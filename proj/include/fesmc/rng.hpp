#pragma once

#include <cstdint>
#include <random>

namespace fesmc {

using Rng = std::mt19937_64;

// Purpose tags keep the streams used by different stages of one iteration
// disjoint.
enum class Stream : std::uint64_t {
  init = 1,
  resample = 2,
  move = 3,
  postprocess = 4,
  synth = 5,
  misc = 6,
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Deterministic stream for (seed, purpose, iteration, particle). Every
// particle owns its own stream so serial and threaded runs draw identical
// numbers.
inline Rng make_stream(std::uint64_t seed, Stream purpose, std::uint64_t t,
                       std::uint64_t index = 0) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ static_cast<std::uint64_t>(purpose));
  h = splitmix64(h ^ t);
  h = splitmix64(h ^ index);
  std::seed_seq seq{static_cast<std::uint32_t>(h),
                    static_cast<std::uint32_t>(h >> 32),
                    static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(t)};
  return Rng(seq);
}

inline double uniform01(Rng& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

inline double std_normal(Rng& rng) {
  return std::normal_distribution<double>(0.0, 1.0)(rng);
}

}  // namespace fesmc
