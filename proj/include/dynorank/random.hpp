#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace dynorank {

// SplitMix64 finalizer; used to derive independent stream seeds.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Counter-based stream: the generator for (seed, stream, counter) does not
// depend on how many other streams were drawn before it, so parallel and
// serial evaluation see the same numbers.
inline std::mt19937_64 stream_rng(std::uint64_t seed, std::uint64_t stream,
                                  std::uint64_t counter = 0) {
  std::uint64_t h = mix64(seed);
  h = mix64(h ^ mix64(stream + 0x632be59bd9b4e019ULL));
  h = mix64(h ^ mix64(counter + 0x85157af5ULL));
  return std::mt19937_64(h);
}

// Uniform in [0, 1) from 53 random bits; portable across standard libraries.
inline double uniform01(std::mt19937_64& g) {
  return static_cast<double>(g() >> 11) * 0x1.0p-53;
}

// Uniform integer in [0, n) by rejection; portable across standard libraries.
inline std::uint64_t uniform_index(std::mt19937_64& g, std::uint64_t n) {
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t r;
  do {
    r = g();
  } while (r >= limit);
  return r % n;
}

// Standard normal via Box-Muller; portable, unlike std::normal_distribution.
inline double standard_normal(std::mt19937_64& g) {
  double u1 = uniform01(g);
  while (u1 <= 0.0) u1 = uniform01(g);
  const double u2 = uniform01(g);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

}  // namespace dynorank
