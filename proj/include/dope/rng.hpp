#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace dope {

using Rng = std::mt19937_64;

/// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Derives an independent stream seed from a base seed and a list of stream
/// coordinates (replicate, round, purpose tag, ...).
constexpr std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> keys) {
  std::uint64_t h = mix64(base);
  for (auto k : keys) h = mix64(h ^ mix64(k + 0x632be59bd9b4e019ULL));
  return h;
}

/// Uniform double in [0,1) from 53 high bits.
constexpr double to_unit(std::uint64_t x) {
  return static_cast<double>(x >> 11) * 0x1.0p-53;
}

inline double uniform01(Rng& rng) { return to_unit(rng()); }

inline bool bernoulli(Rng& rng, double p) { return uniform01(rng) < p; }

// Stream purpose tags.
namespace stream {
inline constexpr std::uint64_t gibbs = 1;
inline constexpr std::uint64_t design = 2;
inline constexpr std::uint64_t executor = 3;
inline constexpr std::uint64_t truth = 4;
inline constexpr std::uint64_t strategy = 5;
inline constexpr std::uint64_t evaluation = 6;
}  // namespace stream

}  // namespace dope
