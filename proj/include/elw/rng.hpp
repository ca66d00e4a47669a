#pragma once

#include <cstdint>
#include <random>

namespace elw {

/// Streams are keyed by (master seed, purpose, index) so that parallel
/// replicates draw the same numbers regardless of scheduling.
enum class Purpose : std::uint64_t {
  kReplicate = 1,
  kResample = 2,
  kPopulation = 3,
  kDesign = 4,
  kUser = 5,
};

using Rng = std::mt19937_64;

namespace detail {
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}
}  // namespace detail

constexpr std::uint64_t derive_seed(std::uint64_t master, Purpose purpose, std::uint64_t index,
                                    std::uint64_t sub = 0) {
  std::uint64_t h = detail::splitmix64(master);
  h = detail::splitmix64(h ^ static_cast<std::uint64_t>(purpose));
  h = detail::splitmix64(h ^ index);
  return detail::splitmix64(h ^ sub);
}

inline Rng make_stream(std::uint64_t master, Purpose purpose, std::uint64_t index, std::uint64_t sub = 0) {
  return Rng(derive_seed(master, purpose, index, sub));
}

/// Uniform double in [0, 1) with 53 random bits.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace elw
