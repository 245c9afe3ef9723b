#pragma once

#include <cstdint>
#include <random>

namespace mlabel {

using Rng = std::mt19937_64;

enum class Stream : std::uint64_t {
  Covariates = 1,
  Labels = 2,
  TieBreak = 3,
  Split = 4,
  MonteCarlo = 5,
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace detail

/// Independent seed for the (seed, index, purpose) triple.
inline std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t index, Stream tag) {
  std::uint64_t h = detail::splitmix64(seed);
  h = detail::splitmix64(h ^ index);
  return detail::splitmix64(h ^ static_cast<std::uint64_t>(tag));
}

inline Rng make_rng(std::uint64_t seed, std::uint64_t index, Stream tag) {
  return Rng(stream_seed(seed, index, tag));
}

}  // namespace mlabel
