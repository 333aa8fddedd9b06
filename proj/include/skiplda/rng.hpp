#pragma once

#include <cstdint>

namespace skiplda {

namespace detail {

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

}  // namespace detail

/// Counter-based uniform draw in [0, 1) for (seed, iteration, token).
///
/// The value depends only on the three keys, never on which thread asks or in
/// what order, so a training run is reproducible for any worker count and any
/// chunk partition. Iteration 0 is reserved for topic initialization.
constexpr double counterUniform(std::uint64_t seed, std::uint64_t iteration,
                                std::uint64_t token) noexcept {
  std::uint64_t h = detail::splitmix64(seed);
  h = detail::splitmix64(h ^ iteration);
  h = detail::splitmix64(h ^ token);
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

}  // namespace skiplda
