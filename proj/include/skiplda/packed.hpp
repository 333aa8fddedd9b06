#pragma once

#include <cstdint>
#include <string>
#include <utility>

#include "skiplda/error.hpp"

namespace skiplda {

inline constexpr std::uint32_t kHalfLimit = 1u << 16;

/// Two 16-bit values in one 32-bit word: `hi` in the upper half, `lo` in the lower.
/// Used for (topic, count) cells of D and sparse W rows, and for the K1/K2 and
/// C1/C2 pairs kept per token.
struct PackedEntry {
  std::uint32_t bits = 0;

  constexpr std::uint32_t hi() const noexcept { return bits >> 16; }
  constexpr std::uint32_t lo() const noexcept { return bits & 0xFFFFu; }

  friend constexpr bool operator==(PackedEntry, PackedEntry) = default;
};

inline PackedEntry packEntry(std::uint32_t hi, std::uint32_t lo) {
  if (hi >= kHalfLimit || lo >= kHalfLimit) {
    throw CapacityError("packEntry: (" + std::to_string(hi) + ", " + std::to_string(lo) +
                        ") does not fit two 16-bit halves");
  }
  return PackedEntry{(hi << 16) | lo};
}

inline constexpr std::pair<std::uint32_t, std::uint32_t> unpackEntry(PackedEntry e) noexcept {
  return {e.hi(), e.lo()};
}

}  // namespace skiplda
