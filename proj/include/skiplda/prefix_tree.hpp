#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "skiplda/error.hpp"

namespace skiplda {

/// Prefix sums of a weight vector arranged as a complete binary tree in which every
/// parent holds the larger of its two children. Because prefix sums are
/// non-decreasing, a parent is simply the last prefix sum of its subtree and the
/// root is the total mass.
///
/// descend(u) returns the smallest index whose prefix sum is strictly greater than
/// u, so a zero-weight slot owns an empty interval and is never returned. The
/// width is padded to a power of two with zero weights, which are unreachable for
/// the same reason.
template <std::floating_point Real = double>
class PrefixMaxTree {
 public:
  PrefixMaxTree() = default;
  explicit PrefixMaxTree(std::span<const Real> weights) { assign(weights); }

  void assign(std::span<const Real> weights) {
    if (weights.empty()) throw ConfigError("PrefixMaxTree needs at least one weight");
    size_ = weights.size();
    width_ = std::bit_ceil(size_);
    nodes_.assign(2 * width_, Real{0});
    Real running{0};
    lastPositive_ = size_;
    for (std::size_t k = 0; k < size_; ++k) {
      const Real w = weights[k];
      if (!(w >= Real{0})) {
        throw ValidationError("PrefixMaxTree weight " + std::to_string(k) + " is negative or NaN");
      }
      if (w > Real{0}) lastPositive_ = k;
      running += w;
      nodes_[width_ + k] = running;
    }
    for (std::size_t k = size_; k < width_; ++k) nodes_[width_ + k] = running;
    for (std::size_t i = width_ - 1; i >= 1; --i) {
      nodes_[i] = std::max(nodes_[2 * i], nodes_[2 * i + 1]);
    }
  }

  std::size_t size() const noexcept { return size_; }
  Real total() const noexcept { return nodes_.empty() ? Real{0} : nodes_[1]; }

  /// Prefix sums, one per weight (padding excluded).
  std::span<const Real> leaves() const noexcept {
    return std::span<const Real>(nodes_).subspan(width_, size_);
  }

  /// Heap-ordered node array: index 1 is the root, children of i are 2i and 2i+1.
  std::span<const Real> nodes() const noexcept { return nodes_; }

  std::size_t descend(Real u) const {
    if (!(u >= Real{0}) || u > total()) {
      throw ValidationError("descend: u' outside [0, total]");
    }
    if (u == total()) {
      if (lastPositive_ == size_) throw ValidationError("descend: all weights are zero");
      return lastPositive_;
    }
    std::size_t i = 1;
    while (i < width_) i = nodes_[2 * i] > u ? 2 * i : 2 * i + 1;
    return i - width_;
  }

 private:
  std::size_t size_ = 0;
  std::size_t width_ = 0;
  std::size_t lastPositive_ = 0;
  std::vector<Real> nodes_;
};

}  // namespace skiplda
