#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "skiplda/error.hpp"
#include "skiplda/packed.hpp"
#include "skiplda/prefix_tree.hpp"
#include "skiplda/topic_state.hpp"

namespace skiplda {

struct RankedTopic {
  std::uint32_t topic = 0;
  double value = 0.0;

  friend bool operator==(const RankedTopic&, const RankedTopic&) = default;
};

/// The out.size() largest entries of `row`, largest first; equal values keep the
/// smaller topic id first. One pass with a sorted insertion window.
inline void topRanked(std::span<const double> row, std::span<RankedTopic> out) {
  const std::size_t want = out.size();
  if (row.size() < want) {
    throw ConfigError("need at least " + std::to_string(want) + " topics, row has " +
                      std::to_string(row.size()));
  }
  std::size_t filled = 0;
  for (std::uint32_t k = 0; k < row.size(); ++k) {
    const double v = row[k];
    if (filled == want && !(v > out[want - 1].value)) continue;
    std::size_t pos = filled < want ? filled++ : want - 1;
    while (pos > 0 && out[pos - 1].value < v) {
      out[pos] = out[pos - 1];
      --pos;
    }
    out[pos] = RankedTopic{k, v};
  }
}

/// Per-word most-popular-topic metadata: the top g+1 normalized entries of every
/// word's row and the Q' mass (alpha times the row with its maximum removed).
class TopTopicsTable {
 public:
  TopTopicsTable() = default;
  TopTopicsTable(std::uint32_t numWords, std::uint32_t g)
      : g_(g), entries_(static_cast<std::size_t>(numWords) * (g + 1)), qPrime_(numWords, 0.0) {}

  std::uint32_t g() const noexcept { return g_; }
  std::uint32_t numWords() const noexcept { return static_cast<std::uint32_t>(qPrime_.size()); }

  std::span<const RankedTopic> row(std::uint32_t word) const {
    return std::span<const RankedTopic>(entries_).subspan(static_cast<std::size_t>(word) * (g_ + 1),
                                                          g_ + 1);
  }
  std::span<RankedTopic> row(std::uint32_t word) {
    return std::span<RankedTopic>(entries_).subspan(static_cast<std::size_t>(word) * (g_ + 1), g_ + 1);
  }
  double qPrime(std::uint32_t word) const noexcept { return qPrime_[word]; }
  void setQPrime(std::uint32_t word, double q) noexcept { qPrime_[word] = q; }

  /// (K1, K2) packed into one word, as stored in each token's aux slot.
  PackedEntry packedK(std::uint32_t word) const {
    const auto r = row(word);
    return packEntry(r[0].topic, r[1].topic);
  }

 private:
  std::uint32_t g_ = 0;
  std::vector<RankedTopic> entries_;
  std::vector<double> qPrime_;
};

/// Sum of alpha * row[k] in topic order, skipping `excluded`; the running sum
/// matches the last prefix sum of a tree built from the same weights bit for bit.
inline double alphaMassExcluding(std::span<const double> row, double alpha, std::uint32_t excluded) {
  double total = 0.0;
  for (std::uint32_t k = 0; k < row.size(); ++k) total += alpha * (k == excluded ? 0.0 : row[k]);
  return total;
}

inline TopTopicsTable mptGenerate(const WordTopicHybrid& w, std::span<const double> denominators,
                                  double alpha, double beta, std::uint32_t g) {
  if (g < 1) throw ConfigError("g must be at least 1");
  if (w.numTopics() < g + 1) {
    throw ConfigError("three-branch sampling with g = " + std::to_string(g) + " needs K >= " +
                      std::to_string(g + 1));
  }
  TopTopicsTable table(w.numWords(), g);
  std::vector<double> scratch(w.numTopics());
  for (std::uint32_t v = 0; v < w.numWords(); ++v) {
    normalizeRow(w, v, denominators, beta, scratch);
    auto top = table.row(v);
    topRanked(scratch, top);
    table.setQPrime(v, alphaMassExcluding(scratch, alpha, top[0].topic));
  }
  return table;
}

/// Mass of the most-popular-topic branch: a1 * (b1 + alpha).
constexpr double computeM(double a1, double b1, double alpha) noexcept { return a1 * (b1 + alpha); }

/// Upper bound on the residual document mass S'.
///
/// `a` holds the g+1 largest normalized values (descending), `b` the document's
/// counts at the first g of those topics. The tail counts are rowSum minus the
/// first g counts and are weighted by a[g], which dominates every remaining value.
inline double computeSest(std::span<const double> a, std::span<const std::uint32_t> b,
                          std::uint32_t rowSum) {
  const std::size_t g = b.size();
  if (g < 1) throw ConfigError("g must be at least 1");
  if (a.size() != g + 1) throw ConfigError("computeSest: need g+1 ranked values");
  double head = 0.0;
  std::uint64_t known = b[0];
  for (std::size_t i = 1; i < g; ++i) {
    head += a[i] * static_cast<double>(b[i]);
    known += b[i];
  }
  if (known > rowSum) throw ValidationError("computeSest: ranked counts exceed the row sum");
  return head + a[g] * static_cast<double>(rowSum - known);
}

/// Relative widening of S_est before the skip test, so floating-point rounding in
/// the exact S' sum can never put a skipped token outside [0, t_M).
inline constexpr double kSestSlack = 1e-9;

struct SkipTest {
  double m = 0.0;
  double sEst = 0.0;
  double threshold = 0.0;
  bool skipped = false;
};

/// Decides from (K1..K_{g+1}, C1..C_g) alone whether u lands in the M interval.
/// `top` is the word's ranked row, `b` the document counts at its first g topics.
inline SkipTest mptCalculate(std::span<const RankedTopic> top, std::span<const std::uint32_t> b,
                             std::uint32_t rowSum, double qPrime, double alpha, double u) {
  const std::size_t g = b.size();
  if (top.size() != g + 1) throw ConfigError("mptCalculate: need g+1 ranked topics");
  double a[64];
  if (g + 1 > std::size(a)) throw ConfigError("g too large");
  for (std::size_t i = 0; i <= g; ++i) a[i] = top[i].value;

  SkipTest test;
  test.m = computeM(a[0], static_cast<double>(b[0]), alpha);
  test.sEst = computeSest(std::span<const double>(a, g + 1), b, rowSum);
  const double denom = test.m + test.sEst * (1.0 + kSestSlack) + qPrime;
  test.threshold = denom > 0.0 ? test.m / denom : 0.0;
  test.skipped = u < test.threshold;
  return test;
}

/// Reusable per-worker buffers for the per-document S / S' trees.
struct SamplerScratch {
  PrefixMaxTree<double> sTree;
  std::vector<double> sWeights;
  std::vector<std::uint32_t> sTopics;

  /// Builds the S tree over row[k] * D[d][k] for the document's nonzero topics and
  /// returns its total (0 for an empty document).
  double buildDocTree(std::span<const double> row, DocRowView doc) {
    sWeights.clear();
    sTopics.clear();
    for (PackedEntry e : doc.entries) {
      sWeights.push_back(row[e.hi()] * static_cast<double>(e.lo()));
      sTopics.push_back(e.hi());
    }
    if (sWeights.empty()) return 0.0;
    sTree.assign(sWeights);
    return sTree.total();
  }

  std::uint32_t descendDocTree(double uPrime) const {
    return sTopics[sTree.descend(std::min(uPrime, sTree.total()))];
  }
};

/// Q-tree weights alpha * row[k].
inline std::vector<double> qWeights(std::span<const double> row, double alpha) {
  std::vector<double> q(row.size());
  for (std::size_t k = 0; k < row.size(); ++k) q[k] = alpha * row[k];
  return q;
}

struct TwoBranchTrace {
  double s = 0.0;
  double q = 0.0;
  bool usedS = false;
  double uPrime = 0.0;
  std::uint32_t topic = 0;
};

/// Two-branch draw for one token. `row` is the word's normalized row and `qTree` is
/// built over alpha * row; the S tree is built here over row * D[d].
inline TwoBranchTrace twoBranchSample(std::span<const double> row, const PrefixMaxTree<double>& qTree,
                                      DocRowView doc, double u, SamplerScratch& scratch) {
  TwoBranchTrace trace;
  trace.s = scratch.buildDocTree(row, doc);
  trace.q = qTree.total();
  const double total = trace.s + trace.q;
  if (!(total > 0.0)) throw ValidationError("two-branch sampling: S + Q is zero (alpha = 0 and empty S)");
  if (!(u >= 0.0 && u <= 1.0)) throw ValidationError("two-branch sampling: u outside [0, 1]");
  if (trace.s > 0.0 && u <= trace.s / total) {
    trace.usedS = true;
    trace.uPrime = std::min(u * total, trace.s);
    trace.topic = scratch.descendDocTree(trace.uPrime);
  } else {
    trace.uPrime = std::min((1.0 - u) * total, trace.q);
    trace.topic = static_cast<std::uint32_t>(qTree.descend(trace.uPrime));
  }
  return trace;
}

enum class Branch : std::uint8_t { MostPopular, Residual, Smoothing };

struct ThreeBranchTrace {
  double m = 0.0;
  double sPrime = 0.0;
  double qPrime = 0.0;
  double tM = 0.0;
  double tS = 0.0;
  double uPrime = 0.0;
  Branch branch = Branch::MostPopular;
  std::uint32_t topic = 0;
};

/// Residual three-branch draw for a token that survived the skip test.
///
/// `rowPrime` is the normalized row with K1 set to zero and `qPrimeTree` is built
/// over alpha * rowPrime. The unit interval is laid out as [M | S' | Q']:
/// [0, t_M) maps to K1, [t_M, t_S) is rescaled onto the S' tree and [t_S, 1) onto
/// the Q' tree.
inline ThreeBranchTrace threeBranchSample(std::span<const double> rowPrime,
                                          const PrefixMaxTree<double>& qPrimeTree, DocRowView doc,
                                          std::uint32_t k1, double m, double u,
                                          SamplerScratch& scratch) {
  if (!(u >= 0.0 && u < 1.0)) throw ValidationError("three-branch sampling: u outside [0, 1)");
  ThreeBranchTrace trace;
  trace.m = m;
  trace.sPrime = scratch.buildDocTree(rowPrime, doc);
  trace.qPrime = qPrimeTree.total();
  const double denom = m + trace.sPrime + trace.qPrime;
  if (!(denom > 0.0)) throw ValidationError("three-branch sampling: total mass is zero");
  trace.tM = m / denom;
  trace.tS = (m + trace.sPrime) / denom;
  if (u < trace.tM) {
    trace.branch = Branch::MostPopular;
    trace.topic = k1;
  } else if (u < trace.tS) {
    trace.branch = Branch::Residual;
    trace.uPrime = std::min((u - trace.tM) / (trace.tS - trace.tM) * trace.sPrime, trace.sPrime);
    trace.topic = scratch.descendDocTree(trace.uPrime);
  } else {
    trace.branch = Branch::Smoothing;
    trace.uPrime = std::min((u - trace.tS) / (1.0 - trace.tS) * trace.qPrime, trace.qPrime);
    trace.topic = static_cast<std::uint32_t>(qPrimeTree.descend(trace.uPrime));
  }
  return trace;
}

}  // namespace skiplda
