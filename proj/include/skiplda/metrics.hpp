#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "skiplda/corpus.hpp"
#include "skiplda/topic_state.hpp"

namespace skiplda {

/// Log-likelihood per token, base 2:
///
///   LLPT = 1/N sum_n log2 sum_k (D[d][k]+alpha)/(len_d+K*alpha) * (W[v][k]+beta)/(colsum_k+V*beta)
///
/// D is recounted from the chunks' current topics, so the value reflects the
/// post-update state. The inner sum is split into alpha * sum_k What[v][k] (once
/// per word) plus the document's nonzero topics.
inline double computeLLPT(std::span<const Chunk> chunks, const WordTopicHybrid& w, double alpha,
                          double beta) {
  const std::uint32_t numTopics = w.numTopics();
  const auto denominators = topicDenominators(w, beta);
  std::vector<double> row(numTopics);
  DocTopic docs;
  double total = 0.0;
  std::uint64_t numTokens = 0;

  for (const Chunk& chunk : chunks) {
    rebuildDocTopicRows(chunk, numTopics, {}, docs, {});
    std::vector<std::uint32_t> localOf(chunk.tokens.size());
    for (std::size_t d = 0; d < chunk.numDocs(); ++d) {
      for (std::uint32_t p : chunk.index.row(d)) localOf[p] = static_cast<std::uint32_t>(d);
    }
    std::uint32_t currentWord = UINT32_MAX;
    double rowMass = 0.0;
    for (std::size_t p = 0; p < chunk.tokens.size(); ++p) {
      const Token& t = chunk.tokens[p];
      if (t.word != currentWord) {
        currentWord = t.word;
        normalizeRow(w, currentWord, denominators, beta, row);
        rowMass = 0.0;
        for (double x : row) rowMass += x;
      }
      const DocRowView doc = docs.row(localOf[p]);
      double inner = alpha * rowMass;
      for (PackedEntry e : doc.entries) inner += static_cast<double>(e.lo()) * row[e.hi()];
      inner /= static_cast<double>(doc.rowSum) + numTopics * alpha;
      total += std::log2(inner);
      ++numTokens;
    }
  }
  if (numTokens == 0) throw std::invalid_argument("LLPT is undefined for an empty corpus");
  return total / static_cast<double>(numTokens);
}

struct MetricsRow {
  std::uint32_t iteration = 0;
  double llpt = 0.0;
  double tokensPerSecond = 0.0;
  double skipRateFinal = 0.0;
  double skipRateSTree = 0.0;
  double wallClockSeconds = 0.0;
};

inline constexpr const char* kMetricsHeader =
    "iteration,llpt,tokens_per_second,skip_rate_final,skip_rate_stree,wall_clock_s";

namespace detail {

/// Shortest round-trip decimal form; std::to_chars ignores the global locale.
inline void appendDouble(std::string& out, double value) {
  if (std::isnan(value)) {
    out += "nan";
    return;
  }
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  out.append(buf, ptr);
}

}  // namespace detail

inline void writeMetricsCsv(std::span<const MetricsRow> rows, std::ostream& out) {
  std::string text = kMetricsHeader;
  text += '\n';
  for (const MetricsRow& r : rows) {
    text += std::to_string(r.iteration);
    for (double v : {r.llpt, r.tokensPerSecond, r.skipRateFinal, r.skipRateSTree, r.wallClockSeconds}) {
      text += ',';
      detail::appendDouble(text, v);
    }
    text += '\n';
  }
  out << text;
}

inline void emitMetricsCsv(std::span<const MetricsRow> rows, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open metrics file '" + path + "' for writing");
  writeMetricsCsv(rows, out);
  out.flush();
  if (!out) throw std::runtime_error("failed writing metrics file '" + path + "'");
}

}  // namespace skiplda
