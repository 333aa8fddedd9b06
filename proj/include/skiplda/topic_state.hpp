#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "skiplda/corpus.hpp"
#include "skiplda/error.hpp"
#include "skiplda/packed.hpp"

namespace skiplda {

/// One document's sparse topic counts: entries are (topic, count), ascending topic.
struct DocRowView {
  std::span<const PackedEntry> entries;
  std::uint32_t rowSum = 0;

  std::uint32_t count(std::uint32_t topic) const noexcept {
    auto it = std::lower_bound(entries.begin(), entries.end(), topic,
                               [](PackedEntry e, std::uint32_t k) { return e.hi() < k; });
    return (it != entries.end() && it->hi() == topic) ? it->lo() : 0u;
  }
};

/// Doc-topic counts for the documents of one chunk, rows in chunk-local doc order.
struct DocTopic {
  std::vector<std::uint32_t> rowOffsets{0};
  std::vector<PackedEntry> entries;
  std::vector<std::uint32_t> rowSum;

  std::size_t numRows() const noexcept { return rowSum.size(); }

  DocRowView row(std::size_t localDoc) const {
    return DocRowView{std::span<const PackedEntry>(entries).subspan(
                          rowOffsets[localDoc], rowOffsets[localDoc + 1] - rowOffsets[localDoc]),
                      rowSum[localDoc]};
  }
};

/// Dense per-topic counter reused across documents; only touched slots are reset.
class TopicCounter {
 public:
  explicit TopicCounter(std::uint32_t numTopics = 0) : counts_(numTopics, 0) {}

  void add(std::uint32_t topic) {
    if (counts_[topic]++ == 0) touched_.push_back(topic);
  }
  std::uint32_t operator[](std::uint32_t topic) const noexcept { return counts_[topic]; }

  /// Touched topics in ascending order.
  std::span<const std::uint32_t> sortedTouched() {
    std::sort(touched_.begin(), touched_.end());
    return touched_;
  }

  void clear() {
    for (std::uint32_t k : touched_) counts_[k] = 0;
    touched_.clear();
  }

 private:
  std::vector<std::uint32_t> counts_;
  std::vector<std::uint32_t> touched_;
};

/// Rebuilds every D row of `chunk` by walking its inverted index.
///
/// When `packedK` is non-empty it holds the (K1, K2) pair of each token position;
/// the matching (C1, C2) = (D[d][K1], D[d][K2]) is then written into `packedC`.
inline void rebuildDocTopicRows(const Chunk& chunk, std::uint32_t numTopics,
                                std::span<const PackedEntry> packedK, DocTopic& out,
                                std::span<PackedEntry> packedC) {
  const bool extractPairs = !packedK.empty();
  if (extractPairs && (packedK.size() != chunk.tokens.size() || packedC.size() != chunk.tokens.size())) {
    throw ValidationError("rebuildDocTopicRows: aux arrays do not match the chunk size");
  }
  out.rowOffsets.assign(1, 0);
  out.entries.clear();
  out.rowSum.assign(chunk.numDocs(), 0);

  TopicCounter counter(numTopics);
  for (std::size_t d = 0; d < chunk.numDocs(); ++d) {
    const auto positions = chunk.index.row(d);
    for (std::uint32_t p : positions) counter.add(chunk.tokens[p].topic);
    for (std::uint32_t k : counter.sortedTouched()) {
      if (counter[k] >= kHalfLimit) {
        throw CapacityError("document " + std::to_string(chunk.docs[d]) + " holds " +
                            std::to_string(counter[k]) + " tokens of topic " + std::to_string(k) +
                            "; doc-topic counts are limited to 16 bits");
      }
      out.entries.push_back(packEntry(k, counter[k]));
    }
    out.rowOffsets.push_back(static_cast<std::uint32_t>(out.entries.size()));
    out.rowSum[d] = static_cast<std::uint32_t>(positions.size());
    if (extractPairs) {
      for (std::uint32_t p : positions) {
        packedC[p] = packEntry(counter[packedK[p].hi()], counter[packedK[p].lo()]);
      }
    }
    counter.clear();
  }
}

/// Word-topic counts split by word frequency: the first `denseWords` word ids keep
/// full rows of 32-bit counts, the rest are packed (topic, count) CSR rows.
///
/// `canonical` shadows the dense rows during an iteration so that sampling keeps
/// reading the previous snapshot while the new counts accumulate.
class WordTopicHybrid {
 public:
  WordTopicHybrid() = default;
  WordTopicHybrid(std::uint32_t numWords, std::uint32_t denseWords, std::uint32_t numTopics)
      : numWords_(numWords), denseWords_(denseWords), numTopics_(numTopics),
        dense_(static_cast<std::size_t>(denseWords) * numTopics, 0),
        canonical_(dense_.size(), 0),
        sparseOffsets_(numWords - denseWords + 1, 0),
        columnSums_(numTopics, 0) {
    if (denseWords > numWords) throw ValidationError("more dense words than words");
  }

  std::uint32_t numWords() const noexcept { return numWords_; }
  std::uint32_t denseWords() const noexcept { return denseWords_; }
  std::uint32_t numTopics() const noexcept { return numTopics_; }
  bool isDense(std::uint32_t word) const noexcept { return word < denseWords_; }

  std::span<const std::uint32_t> denseRow(std::uint32_t word) const {
    return std::span<const std::uint32_t>(dense_).subspan(
        static_cast<std::size_t>(word) * numTopics_, numTopics_);
  }
  std::span<const PackedEntry> sparseRow(std::uint32_t word) const {
    const std::size_t r = word - denseWords_;
    return std::span<const PackedEntry>(sparseEntries_)
        .subspan(sparseOffsets_[r], sparseOffsets_[r + 1] - sparseOffsets_[r]);
  }
  std::span<const std::int64_t> columnSums() const noexcept { return columnSums_; }
  std::span<const std::uint32_t> dense() const noexcept { return dense_; }
  std::vector<std::uint32_t>& canonical() noexcept { return canonical_; }
  const std::vector<std::uint32_t>& canonical() const noexcept { return canonical_; }

  std::uint32_t count(std::uint32_t word, std::uint32_t topic) const {
    if (isDense(word)) return denseRow(word)[topic];
    const auto row = sparseRow(word);
    auto it = std::lower_bound(row.begin(), row.end(), topic,
                               [](PackedEntry e, std::uint32_t k) { return e.hi() < k; });
    return (it != row.end() && it->hi() == topic) ? it->lo() : 0u;
  }

  /// Recounts the dense rows from each chunk's dense-token prefix. The canonical
  /// copy starts equal to the result.
  void buildDense(std::span<const Chunk> chunks) {
    std::fill(dense_.begin(), dense_.end(), 0u);
    for (const Chunk& chunk : chunks) {
      for (std::size_t p = 0; p < chunk.denseBoundary; ++p) {
        const Token& t = chunk.tokens[p];
        if (t.word >= denseWords_) {
          throw ValidationError("chunk dense prefix holds sparse word " + std::to_string(t.word));
        }
        ++dense_[static_cast<std::size_t>(t.word) * numTopics_ + t.topic];
      }
    }
    canonical_ = dense_;
    recomputeColumnSums();
  }

  /// Rebuilds the packed CSR rows from each chunk's sparse-token suffix.
  void rebuildSparse(std::span<const Chunk> chunks) {
    const std::size_t rows = numWords_ - denseWords_;
    std::vector<std::uint64_t> tokensPerRow(rows + 1, 0);
    for (const Chunk& chunk : chunks) {
      for (std::size_t p = chunk.denseBoundary; p < chunk.tokens.size(); ++p) {
        ++tokensPerRow[chunk.tokens[p].word - denseWords_ + 1];
      }
    }
    for (std::size_t r = 0; r < rows; ++r) tokensPerRow[r + 1] += tokensPerRow[r];
    std::vector<std::uint32_t> topics(tokensPerRow[rows]);
    std::vector<std::uint64_t> cursor(tokensPerRow.begin(), tokensPerRow.end() - 1);
    for (const Chunk& chunk : chunks) {
      for (std::size_t p = chunk.denseBoundary; p < chunk.tokens.size(); ++p) {
        const Token& t = chunk.tokens[p];
        topics[cursor[t.word - denseWords_]++] = t.topic;
      }
    }

    sparseEntries_.clear();
    sparseOffsets_.assign(rows + 1, 0);
    for (std::size_t r = 0; r < rows; ++r) {
      auto begin = topics.begin() + static_cast<std::ptrdiff_t>(tokensPerRow[r]);
      auto end = topics.begin() + static_cast<std::ptrdiff_t>(tokensPerRow[r + 1]);
      std::sort(begin, end);
      for (auto it = begin; it != end;) {
        auto next = std::find_if(it, end, [k = *it](std::uint32_t x) { return x != k; });
        const auto run = static_cast<std::uint64_t>(next - it);
        if (run >= kHalfLimit) {
          throw CapacityError("sparse word " + std::to_string(r + denseWords_) + " holds " +
                              std::to_string(run) + " tokens of topic " + std::to_string(*it) +
                              "; it should have been classified dense");
        }
        sparseEntries_.push_back(packEntry(*it, static_cast<std::uint32_t>(run)));
        it = next;
      }
      sparseOffsets_[r + 1] = sparseEntries_.size();
    }
    recomputeColumnSums();
  }

  void recomputeColumnSums() {
    std::fill(columnSums_.begin(), columnSums_.end(), 0);
    for (std::size_t i = 0; i < dense_.size(); ++i) columnSums_[i % numTopics_] += dense_[i];
    for (PackedEntry e : sparseEntries_) columnSums_[e.hi()] += e.lo();
  }

  /// Publishes the canonical copy as the new dense snapshot.
  void applyCanonical() {
    dense_ = canonical_;
    recomputeColumnSums();
  }

  /// Full V x K row-major count matrix.
  std::vector<std::int64_t> densify() const {
    std::vector<std::int64_t> full(static_cast<std::size_t>(numWords_) * numTopics_, 0);
    std::copy(dense_.begin(), dense_.end(), full.begin());
    for (std::uint32_t w = denseWords_; w < numWords_; ++w) {
      for (PackedEntry e : sparseRow(w)) {
        full[static_cast<std::size_t>(w) * numTopics_ + e.hi()] = e.lo();
      }
    }
    return full;
  }

  /// Bytes held by the snapshot: dense rows, packed sparse entries and sparse offsets.
  std::uint64_t storedBytes() const noexcept {
    return dense_.size() * sizeof(std::uint32_t) + sparseEntries_.size() * sizeof(PackedEntry) +
           sparseOffsets_.size() * sizeof(std::uint64_t);
  }

  std::size_t sparseNonZeros() const noexcept { return sparseEntries_.size(); }

 private:
  std::uint32_t numWords_ = 0;
  std::uint32_t denseWords_ = 0;
  std::uint32_t numTopics_ = 0;
  std::vector<std::uint32_t> dense_;
  std::vector<std::uint32_t> canonical_;
  std::vector<std::uint64_t> sparseOffsets_{0};
  std::vector<PackedEntry> sparseEntries_;
  std::vector<std::int64_t> columnSums_;
};

/// columnSums[k] + V*beta for every topic: the shared denominator of normalizeRow.
inline std::vector<double> topicDenominators(const WordTopicHybrid& w, double beta) {
  std::vector<double> denom(w.numTopics());
  const double smoothing = static_cast<double>(w.numWords()) * beta;
  for (std::uint32_t k = 0; k < w.numTopics(); ++k) {
    denom[k] = static_cast<double>(w.columnSums()[k]) + smoothing;
  }
  return denom;
}

/// out[k] = (W[word][k] + beta) / (columnSums[k] + V*beta).
///
/// Sparse rows are densified: every slot first gets the zero-count value, then the
/// stored entries overwrite their slots.
inline void normalizeRow(const WordTopicHybrid& w, std::uint32_t word,
                         std::span<const double> denominators, double beta, std::span<double> out) {
  const std::uint32_t numTopics = w.numTopics();
  if (w.isDense(word)) {
    const auto row = w.denseRow(word);
    for (std::uint32_t k = 0; k < numTopics; ++k) {
      out[k] = (static_cast<double>(row[k]) + beta) / denominators[k];
    }
    return;
  }
  for (std::uint32_t k = 0; k < numTopics; ++k) out[k] = beta / denominators[k];
  for (PackedEntry e : w.sparseRow(word)) {
    out[e.hi()] = (static_cast<double>(e.lo()) + beta) / denominators[e.hi()];
  }
}

}  // namespace skiplda
