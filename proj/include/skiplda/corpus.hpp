#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <istream>
#include <numeric>
#include <queue>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "skiplda/error.hpp"
#include "skiplda/rng.hpp"

namespace skiplda {

inline constexpr std::uint32_t kMaxTopics = 1u << 16;

struct Token {
  std::uint32_t word = 0;
  std::uint32_t doc = 0;
  std::uint32_t topic = 0;
  /// Position in ingestion order. Stable across relabeling and chunking; keys the counter RNG.
  std::uint64_t serial = 0;

  friend bool operator==(const Token&, const Token&) = default;
};

struct Vocabulary {
  std::vector<std::string> words;           // indexed by current word id
  std::vector<std::uint64_t> tokenCount;    // indexed by current word id
  std::vector<std::uint32_t> originalId;    // current id -> id in the input file
  std::uint32_t denseWordCount = 0;

  std::uint32_t size() const noexcept { return static_cast<std::uint32_t>(tokenCount.size()); }
  bool isDense(std::uint32_t word) const noexcept { return word < denseWordCount; }

  /// Inverse of `originalId`.
  std::vector<std::uint32_t> currentIdOfOriginal() const {
    std::vector<std::uint32_t> inverse(originalId.size());
    for (std::uint32_t w = 0; w < originalId.size(); ++w) inverse[originalId[w]] = w;
    return inverse;
  }
};

struct RawCorpus {
  std::vector<Token> tokens;
  std::uint32_t numDocs = 0;
  Vocabulary vocab;
};

namespace detail {

inline std::vector<std::string_view> splitWhitespace(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) fields.push_back(line.substr(i, j - i));
    i = j;
  }
  return fields;
}

inline std::uint64_t parseCount(std::string_view field, std::size_t line, const char* what) {
  std::uint64_t value = 0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc{} || ptr != field.data() + field.size()) {
    throw ParseError(line, std::string("expected a non-negative integer for ") + what + ", got '" +
                               std::string(field) + "'");
  }
  return value;
}

}  // namespace detail

/// Reads a UCI bag-of-words corpus.
///
/// `docword` holds D, W and NNZ (one per line, or whitespace-separated) followed by
/// NNZ lines of "docId wordId count" with 1-based ids. A pair with count c expands
/// to c tokens. `vocab` is optional; when given it must list exactly W words, one
/// per line. Word ids in the result are 0-based file ids; relabeling happens later.
inline RawCorpus loadUciBow(std::istream& docword, std::istream* vocab = nullptr) {
  RawCorpus corpus;
  std::string line;
  std::size_t lineNo = 0;

  std::uint64_t header[3] = {0, 0, 0};
  int headerFilled = 0;
  while (headerFilled < 3 && std::getline(docword, line)) {
    ++lineNo;
    for (auto field : detail::splitWhitespace(line)) {
      if (headerFilled == 3) throw ParseError(lineNo, "unexpected extra header field");
      static constexpr const char* kNames[] = {"D", "W", "NNZ"};
      header[headerFilled] = detail::parseCount(field, lineNo, kNames[headerFilled]);
      ++headerFilled;
    }
  }
  if (headerFilled < 3) throw ParseError(lineNo + 1, "truncated header: need D, W and NNZ");
  const std::uint64_t numDocs = header[0];
  const std::uint64_t numWords = header[1];
  const std::uint64_t nnz = header[2];
  if (numDocs > UINT32_MAX || numWords > UINT32_MAX) {
    throw ValidationError("D or W exceeds 32-bit id space");
  }

  corpus.numDocs = static_cast<std::uint32_t>(numDocs);
  corpus.vocab.tokenCount.assign(numWords, 0);

  std::uint64_t entries = 0;
  while (std::getline(docword, line)) {
    ++lineNo;
    auto fields = detail::splitWhitespace(line);
    if (fields.empty()) continue;
    if (fields.size() != 3) {
      throw ParseError(lineNo, "expected 'docId wordId count', got " +
                                   std::to_string(fields.size()) + " fields");
    }
    const auto doc = detail::parseCount(fields[0], lineNo, "docId");
    const auto word = detail::parseCount(fields[1], lineNo, "wordId");
    const auto count = detail::parseCount(fields[2], lineNo, "count");
    if (doc < 1 || doc > numDocs) {
      throw ValidationError("line " + std::to_string(lineNo) + ": docId " + std::to_string(doc) +
                            " outside [1, " + std::to_string(numDocs) + "]");
    }
    if (word < 1 || word > numWords) {
      throw ValidationError("line " + std::to_string(lineNo) + ": wordId " + std::to_string(word) +
                            " outside [1, " + std::to_string(numWords) + "]");
    }
    ++entries;
    if (entries > nnz) {
      throw ParseError(lineNo, "more entries than the declared NNZ of " + std::to_string(nnz));
    }
    for (std::uint64_t c = 0; c < count; ++c) {
      corpus.tokens.push_back(Token{static_cast<std::uint32_t>(word - 1),
                                    static_cast<std::uint32_t>(doc - 1), 0,
                                    static_cast<std::uint64_t>(corpus.tokens.size())});
    }
    corpus.vocab.tokenCount[word - 1] += count;
  }
  if (entries != nnz) {
    throw ParseError(lineNo, "declared NNZ " + std::to_string(nnz) + " but found " +
                                 std::to_string(entries) + " entries");
  }

  corpus.vocab.originalId.resize(numWords);
  std::iota(corpus.vocab.originalId.begin(), corpus.vocab.originalId.end(), 0u);
  corpus.vocab.denseWordCount = static_cast<std::uint32_t>(numWords);
  corpus.vocab.words.reserve(numWords);
  if (vocab != nullptr) {
    std::size_t vocabLine = 0;
    while (std::getline(*vocab, line)) {
      ++vocabLine;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty() && vocab->peek() == std::char_traits<char>::eof()) break;
      if (corpus.vocab.words.size() == numWords) {
        throw ValidationError("vocabulary has more than the declared W = " +
                              std::to_string(numWords) + " words (line " +
                              std::to_string(vocabLine) + ")");
      }
      corpus.vocab.words.push_back(line);
    }
    if (corpus.vocab.words.size() != numWords) {
      throw ValidationError("vocabulary lists " + std::to_string(corpus.vocab.words.size()) +
                            " words but docword declares W = " + std::to_string(numWords));
    }
  } else {
    for (std::uint64_t w = 0; w < numWords; ++w) corpus.vocab.words.push_back(std::to_string(w + 1));
  }
  return corpus;
}

/// Renumbers words so token counts are non-increasing in word id (ties keep the
/// previous id order) and marks words with more than `denseThreshold` tokens dense.
inline void relabelByFrequency(RawCorpus& corpus, std::uint64_t denseThreshold) {
  Vocabulary& old = corpus.vocab;
  const std::uint32_t numWords = old.size();

  std::vector<std::uint64_t> counts(numWords, 0);
  for (const Token& t : corpus.tokens) ++counts[t.word];

  std::vector<std::uint32_t> order(numWords);
  std::iota(order.begin(), order.end(), 0u);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::uint32_t a, std::uint32_t b) { return counts[a] > counts[b]; });

  std::vector<std::uint32_t> newIdOf(numWords);
  Vocabulary next;
  next.words.reserve(numWords);
  next.tokenCount.reserve(numWords);
  next.originalId.reserve(numWords);
  for (std::uint32_t rank = 0; rank < numWords; ++rank) {
    const std::uint32_t w = order[rank];
    newIdOf[w] = rank;
    next.words.push_back(w < old.words.size() ? std::move(old.words[w]) : std::to_string(w + 1));
    next.tokenCount.push_back(counts[w]);
    next.originalId.push_back(w < old.originalId.size() ? old.originalId[w] : w);
    if (counts[w] > denseThreshold) ++next.denseWordCount;
  }
  for (Token& t : corpus.tokens) t.word = newIdOf[t.word];
  corpus.vocab = std::move(next);
}

/// CSR over token positions grouped by the chunk-local document row.
struct InvertedIndex {
  std::vector<std::uint32_t> rowOffsets;
  std::vector<std::uint32_t> tokenIndices;

  std::span<const std::uint32_t> row(std::size_t localDoc) const {
    return std::span<const std::uint32_t>(tokenIndices)
        .subspan(rowOffsets[localDoc], rowOffsets[localDoc + 1] - rowOffsets[localDoc]);
  }
};

/// A document-disjoint slice of the corpus. Tokens are sorted by (word, doc, serial),
/// so dense-word tokens form the prefix [0, denseBoundary).
struct Chunk {
  std::vector<std::uint32_t> docs;  // owned global doc ids, ascending
  std::vector<Token> tokens;
  std::size_t denseBoundary = 0;
  InvertedIndex index;

  std::size_t numDocs() const noexcept { return docs.size(); }

  std::uint32_t localDoc(std::uint32_t globalDoc) const {
    auto it = std::lower_bound(docs.begin(), docs.end(), globalDoc);
    if (it == docs.end() || *it != globalDoc) {
      throw ValidationError("document " + std::to_string(globalDoc) + " is not owned by this chunk");
    }
    return static_cast<std::uint32_t>(it - docs.begin());
  }
};

inline InvertedIndex buildInvertedIndex(const Chunk& chunk) {
  InvertedIndex index;
  index.rowOffsets.assign(chunk.numDocs() + 1, 0);
  std::vector<std::uint32_t> local(chunk.tokens.size());
  for (std::size_t p = 0; p < chunk.tokens.size(); ++p) {
    local[p] = chunk.localDoc(chunk.tokens[p].doc);
    ++index.rowOffsets[local[p] + 1];
  }
  std::partial_sum(index.rowOffsets.begin(), index.rowOffsets.end(), index.rowOffsets.begin());
  index.tokenIndices.resize(chunk.tokens.size());
  std::vector<std::uint32_t> cursor(index.rowOffsets.begin(), index.rowOffsets.end() - 1);
  for (std::size_t p = 0; p < chunk.tokens.size(); ++p) {
    index.tokenIndices[cursor[local[p]]++] = static_cast<std::uint32_t>(p);
  }
  return index;
}

/// Assigns whole documents to `numChunks` chunks, heaviest document first onto the
/// currently lightest chunk, then sorts each chunk's tokens and builds its index.
inline std::vector<Chunk> partitionIntoChunks(std::span<const Token> tokens, std::uint32_t numDocs,
                                              std::uint32_t numChunks,
                                              std::uint32_t denseWordCount) {
  if (numChunks < 1) throw ConfigError("numChunks must be at least 1");
  if (numChunks > numDocs) {
    throw ConfigError("numChunks (" + std::to_string(numChunks) + ") exceeds document count (" +
                      std::to_string(numDocs) + ")");
  }

  std::vector<std::uint64_t> docLength(numDocs, 0);
  for (const Token& t : tokens) {
    if (t.doc >= numDocs) throw ValidationError("token doc id out of range");
    ++docLength[t.doc];
  }
  std::vector<std::uint32_t> byLength(numDocs);
  std::iota(byLength.begin(), byLength.end(), 0u);
  std::stable_sort(byLength.begin(), byLength.end(), [&](std::uint32_t a, std::uint32_t b) {
    return docLength[a] > docLength[b];
  });

  using Load = std::pair<std::uint64_t, std::uint32_t>;  // (tokens, chunk)
  std::priority_queue<Load, std::vector<Load>, std::greater<>> lightest;
  for (std::uint32_t c = 0; c < numChunks; ++c) lightest.push({0, c});
  std::vector<std::uint32_t> chunkOf(numDocs);
  for (std::uint32_t doc : byLength) {
    auto [load, c] = lightest.top();
    lightest.pop();
    chunkOf[doc] = c;
    lightest.push({load + docLength[doc], c});
  }

  std::vector<Chunk> chunks(numChunks);
  for (std::uint32_t doc = 0; doc < numDocs; ++doc) chunks[chunkOf[doc]].docs.push_back(doc);
  for (const Token& t : tokens) chunks[chunkOf[t.doc]].tokens.push_back(t);
  for (Chunk& chunk : chunks) {
    std::sort(chunk.tokens.begin(), chunk.tokens.end(), [](const Token& a, const Token& b) {
      return std::tie(a.word, a.doc, a.serial) < std::tie(b.word, b.doc, b.serial);
    });
    chunk.denseBoundary = static_cast<std::size_t>(
        std::partition_point(chunk.tokens.begin(), chunk.tokens.end(),
                             [&](const Token& t) { return t.word < denseWordCount; }) -
        chunk.tokens.begin());
    chunk.index = buildInvertedIndex(chunk);
  }
  return chunks;
}

/// Draws every topic uniformly from [0, K) with the counter RNG at iteration 0.
inline void initializeTopics(std::span<Token> tokens, std::uint32_t numTopics, std::uint64_t seed) {
  if (numTopics < 1) throw ConfigError("K must be at least 1");
  if (numTopics > kMaxTopics) {
    throw ConfigError("K = " + std::to_string(numTopics) + " exceeds the 16-bit packing limit of " +
                      std::to_string(kMaxTopics));
  }
  for (Token& t : tokens) {
    const double u = counterUniform(seed, 0, t.serial);
    t.topic = std::min(static_cast<std::uint32_t>(u * numTopics), numTopics - 1);
  }
}

}  // namespace skiplda
