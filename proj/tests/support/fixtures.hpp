#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "skiplda/corpus.hpp"

namespace skiplda::testing {

/// Builds a corpus directly from (doc, word) pairs; serials follow the pair order.
inline RawCorpus makeCorpus(std::uint32_t numDocs, std::uint32_t numWords,
                            const std::vector<std::pair<std::uint32_t, std::uint32_t>>& docWord) {
  RawCorpus corpus;
  corpus.numDocs = numDocs;
  corpus.vocab.tokenCount.assign(numWords, 0);
  for (std::uint32_t w = 0; w < numWords; ++w) {
    corpus.vocab.words.push_back("w" + std::to_string(w));
    corpus.vocab.originalId.push_back(w);
  }
  corpus.vocab.denseWordCount = numWords;
  for (auto [doc, word] : docWord) {
    corpus.tokens.push_back(Token{word, doc, 0, corpus.tokens.size()});
    ++corpus.vocab.tokenCount[word];
  }
  return corpus;
}

// The seven-token, three-document, four-word running example. In chunk order
// (sorted by word, then doc) the tokens are
//   pos: 0      1      2      3      4      5      6
//   w/d: 0/0    0/2    1/1    1/2    2/0    2/2    3/1
// so document rows of the inverted index are {0,4}, {2,6}, {1,3,5}.
inline constexpr const char* kTinyDocword =
    "3\n4\n7\n"
    "1 1 1\n1 3 1\n"
    "2 2 1\n2 4 1\n"
    "3 1 1\n3 2 1\n3 3 1\n";

inline RawCorpus tinyCorpus() {
  std::istringstream in(kTinyDocword);
  return loadUciBow(in);
}

/// Topics of the worked example, indexed by serial (docword line order):
/// chunk positions 0..6 carry topics 2,1,0,3,1,0,1, giving column sums {2,3,1,1},
/// word 0 row {0,1,1,0} and document 2 row {1,1,0,1}.
inline std::vector<std::uint32_t> tinyTopicsBySerial() { return {2, 1, 0, 1, 1, 3, 0}; }

struct LdaCorpusShape {
  std::uint32_t docs = 2000;
  std::uint32_t words = 1000;
  std::uint32_t topics = 20;
  std::uint32_t meanDocLength = 100;
  double docConcentration = 0.1;
  double wordConcentration = 0.05;
  std::uint64_t seed = 7;
};

namespace detail {

inline std::vector<double> dirichlet(std::mt19937_64& rng, std::size_t n, double concentration) {
  std::gamma_distribution<double> gamma(concentration, 1.0);
  std::vector<double> p(n);
  double sum = 0.0;
  for (double& x : p) sum += (x = gamma(rng) + 1e-300);
  for (double& x : p) x /= sum;
  return p;
}

inline std::uint32_t drawCdf(const std::vector<double>& cdf, double u) {
  return static_cast<std::uint32_t>(std::min<std::size_t>(
      std::upper_bound(cdf.begin(), cdf.end(), u * cdf.back()) - cdf.begin(), cdf.size() - 1));
}

}  // namespace detail

/// Corpus drawn from an LDA generative model with known topic-word distributions.
inline RawCorpus generateLdaCorpus(const LdaCorpusShape& shape) {
  std::mt19937_64 rng(shape.seed);
  std::vector<std::vector<double>> topicCdf;
  for (std::uint32_t k = 0; k < shape.topics; ++k) {
    auto p = detail::dirichlet(rng, shape.words, shape.wordConcentration);
    std::partial_sum(p.begin(), p.end(), p.begin());
    topicCdf.push_back(std::move(p));
  }
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<std::uint32_t> length(shape.meanDocLength / 2, shape.meanDocLength * 3 / 2);
  std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs;
  for (std::uint32_t d = 0; d < shape.docs; ++d) {
    auto theta = detail::dirichlet(rng, shape.topics, shape.docConcentration);
    std::partial_sum(theta.begin(), theta.end(), theta.begin());
    const std::uint32_t n = length(rng);
    for (std::uint32_t i = 0; i < n; ++i) {
      const auto k = detail::drawCdf(theta, unit(rng));
      pairs.emplace_back(d, detail::drawCdf(topicCdf[k], unit(rng)));
    }
  }
  return makeCorpus(shape.docs, shape.words, pairs);
}

/// Words drawn i.i.d. from Zipf(s) over `words` ranks; every document has `docLength` tokens.
inline RawCorpus generateZipfCorpus(std::uint32_t docs, std::uint32_t words, std::uint32_t docLength,
                                    double s, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<double> cdf(words);
  double running = 0.0;
  for (std::uint32_t r = 0; r < words; ++r) cdf[r] = (running += std::pow(r + 1.0, -s));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs;
  pairs.reserve(static_cast<std::size_t>(docs) * docLength);
  for (std::uint32_t d = 0; d < docs; ++d) {
    for (std::uint32_t i = 0; i < docLength; ++i) pairs.emplace_back(d, detail::drawCdf(cdf, unit(rng)));
  }
  return makeCorpus(docs, words, pairs);
}

/// Small random corpus: up to maxTokens tokens over up to maxDocs docs and maxWords words.
inline RawCorpus randomSmallCorpus(std::mt19937_64& rng, std::uint32_t maxTokens, std::uint32_t maxDocs,
                                   std::uint32_t maxWords) {
  const std::uint32_t docs = std::uniform_int_distribution<std::uint32_t>(1, maxDocs)(rng);
  const std::uint32_t words = std::uniform_int_distribution<std::uint32_t>(1, maxWords)(rng);
  const std::uint32_t tokens = std::uniform_int_distribution<std::uint32_t>(1, maxTokens)(rng);
  // Skewed word choice so dense and sparse rows both occur.
  std::vector<double> cdf(words);
  double running = 0.0;
  for (std::uint32_t r = 0; r < words; ++r) cdf[r] = (running += 1.0 / (r + 1.0));
  std::uniform_int_distribution<std::uint32_t> docPick(0, docs - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs;
  for (std::uint32_t i = 0; i < tokens; ++i) pairs.emplace_back(docPick(rng), detail::drawCdf(cdf, unit(rng)));
  return makeCorpus(docs, words, pairs);
}

}  // namespace skiplda::testing
