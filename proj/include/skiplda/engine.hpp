#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <memory>
#include <mutex>
#include <optional>
#include <queue>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "skiplda/checkpoint.hpp"
#include "skiplda/corpus.hpp"
#include "skiplda/error.hpp"
#include "skiplda/metrics.hpp"
#include "skiplda/prefix_tree.hpp"
#include "skiplda/rng.hpp"
#include "skiplda/sampler.hpp"
#include "skiplda/topic_state.hpp"

namespace skiplda {

enum class SamplerKind { TwoBranch, ThreeBranch };

inline constexpr std::uint32_t kMaxG = 32;

struct TrainerConfig {
  std::uint32_t numTopics = 0;
  std::optional<double> alpha;                 // default 50 / K
  double beta = 0.01;
  std::uint32_t g = 2;
  std::uint32_t numChunks = 1;
  std::uint32_t numWorkers = 1;
  std::optional<std::uint64_t> denseThreshold; // default K
  std::uint64_t splitThreshold = 10000;
  std::uint32_t iterations = 0;
  std::uint64_t seed = 0;
  SamplerKind sampler = SamplerKind::ThreeBranch;
  std::uint32_t llptStride = 1;  // 0 disables per-iteration LLPT

  double resolvedAlpha() const { return alpha.value_or(50.0 / static_cast<double>(numTopics)); }
  std::uint64_t resolvedDenseThreshold() const { return denseThreshold.value_or(numTopics); }

  void validate() const {
    if (numTopics < 1 || numTopics > kMaxTopics) {
      throw ConfigError("K must be in [1, " + std::to_string(kMaxTopics) + "], got " +
                        std::to_string(numTopics));
    }
    if (!(resolvedAlpha() > 0.0) || !std::isfinite(resolvedAlpha())) throw ConfigError("alpha must be > 0");
    if (!(beta > 0.0) || !std::isfinite(beta)) throw ConfigError("beta must be > 0");
    if (g < 1 || g > kMaxG) throw ConfigError("g must be in [1, " + std::to_string(kMaxG) + "]");
    if (numChunks < 1) throw ConfigError("numChunks must be at least 1");
    if (numWorkers < 1) throw ConfigError("numWorkers must be at least 1");
    if (splitThreshold < 1) throw ConfigError("splitThreshold must be at least 1");
    if (resolvedDenseThreshold() >= kHalfLimit) {
      throw ConfigError("denseThreshold must be below 65536 so sparse-row counts fit 16 bits");
    }
    if (sampler == SamplerKind::ThreeBranch && numTopics < g + 1) {
      throw ConfigError("three-branch sampling with g = " + std::to_string(g) + " needs K >= " +
                        std::to_string(g + 1));
    }
  }
};

/// A contiguous run of one word's tokens inside a chunk.
struct WorkItem {
  std::uint32_t word = 0;
  std::uint32_t begin = 0;
  std::uint32_t end = 0;
  std::uint32_t region = 0;
  /// Index of the per-word shared Q-tree slot when the word spans several items.
  std::uint32_t sharedSlot = kNoSlot;

  static constexpr std::uint32_t kNoSlot = UINT32_MAX;

  std::uint32_t size() const noexcept { return end - begin; }
  friend bool operator==(const WorkItem&, const WorkItem&) = default;
};

/// Splits each word's token span into ceil(count / splitThreshold) regions.
/// Words that end up with more than one region get a distinct sharedSlot.
inline std::vector<WorkItem> buildWorkItems(const Chunk& chunk, std::uint64_t splitThreshold) {
  if (splitThreshold < 1) throw ConfigError("splitThreshold must be at least 1");
  std::vector<WorkItem> items;
  std::uint32_t slots = 0;
  const auto n = static_cast<std::uint32_t>(chunk.tokens.size());
  for (std::uint32_t begin = 0; begin < n;) {
    const std::uint32_t word = chunk.tokens[begin].word;
    std::uint32_t end = begin;
    while (end < n && chunk.tokens[end].word == word) ++end;
    const std::uint64_t count = end - begin;
    const std::uint32_t slot = count > splitThreshold ? slots++ : WorkItem::kNoSlot;
    std::uint32_t region = 0;
    for (std::uint32_t s = begin; s < end; ++region) {
      const auto e = s + static_cast<std::uint32_t>(std::min<std::uint64_t>(end - s, splitThreshold));
      items.push_back(WorkItem{word, s, e, region, slot});
      s = e;
    }
    begin = end;
  }
  return items;
}

inline std::uint32_t countSharedSlots(std::span<const WorkItem> items) {
  std::uint32_t slots = 0;
  for (const WorkItem& item : items) {
    if (item.sharedSlot != WorkItem::kNoSlot) slots = std::max(slots, item.sharedSlot + 1);
  }
  return slots;
}

/// Runs fn(worker, item) for every item exactly once. Workers claim items through a
/// single atomic cursor; with one worker the items run in list order on the caller.
/// The first exception thrown by any worker is rethrown after all workers stop.
template <class Fn>
void dispatch(std::span<const WorkItem> items, std::uint32_t numWorkers, Fn&& fn) {
  if (numWorkers <= 1) {
    for (const WorkItem& item : items) fn(0u, item);
    return;
  }
  std::atomic<std::size_t> cursor{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex errorMutex;
  auto body = [&](std::uint32_t worker) {
    try {
      for (std::size_t i = cursor.fetch_add(1, std::memory_order_relaxed); i < items.size();
           i = cursor.fetch_add(1, std::memory_order_relaxed)) {
        if (failed.load(std::memory_order_relaxed)) return;
        fn(worker, items[i]);
      }
    } catch (...) {
      std::lock_guard lock(errorMutex);
      if (!error) error = std::current_exception();
      failed.store(true);
    }
  };
  {
    std::vector<std::jthread> threads;
    threads.reserve(numWorkers - 1);
    for (std::uint32_t w = 1; w < numWorkers; ++w) threads.emplace_back(body, w);
    body(0);
  }
  if (error) std::rethrow_exception(error);
}

/// Token load per worker under the cursor dispatcher's cost model: whichever worker
/// is idle first claims the next item and stays busy for item.size() units (ties go
/// to the lower worker index).
inline std::vector<std::uint64_t> simulateDispatch(std::span<const WorkItem> items,
                                                   std::uint32_t numWorkers) {
  if (numWorkers < 1) throw ConfigError("numWorkers must be at least 1");
  using Slot = std::pair<std::uint64_t, std::uint32_t>;
  std::priority_queue<Slot, std::vector<Slot>, std::greater<>> idle;
  for (std::uint32_t w = 0; w < numWorkers; ++w) idle.push({0, w});
  std::vector<std::uint64_t> load(numWorkers, 0);
  for (const WorkItem& item : items) {
    auto [busyUntil, w] = idle.top();
    idle.pop();
    load[w] += item.size();
    idle.push({busyUntil + item.size(), w});
  }
  return load;
}

/// canonical = base + sum of worker deltas, entrywise.
inline void mergeWorkerW(std::span<const std::uint32_t> base,
                         std::span<const std::vector<std::int32_t>> deltas,
                         std::vector<std::uint32_t>& canonical) {
  canonical.assign(base.begin(), base.end());
  for (const auto& delta : deltas) {
    if (delta.size() != base.size()) {
      throw ValidationError("mergeWorkerW: worker replica has " + std::to_string(delta.size()) +
                            " entries, expected " + std::to_string(base.size()));
    }
  }
  for (std::size_t i = 0; i < base.size(); ++i) {
    std::int64_t v = base[i];
    for (const auto& delta : deltas) v += delta[i];
    if (v < 0 || v > std::numeric_limits<std::uint32_t>::max()) {
      throw ValidationError("mergeWorkerW: merged count out of range at entry " + std::to_string(i));
    }
    canonical[i] = static_cast<std::uint32_t>(v);
  }
}

struct IterationStats {
  std::uint32_t iteration = 0;
  double llpt = std::numeric_limits<double>::quiet_NaN();
  double tokensPerSecond = 0.0;
  /// Tokens assigned K1 by the skip test alone.
  double skipRateFinal = 0.0;
  /// skipRateFinal plus tokens that reached the residual step but still landed in
  /// the M interval (no S' descent needed).
  double skipRateSTree = 0.0;
  /// Cumulative sampling time since training started, LLPT evaluation excluded.
  double wallClockSeconds = 0.0;
  std::vector<std::uint64_t> workerTokens;

  MetricsRow toMetricsRow() const {
    return MetricsRow{iteration, llpt, tokensPerSecond, skipRateFinal, skipRateSTree, wallClockSeconds};
  }
};

/// Per-token auxiliary slots of one chunk, aligned with chunk.tokens.
struct TokenAux {
  std::vector<PackedEntry> packedK;
  std::vector<PackedEntry> packedC;
  std::vector<double> u;
  std::vector<double> m;
  std::vector<std::uint8_t> skipped;

  void resize(std::size_t n) {
    packedK.assign(n, PackedEntry{});
    packedC.assign(n, PackedEntry{});
    u.assign(n, 0.0);
    m.assign(n, 0.0);
    skipped.assign(n, 0);
  }
};

/// Source of the per-token uniform draw; defaults to the counter RNG.
using UniformSource = std::function<double(std::uint32_t iteration, std::uint64_t serial)>;
/// Observer called once for every token processed by a work item.
using VisitHook = std::function<void(std::size_t chunk, std::uint32_t position, std::uint32_t worker)>;

class Trainer {
 public:
  Trainer(RawCorpus corpus, TrainerConfig config) : config_(std::move(config)) {
    config_.validate();
    alpha_ = config_.resolvedAlpha();
    relabelByFrequency(corpus, config_.resolvedDenseThreshold());
    vocab_ = std::move(corpus.vocab);
    numDocs_ = corpus.numDocs;
    numTokens_ = corpus.tokens.size();
    initializeTopics(corpus.tokens, config_.numTopics, config_.seed);
    chunks_ = partitionIntoChunks(corpus.tokens, numDocs_, config_.numChunks, vocab_.denseWordCount);
    corpus.tokens.clear();
    corpus.tokens.shrink_to_fit();

    for (const Chunk& chunk : chunks_) {
      ChunkWork work;
      work.items = buildWorkItems(chunk, config_.splitThreshold);
      work.sharedSlots = countSharedSlots(work.items);
      work.aux.resize(chunk.tokens.size());
      work_.push_back(std::move(work));
    }
    workers_.resize(config_.numWorkers);
    w_ = WordTopicHybrid(vocab_.size(), vocab_.denseWordCount, config_.numTopics);
    for (Worker& worker : workers_) {
      worker.row.assign(config_.numTopics, 0.0);
      worker.delta.assign(w_.dense().size(), 0);
    }
    uniform_ = [seed = config_.seed](std::uint32_t it, std::uint64_t serial) {
      return counterUniform(seed, it, serial);
    };
    refreshModel(true);
  }

  const TrainerConfig& config() const noexcept { return config_; }
  double alpha() const noexcept { return alpha_; }
  std::uint32_t iteration() const noexcept { return iteration_; }
  std::span<const Chunk> chunks() const noexcept { return chunks_; }
  const WordTopicHybrid& wordTopic() const noexcept { return w_; }
  const Vocabulary& vocabulary() const noexcept { return vocab_; }
  const TopTopicsTable& topTopics() const noexcept { return top_; }
  std::span<const double> denominators() const noexcept { return denominators_; }
  std::uint32_t numDocs() const noexcept { return numDocs_; }
  std::uint64_t numTokens() const noexcept { return numTokens_; }
  const TokenAux& aux(std::size_t chunk) const { return work_.at(chunk).aux; }
  std::span<const WorkItem> workItems(std::size_t chunk) const { return work_.at(chunk).items; }
  /// D rows built for the most recent iteration (pre-sampling topics).
  const DocTopic& docTopic(std::size_t chunk) const { return work_.at(chunk).docs; }

  void setUniformSource(UniformSource source) { uniform_ = std::move(source); }
  void setVisitHook(VisitHook hook) { visit_ = std::move(hook); }

  /// Current topic of every token, indexed by ingestion serial.
  std::vector<std::uint32_t> topicsBySerial() const {
    std::vector<std::uint32_t> topics(numTokens_);
    for (const Chunk& chunk : chunks_) {
      for (const Token& t : chunk.tokens) topics[t.serial] = t.topic;
    }
    return topics;
  }

  /// Replaces every token's topic (indexed by serial) and rebuilds W and the MPT table.
  void restoreTopics(std::span<const std::uint32_t> topics, std::uint32_t iteration) {
    if (topics.size() != numTokens_) throw ValidationError("restoreTopics: token count mismatch");
    for (Chunk& chunk : chunks_) {
      for (Token& t : chunk.tokens) {
        if (topics[t.serial] >= config_.numTopics) throw ValidationError("restoreTopics: topic out of range");
        t.topic = topics[t.serial];
      }
    }
    iteration_ = iteration;
    refreshModel(true);
  }

  CheckpointHeader checkpointHeader() const {
    return CheckpointHeader{config_.numTopics, vocab_.size(), vocab_.denseWordCount, iteration_,
                            alpha_, config_.beta, numTokens_};
  }

  double llpt() const { return computeLLPT(chunks_, w_, alpha_, config_.beta); }

  IterationStats runIteration() {
    const auto start = std::chrono::steady_clock::now();
    const std::uint32_t it = ++iteration_;
    for (Worker& worker : workers_) worker.resetCounters();

    for (std::size_t c = 0; c < chunks_.size(); ++c) processChunk(c, it);

    std::vector<std::vector<std::int32_t>> deltas;
    deltas.reserve(workers_.size());
    for (Worker& worker : workers_) deltas.push_back(std::move(worker.delta));
    mergeWorkerW(w_.dense(), deltas, w_.canonical());
    for (std::size_t i = 0; i < workers_.size(); ++i) {
      workers_[i].delta = std::move(deltas[i]);
      std::fill(workers_[i].delta.begin(), workers_[i].delta.end(), 0);
    }
    refreshModel(false);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    elapsed_ += seconds;

    IterationStats stats;
    stats.iteration = it;
    std::uint64_t mptSkips = 0;
    std::uint64_t secondChance = 0;
    for (const Worker& worker : workers_) {
      mptSkips += worker.mptSkips;
      secondChance += worker.secondChance;
      stats.workerTokens.push_back(worker.tokens);
    }
    const double n = static_cast<double>(std::max<std::uint64_t>(numTokens_, 1));
    stats.skipRateFinal = static_cast<double>(mptSkips) / n;
    stats.skipRateSTree = static_cast<double>(mptSkips + secondChance) / n;
    stats.tokensPerSecond = seconds > 0.0 ? static_cast<double>(numTokens_) / seconds : 0.0;
    stats.wallClockSeconds = elapsed_;
    if (config_.llptStride != 0 && it % config_.llptStride == 0 && numTokens_ > 0) stats.llpt = llpt();
    return stats;
  }

  /// Runs the configured number of iterations.
  std::vector<IterationStats> train(const std::function<void(const IterationStats&)>& onIteration = {}) {
    std::vector<IterationStats> series;
    series.reserve(config_.iterations);
    for (std::uint32_t i = 0; i < config_.iterations; ++i) {
      series.push_back(runIteration());
      if (onIteration) onIteration(series.back());
    }
    return series;
  }

 private:
  struct Worker {
    std::vector<double> row;
    std::vector<double> qWeights;
    PrefixMaxTree<double> qTree;
    SamplerScratch scratch;
    std::vector<std::int32_t> delta;
    std::uint64_t tokens = 0;
    std::uint64_t mptSkips = 0;
    std::uint64_t secondChance = 0;

    void resetCounters() { tokens = mptSkips = secondChance = 0; }
  };

  /// Normalized row and Q tree of a word split over several work items; built once
  /// by whichever item gets there first.
  struct SharedWordTree {
    std::once_flag once;
    std::vector<double> row;
    PrefixMaxTree<double> tree;
  };

  struct ChunkWork {
    std::vector<WorkItem> items;
    std::uint32_t sharedSlots = 0;
    TokenAux aux;
    DocTopic docs;
    std::vector<std::uint32_t> localDoc;  // chunk-local document row of each token position
  };

  /// Barrier phase: recount or publish W, refresh the denominators and, for
  /// three-branch sampling, the MPT table used by the next iteration.
  void refreshModel(bool recountDense) {
    if (recountDense) w_.buildDense(chunks_);
    else w_.applyCanonical();
    w_.rebuildSparse(chunks_);
    denominators_ = topicDenominators(w_, config_.beta);
    if (config_.sampler == SamplerKind::ThreeBranch) {
      top_ = mptGenerate(w_, denominators_, alpha_, config_.beta, config_.g);
    }
  }

  /// Fills `row` with the word's normalized row, with K1 zeroed in three-branch mode,
  /// and builds the matching Q (or Q') tree.
  void prepareWordRow(std::uint32_t word, std::vector<double>& row, PrefixMaxTree<double>& tree,
                      std::vector<double>& weights) const {
    normalizeRow(w_, word, denominators_, config_.beta, row);
    if (config_.sampler == SamplerKind::ThreeBranch) row[top_.row(word)[0].topic] = 0.0;
    weights.resize(row.size());
    for (std::size_t k = 0; k < row.size(); ++k) weights[k] = alpha_ * row[k];
    tree.assign(weights);
  }

  void processChunk(std::size_t c, std::uint32_t it) {
    Chunk& chunk = chunks_[c];
    ChunkWork& work = work_[c];
    const bool threeBranch = config_.sampler == SamplerKind::ThreeBranch;

    if (work.localDoc.size() != chunk.tokens.size()) {
      work.localDoc.resize(chunk.tokens.size());
      for (std::size_t d = 0; d < chunk.numDocs(); ++d) {
        for (std::uint32_t p : chunk.index.row(d)) work.localDoc[p] = static_cast<std::uint32_t>(d);
      }
    }
    if (threeBranch) {
      for (std::size_t p = 0; p < chunk.tokens.size(); ++p) {
        work.aux.packedK[p] = top_.packedK(chunk.tokens[p].word);
      }
      rebuildDocTopicRows(chunk, config_.numTopics, work.aux.packedK, work.docs, work.aux.packedC);
    } else {
      rebuildDocTopicRows(chunk, config_.numTopics, {}, work.docs, {});
    }

    std::unique_ptr<SharedWordTree[]> shared;
    if (work.sharedSlots > 0) shared = std::make_unique<SharedWordTree[]>(work.sharedSlots);

    dispatch(work.items, config_.numWorkers, [&](std::uint32_t workerIndex, const WorkItem& item) {
      Worker& worker = workers_[workerIndex];
      const std::vector<double>* row = nullptr;
      const PrefixMaxTree<double>* tree = nullptr;
      auto ensureRow = [&] {
        if (row != nullptr) return;
        if (item.sharedSlot != WorkItem::kNoSlot) {
          SharedWordTree& slot = shared[item.sharedSlot];
          std::call_once(slot.once, [&] {
            slot.row.assign(config_.numTopics, 0.0);
            prepareWordRow(item.word, slot.row, slot.tree, worker.qWeights);
          });
          row = &slot.row;
          tree = &slot.tree;
        } else {
          prepareWordRow(item.word, worker.row, worker.qTree, worker.qWeights);
          row = &worker.row;
          tree = &worker.qTree;
        }
      };

      for (std::uint32_t p = item.begin; p < item.end; ++p) {
        Token& token = chunk.tokens[p];
        if (visit_) visit_(c, p, workerIndex);
        const DocRowView doc = work.docs.row(work.localDoc[p]);
        const double u = uniform_(it, token.serial);
        std::uint32_t next = 0;
        if (threeBranch) {
          next = sampleThreeBranch(work, p, token, doc, u, worker, ensureRow, row, tree);
        } else {
          ensureRow();
          next = twoBranchSample(*row, *tree, doc, u, worker.scratch).topic;
        }
        if (next != token.topic && w_.isDense(token.word)) {
          const std::size_t base = static_cast<std::size_t>(token.word) * config_.numTopics;
          --worker.delta[base + token.topic];
          ++worker.delta[base + next];
        }
        token.topic = next;
        ++worker.tokens;
      }
    });
  }

  template <class EnsureRow>
  std::uint32_t sampleThreeBranch(ChunkWork& work, std::uint32_t p, const Token& token, DocRowView doc,
                                  double u, Worker& worker, EnsureRow& ensureRow,
                                  const std::vector<double>*& row, const PrefixMaxTree<double>*& tree) {
    const auto top = top_.row(token.word);
    std::uint32_t b[kMaxG];
    b[0] = work.aux.packedC[p].hi();
    if (config_.g >= 2) b[1] = work.aux.packedC[p].lo();
    for (std::uint32_t i = 2; i < config_.g; ++i) b[i] = doc.count(top[i].topic);

    const SkipTest test = mptCalculate(top, std::span<const std::uint32_t>(b, config_.g), doc.rowSum,
                                       top_.qPrime(token.word), alpha_, u);
    work.aux.u[p] = u;
    work.aux.m[p] = test.m;
    work.aux.skipped[p] = test.skipped ? 1 : 0;
    if (test.skipped) {
      ++worker.mptSkips;
      return top[0].topic;
    }
    ensureRow();
    const ThreeBranchTrace trace = threeBranchSample(*row, *tree, doc, top[0].topic, test.m, u, worker.scratch);
    if (trace.branch == Branch::MostPopular) ++worker.secondChance;
    return trace.topic;
  }

  TrainerConfig config_;
  double alpha_ = 0.0;
  Vocabulary vocab_;
  std::uint32_t numDocs_ = 0;
  std::uint64_t numTokens_ = 0;
  std::vector<Chunk> chunks_;
  std::vector<ChunkWork> work_;
  std::vector<Worker> workers_;
  WordTopicHybrid w_;
  std::vector<double> denominators_;
  TopTopicsTable top_;
  UniformSource uniform_;
  VisitHook visit_;
  std::uint32_t iteration_ = 0;
  double elapsed_ = 0.0;
};

struct TrainingResult {
  std::unique_ptr<Trainer> trainer;
  std::vector<IterationStats> stats;
};

/// Builds the training state from a corpus and runs config.iterations iterations.
inline TrainingResult runTraining(RawCorpus corpus, const TrainerConfig& config,
                                  const std::function<void(const IterationStats&)>& onIteration = {}) {
  TrainingResult result;
  result.trainer = std::make_unique<Trainer>(std::move(corpus), config);
  result.stats = result.trainer->train(onIteration);
  return result;
}

}  // namespace skiplda
