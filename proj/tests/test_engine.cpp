#include <gtest/gtest.h>

#include <atomic>
#include <limits>
#include <mutex>
#include <random>
#include <stdexcept>
#include <vector>

#include "skiplda/engine.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

namespace skiplda {
namespace {

Chunk singleWordChunk(std::uint32_t count) {
  Chunk chunk;
  chunk.docs = {0};
  for (std::uint32_t i = 0; i < count; ++i) chunk.tokens.push_back(Token{0, 0, 0, i});
  chunk.index = buildInvertedIndex(chunk);
  return chunk;
}

TEST(BuildWorkItems, SplitsLongWords) {
  const auto items = buildWorkItems(singleWordChunk(25000), 10000);
  ASSERT_EQ(items.size(), 3u);
  EXPECT_EQ(items[0].size(), 10000u);
  EXPECT_EQ(items[1].size(), 10000u);
  EXPECT_EQ(items[2].size(), 5000u);
  for (std::uint32_t r = 0; r < 3; ++r) {
    EXPECT_EQ(items[r].region, r);
    EXPECT_EQ(items[r].sharedSlot, 0u);
  }
  EXPECT_EQ(countSharedSlots(items), 1u);
}

TEST(BuildWorkItems, UnboundedThresholdKeepsWordsWhole) {
  const auto items = buildWorkItems(singleWordChunk(300), std::numeric_limits<std::uint64_t>::max());
  ASSERT_EQ(items.size(), 1u);
  EXPECT_EQ(items[0].size(), 300u);
  EXPECT_EQ(items[0].sharedSlot, WorkItem::kNoSlot);
}

TEST(BuildWorkItems, ShortWordsStayWhole) {
  // 128 tokens: one word with 50, the rest 78 words with one token each.
  Chunk chunk;
  chunk.docs = {0};
  for (std::uint32_t i = 0; i < 50; ++i) chunk.tokens.push_back(Token{0, 0, 0, i});
  for (std::uint32_t w = 1; w <= 78; ++w) chunk.tokens.push_back(Token{w, 0, 0, 49 + w});
  chunk.index = buildInvertedIndex(chunk);

  const auto whole = buildWorkItems(chunk, 1000);
  EXPECT_EQ(whole.size(), 79u);
  EXPECT_EQ(countSharedSlots(whole), 0u);
  const auto load = simulateDispatch(whole, 8);
  EXPECT_EQ(*std::max_element(load.begin(), load.end()), 50u);

  const auto split = buildWorkItems(chunk, 16);  // 128 / 8 workers
  EXPECT_EQ(split.size(), 82u);
  const auto balanced = simulateDispatch(split, 8);
  EXPECT_LE(*std::max_element(balanced.begin(), balanced.end()), 16u + 2u);
  EXPECT_EQ(std::accumulate(balanced.begin(), balanced.end(), std::uint64_t{0}), 128u);
}

TEST(BuildWorkItems, CoversEveryPositionOnce) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    auto corpus = testing::randomSmallCorpus(rng, 500, 20, 10);
    auto chunks = partitionIntoChunks(corpus.tokens, corpus.numDocs, 1, 0);
    const std::uint64_t threshold = std::uniform_int_distribution<std::uint64_t>(1, 60)(rng);
    const auto items = buildWorkItems(chunks[0], threshold);
    std::uint32_t expectedBegin = 0;
    for (const WorkItem& item : items) {
      ASSERT_EQ(item.begin, expectedBegin);
      ASSERT_LE(item.size(), threshold);
      ASSERT_GT(item.size(), 0u);
      for (std::uint32_t p = item.begin; p < item.end; ++p) ASSERT_EQ(chunks[0].tokens[p].word, item.word);
      expectedBegin = item.end;
    }
    ASSERT_EQ(expectedBegin, chunks[0].tokens.size());
  }
}

TEST(Dispatch, VisitsEveryItemExactlyOnce) {
  const auto items = buildWorkItems(singleWordChunk(5000), 7);
  for (std::uint32_t workers : {1u, 2u, 5u, 16u}) {
    std::vector<std::atomic<int>> visits(5000);
    dispatch(items, workers, [&](std::uint32_t worker, const WorkItem& item) {
      ASSERT_LT(worker, workers);
      for (std::uint32_t p = item.begin; p < item.end; ++p) visits[p].fetch_add(1);
    });
    for (const auto& v : visits) ASSERT_EQ(v.load(), 1);
  }
}

TEST(Dispatch, PropagatesWorkerExceptions) {
  const auto items = buildWorkItems(singleWordChunk(100), 1);
  EXPECT_THROW(dispatch(items, 4,
                        [](std::uint32_t, const WorkItem& item) {
                          if (item.begin == 37) throw std::runtime_error("boom");
                        }),
               std::runtime_error);
}

TEST(MergeWorkerW, SumsReplicas) {
  const std::vector<std::uint32_t> base = {3, 0, 5};
  const std::vector<std::vector<std::int32_t>> deltas = {{-1, 2, 0}, {-2, 0, 1}};
  std::vector<std::uint32_t> canonical;
  mergeWorkerW(base, deltas, canonical);
  EXPECT_EQ(canonical, (std::vector<std::uint32_t>{0, 2, 6}));
}

TEST(MergeWorkerW, RejectsBadReplicas) {
  const std::vector<std::uint32_t> base = {1, 1};
  std::vector<std::uint32_t> canonical;
  const std::vector<std::vector<std::int32_t>> shortDelta = {{1}};
  EXPECT_THROW(mergeWorkerW(base, shortDelta, canonical), ValidationError);
  const std::vector<std::vector<std::int32_t>> negative = {{-2, 0}};
  EXPECT_THROW(mergeWorkerW(base, negative, canonical), ValidationError);
}

TEST(TrainerConfig, ValidationRejectsBadValues) {
  TrainerConfig config;
  config.numTopics = 0;
  EXPECT_THROW(config.validate(), ConfigError);
  config.numTopics = kMaxTopics + 1;
  EXPECT_THROW(config.validate(), ConfigError);
  config.numTopics = 20;
  EXPECT_NO_THROW(config.validate());
  EXPECT_DOUBLE_EQ(config.resolvedAlpha(), 2.5);
  EXPECT_EQ(config.resolvedDenseThreshold(), 20u);
  config.g = 0;
  EXPECT_THROW(config.validate(), ConfigError);
  config.g = 2;
  config.beta = 0.0;
  EXPECT_THROW(config.validate(), ConfigError);
  config.beta = 0.01;
  config.alpha = -1.0;
  EXPECT_THROW(config.validate(), ConfigError);
  config.alpha.reset();
  config.denseThreshold = kHalfLimit;
  EXPECT_THROW(config.validate(), ConfigError);
  config.denseThreshold.reset();
  config.numTopics = 2;
  EXPECT_THROW(config.validate(), ConfigError);  // three-branch with g = 2 needs K >= 3
  config.sampler = SamplerKind::TwoBranch;
  EXPECT_NO_THROW(config.validate());
}

TrainerConfig tinyConfig(SamplerKind sampler) {
  TrainerConfig config;
  config.numTopics = 4;
  config.alpha = 16.7;
  config.beta = 0.01;
  config.sampler = sampler;
  config.denseThreshold = 0;
  return config;
}

TEST(Trainer, SingleTopicStaysPut) {
  TrainerConfig config;
  config.numTopics = 1;
  config.sampler = SamplerKind::TwoBranch;
  config.iterations = 3;
  auto result = runTraining(testing::tinyCorpus(), config);
  for (std::uint32_t k : result.trainer->topicsBySerial()) EXPECT_EQ(k, 0u);
  EXPECT_EQ(result.stats.size(), 3u);
}

TEST(Trainer, ForcedUniformReproducesWorkedExample) {
  for (SamplerKind sampler : {SamplerKind::TwoBranch, SamplerKind::ThreeBranch}) {
    Trainer trainer(testing::tinyCorpus(), tinyConfig(sampler));
    trainer.restoreTopics(testing::tinyTopicsBySerial(), 0);
    trainer.setUniformSource([](std::uint32_t, std::uint64_t) { return 0.51; });
    trainer.runIteration();
    EXPECT_EQ(trainer.topicsBySerial()[4], 2u);
  }
}

TEST(Trainer, ThreeBranchRecordsSkipForWorkedToken) {
  Trainer trainer(testing::tinyCorpus(), tinyConfig(SamplerKind::ThreeBranch));
  trainer.restoreTopics(testing::tinyTopicsBySerial(), 0);
  trainer.setUniformSource([](std::uint32_t, std::uint64_t) { return 0.51; });
  trainer.runIteration();
  // Serial 4 sits at chunk position 1.
  EXPECT_EQ(trainer.chunks()[0].tokens[1].serial, 4u);
  EXPECT_EQ(trainer.aux(0).skipped[1], 1);
  EXPECT_NEAR(trainer.aux(0).m[1], 16.219, 1e-2);
  EXPECT_EQ(unpackEntry(trainer.aux(0).packedC[1]), std::make_pair(0u, 1u));
}

TEST(Trainer, IsDeterministicForFixedSeed) {
  testing::LdaCorpusShape shape;
  shape.docs = 100;
  shape.words = 200;
  shape.topics = 8;
  shape.meanDocLength = 40;
  TrainerConfig config;
  config.numTopics = 8;
  config.iterations = 5;
  config.seed = 9;
  const auto a = runTraining(testing::generateLdaCorpus(shape), config);
  const auto b = runTraining(testing::generateLdaCorpus(shape), config);
  EXPECT_EQ(a.trainer->topicsBySerial(), b.trainer->topicsBySerial());
  config.seed = 10;
  const auto c = runTraining(testing::generateLdaCorpus(shape), config);
  EXPECT_NE(a.trainer->topicsBySerial(), c.trainer->topicsBySerial());
}

TEST(Trainer, InvariantUnderWorkersChunksAndSplitting) {
  testing::LdaCorpusShape shape;
  shape.docs = 120;
  shape.words = 150;
  shape.topics = 6;
  shape.meanDocLength = 50;
  for (SamplerKind sampler : {SamplerKind::TwoBranch, SamplerKind::ThreeBranch}) {
    TrainerConfig config;
    config.numTopics = 6;
    config.iterations = 4;
    config.seed = 3;
    config.sampler = sampler;
    const auto reference = runTraining(testing::generateLdaCorpus(shape), config);
    for (auto [workers, chunks, split] : {std::tuple{3u, 1u, 10000u}, std::tuple{4u, 5u, 17u},
                                          std::tuple{1u, 7u, 1u}}) {
      config.numWorkers = workers;
      config.numChunks = chunks;
      config.splitThreshold = split;
      const auto other = runTraining(testing::generateLdaCorpus(shape), config);
      ASSERT_EQ(other.trainer->topicsBySerial(), reference.trainer->topicsBySerial());
      ASSERT_EQ(other.trainer->wordTopic().densify(), reference.trainer->wordTopic().densify());
    }
  }
}

TEST(Trainer, SkipAccuracyParameterDoesNotChangeSamples) {
  testing::LdaCorpusShape shape;
  shape.docs = 80;
  shape.words = 100;
  shape.topics = 6;
  shape.meanDocLength = 30;
  TrainerConfig config;
  config.numTopics = 6;
  config.iterations = 5;
  config.g = 1;
  const auto g1 = runTraining(testing::generateLdaCorpus(shape), config);
  config.g = 3;
  const auto g3 = runTraining(testing::generateLdaCorpus(shape), config);
  EXPECT_EQ(g1.trainer->topicsBySerial(), g3.trainer->topicsBySerial());
  for (std::size_t i = 0; i < g1.stats.size(); ++i) {
    EXPECT_LE(g1.stats[i].skipRateFinal, g3.stats[i].skipRateFinal);
    EXPECT_EQ(g1.stats[i].skipRateSTree, g3.stats[i].skipRateSTree);
  }
}

TEST(Trainer, MatchesDenseReference) {
  std::mt19937_64 rng(61);
  for (int trial = 0; trial < 40; ++trial) {
    auto corpus = testing::randomSmallCorpus(rng, 150, 8, 20);
    const std::uint32_t numTopics = std::uniform_int_distribution<std::uint32_t>(3, 10)(rng);
    TrainerConfig config;
    config.numTopics = numTopics;
    config.alpha = 0.3;
    config.beta = 0.05;
    config.seed = static_cast<std::uint64_t>(trial);
    config.denseThreshold = 2;
    config.numChunks = std::uniform_int_distribution<std::uint32_t>(1, corpus.numDocs)(rng);
    config.numWorkers = 2;
    config.splitThreshold = 3;
    testing::DenseThreeBranchReference reference(corpus.tokens, corpus.numDocs, corpus.vocab.size(), numTopics,
                                                 0.3, 0.05, config.seed);
    // The reference keeps the input word ids; relabeling does not affect topics.
    Trainer trainer(corpus, config);
    ASSERT_EQ(trainer.topicsBySerial(), reference.topicsBySerial());
    for (std::uint32_t it = 1; it <= 5; ++it) {
      trainer.runIteration();
      reference.step(it);
      ASSERT_EQ(trainer.topicsBySerial(), reference.topicsBySerial()) << "trial " << trial << " it " << it;
    }
  }
}

TEST(Trainer, WordTopicMatchesRecountEveryIteration) {
  auto corpus = testing::generateZipfCorpus(60, 300, 40, 1.1, 2);
  TrainerConfig config;
  config.numTopics = 12;
  config.numWorkers = 3;
  config.numChunks = 2;
  config.denseThreshold = 20;
  Trainer trainer(corpus, config);
  for (int it = 0; it < 5; ++it) {
    trainer.runIteration();
    std::vector<Token> tokens;
    for (const Chunk& c : trainer.chunks()) tokens.insert(tokens.end(), c.tokens.begin(), c.tokens.end());
    ASSERT_EQ(trainer.wordTopic().densify(),
              testing::recountWordTopic(tokens, trainer.vocabulary().size(), config.numTopics));
  }
}

TEST(Trainer, ZeroIterationsLeavesInitialization) {
  TrainerConfig config;
  config.numTopics = 4;
  config.seed = 5;
  auto corpus = testing::tinyCorpus();
  auto expected = corpus.tokens;
  initializeTopics(expected, 4, 5);
  const auto result = runTraining(corpus, config);
  EXPECT_TRUE(result.stats.empty());
  for (const Token& t : expected) EXPECT_EQ(result.trainer->topicsBySerial()[t.serial], t.topic);
}

TEST(Trainer, LikelihoodImprovesOnStructuredCorpus) {
  testing::LdaCorpusShape shape;
  shape.docs = 300;
  shape.words = 300;
  shape.topics = 10;
  shape.meanDocLength = 60;
  TrainerConfig config;
  config.numTopics = 10;
  config.iterations = 15;
  const auto result = runTraining(testing::generateLdaCorpus(shape), config);
  EXPECT_GT(result.stats.back().llpt, result.stats.front().llpt + 0.2);
  EXPECT_GT(result.stats.back().skipRateFinal, 0.0);
}

TEST(Trainer, VisitHookSeesEveryTokenOnce) {
  auto corpus = testing::generateZipfCorpus(30, 50, 30, 1.2, 8);
  TrainerConfig config;
  config.numTopics = 5;
  config.numWorkers = 4;
  config.numChunks = 3;
  config.splitThreshold = 7;
  Trainer trainer(corpus, config);
  std::mutex mutex;
  std::vector<std::vector<int>> visits;
  for (const Chunk& c : trainer.chunks()) visits.emplace_back(c.tokens.size(), 0);
  trainer.setVisitHook([&](std::size_t c, std::uint32_t p, std::uint32_t) {
    std::lock_guard lock(mutex);
    ++visits[c][p];
  });
  const auto stats = trainer.runIteration();
  for (const auto& chunk : visits) {
    for (int v : chunk) ASSERT_EQ(v, 1);
  }
  EXPECT_EQ(std::accumulate(stats.workerTokens.begin(), stats.workerTokens.end(), std::uint64_t{0}),
            trainer.numTokens());
}

}  // namespace
}  // namespace skiplda
