// Command-line driver: `skiplda train` and `skiplda eval`.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "skiplda/checkpoint.hpp"
#include "skiplda/corpus.hpp"
#include "skiplda/engine.hpp"
#include "skiplda/metrics.hpp"

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

skiplda::RawCorpus loadCorpus(const std::string& docwordPath, const std::string& vocabPath) {
  std::ifstream docword(docwordPath);
  if (!docword) throw UsageError("cannot open docword file '" + docwordPath + "'");
  if (vocabPath.empty()) return skiplda::loadUciBow(docword);
  std::ifstream vocab(vocabPath);
  if (!vocab) throw UsageError("cannot open vocabulary file '" + vocabPath + "'");
  return skiplda::loadUciBow(docword, &vocab);
}

void requireReadable(const std::string& path, const char* what) {
  if (!std::filesystem::is_regular_file(path)) {
    throw UsageError(std::string(what) + " '" + path + "' does not exist");
  }
}

struct TrainOptions {
  std::string docword;
  std::string vocab;
  std::uint32_t topics = 0;
  std::optional<double> alpha;
  double beta = 0.01;
  std::uint32_t iterations = 100;
  std::uint32_t chunks = 1;
  std::uint32_t workers = 1;
  std::string sampler = "three-branch";
  std::uint32_t g = 2;
  std::optional<std::uint64_t> denseThreshold;
  std::uint64_t splitThreshold = 10000;
  std::uint64_t seed = 1;
  std::uint32_t llptStride = 1;
  std::string metrics;
  std::string checkpoint;
  bool quiet = false;
};

struct EvalOptions {
  std::string docword;
  std::string vocab;
  std::string checkpoint;
  std::optional<std::uint64_t> denseThreshold;
};

int runTrain(const TrainOptions& opt) {
  requireReadable(opt.docword, "docword file");
  if (!opt.vocab.empty()) requireReadable(opt.vocab, "vocabulary file");

  skiplda::TrainerConfig config;
  config.numTopics = opt.topics;
  config.alpha = opt.alpha;
  config.beta = opt.beta;
  config.g = opt.g;
  config.numChunks = opt.chunks;
  config.numWorkers = opt.workers;
  config.denseThreshold = opt.denseThreshold;
  config.splitThreshold = opt.splitThreshold;
  config.iterations = opt.iterations;
  config.seed = opt.seed;
  config.llptStride = opt.llptStride;
  config.sampler = opt.sampler == "two-branch" ? skiplda::SamplerKind::TwoBranch
                                               : skiplda::SamplerKind::ThreeBranch;
  try {
    config.validate();
  } catch (const skiplda::ConfigError& e) {
    throw UsageError(e.what());
  }

  auto corpus = loadCorpus(opt.docword, opt.vocab);
  if (config.numChunks > corpus.numDocs) {
    throw UsageError("--chunks " + std::to_string(config.numChunks) + " exceeds the " +
                     std::to_string(corpus.numDocs) + " documents in the corpus");
  }
  if (corpus.tokens.empty()) throw UsageError("corpus has no tokens");

  skiplda::Trainer trainer(std::move(corpus), config);
  if (!opt.quiet) {
    std::printf("tokens=%llu docs=%u words=%u dense_words=%u K=%u alpha=%g beta=%g sampler=%s\n",
                static_cast<unsigned long long>(trainer.numTokens()), trainer.numDocs(),
                trainer.vocabulary().size(), trainer.vocabulary().denseWordCount, config.numTopics,
                trainer.alpha(), config.beta, opt.sampler.c_str());
  }
  std::vector<skiplda::MetricsRow> rows;
  trainer.train([&](const skiplda::IterationStats& s) {
    rows.push_back(s.toMetricsRow());
    if (!opt.quiet) {
      std::printf("iter %u llpt=%.6f tokens/s=%.4g skip_final=%.4f skip_stree=%.4f t=%.3fs\n",
                  s.iteration, s.llpt, s.tokensPerSecond, s.skipRateFinal, s.skipRateSTree,
                  s.wallClockSeconds);
    }
  });
  if (!opt.metrics.empty()) skiplda::emitMetricsCsv(rows, opt.metrics);
  if (!opt.checkpoint.empty()) {
    const auto topics = trainer.topicsBySerial();
    skiplda::saveCheckpoint(opt.checkpoint, trainer.checkpointHeader(), topics);
  }
  return 0;
}

int runEval(const EvalOptions& opt) {
  requireReadable(opt.docword, "docword file");
  requireReadable(opt.checkpoint, "checkpoint");
  if (!opt.vocab.empty()) requireReadable(opt.vocab, "vocabulary file");

  const auto cp = skiplda::loadCheckpoint(opt.checkpoint);
  auto corpus = loadCorpus(opt.docword, opt.vocab);
  if (corpus.vocab.size() != cp.header.numWords || corpus.tokens.size() != cp.header.numTokens) {
    throw skiplda::ValidationError("checkpoint does not match the corpus (V or token count differ)");
  }
  skiplda::TrainerConfig config;
  config.numTopics = cp.header.numTopics;
  config.alpha = cp.header.alpha;
  config.beta = cp.header.beta;
  config.denseThreshold = opt.denseThreshold;
  config.sampler = skiplda::SamplerKind::TwoBranch;
  config.llptStride = 0;
  try {
    config.validate();
  } catch (const skiplda::ConfigError& e) {
    throw UsageError(e.what());
  }
  skiplda::Trainer trainer(std::move(corpus), config);
  trainer.restoreTopics(cp.topics, cp.header.iteration);
  std::printf("iteration=%u llpt=%.9f\n", cp.header.iteration, trainer.llpt());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Parallel LDA trainer with three-branch skip sampling"};
  app.require_subcommand(1);

  TrainOptions train;
  auto* trainCmd = app.add_subcommand("train", "Train on a UCI bag-of-words corpus");
  trainCmd->add_option("--docword", train.docword, "docword file (UCI format)")->required();
  trainCmd->add_option("--vocab", train.vocab, "vocabulary file, one word per line");
  trainCmd->add_option("--topics", train.topics, "number of topics K")->required();
  trainCmd->add_option("--alpha", train.alpha, "document smoothing (default 50/K)");
  trainCmd->add_option("--beta", train.beta, "word smoothing")->capture_default_str();
  trainCmd->add_option("--iterations", train.iterations, "training iterations")->capture_default_str();
  trainCmd->add_option("--chunks", train.chunks, "document chunks")->capture_default_str();
  trainCmd->add_option("--workers", train.workers, "worker threads")->capture_default_str();
  trainCmd->add_option("--sampler", train.sampler, "sampler")
      ->check(CLI::IsMember({"two-branch", "three-branch"}))
      ->capture_default_str();
  trainCmd->add_option("--g", train.g, "S_est accuracy parameter")->capture_default_str();
  trainCmd->add_option("--dense-threshold", train.denseThreshold,
                       "words with more tokens than this use dense rows (default K)");
  trainCmd->add_option("--split-threshold", train.splitThreshold, "max tokens per work item")
      ->capture_default_str();
  trainCmd->add_option("--seed", train.seed, "RNG seed")->capture_default_str();
  trainCmd->add_option("--llpt-stride", train.llptStride, "evaluate LLPT every N iterations (0 = never)")
      ->capture_default_str();
  trainCmd->add_option("--metrics", train.metrics, "write per-iteration metrics CSV here");
  trainCmd->add_option("--checkpoint", train.checkpoint, "write final topic assignments here");
  trainCmd->add_flag("--quiet", train.quiet, "no per-iteration output");

  EvalOptions eval;
  auto* evalCmd = app.add_subcommand("eval", "Compute LLPT of a checkpoint");
  evalCmd->add_option("--docword", eval.docword, "docword file the checkpoint was trained on")->required();
  evalCmd->add_option("--vocab", eval.vocab, "vocabulary file");
  evalCmd->add_option("--checkpoint", eval.checkpoint, "checkpoint file")->required();
  evalCmd->add_option("--dense-threshold", eval.denseThreshold, "dense-row threshold (default K)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (trainCmd->parsed()) return runTrain(train);
    return runEval(eval);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntime;
  }
}
