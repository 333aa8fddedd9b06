#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include "skiplda/error.hpp"

namespace skiplda {

// Checkpoint layout, all integers little-endian:
//
//   offset  size  field
//   0       8     magic "SKLDACK1"
//   8       4     K (u32)
//   12      4     V (u32)
//   16      4     denseWordCount (u32)
//   20      4     iteration (u32)
//   24      8     alpha (IEEE-754 binary64)
//   32      8     beta (IEEE-754 binary64)
//   40      8     token count N (u64)
//   48      2*N   topic of every token in ingestion order (u16)
//
// The topic array is indexed by a token's position in the docword file after
// count expansion, so a checkpoint is re-attached by reloading the same corpus.

inline constexpr std::array<char, 8> kCheckpointMagic = {'S', 'K', 'L', 'D', 'A', 'C', 'K', '1'};

struct CheckpointHeader {
  std::uint32_t numTopics = 0;
  std::uint32_t numWords = 0;
  std::uint32_t denseWordCount = 0;
  std::uint32_t iteration = 0;
  double alpha = 0.0;
  double beta = 0.0;
  std::uint64_t numTokens = 0;

  friend bool operator==(const CheckpointHeader&, const CheckpointHeader&) = default;
};

struct Checkpoint {
  CheckpointHeader header;
  std::vector<std::uint32_t> topics;
};

namespace detail {

template <class T>
void putLe(std::ostream& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  std::uint64_t bits = 0;
  std::memcpy(&bits, &value, sizeof(T));
  char bytes[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xFF);
  out.write(bytes, sizeof(T));
}

template <class T>
T getLe(std::istream& in) {
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) {
    throw ValidationError("checkpoint truncated");
  }
  std::uint64_t bits = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  T value;
  std::memcpy(&value, &bits, sizeof(T));
  return value;
}

}  // namespace detail

inline void writeCheckpoint(std::ostream& out, const CheckpointHeader& header,
                            std::span<const std::uint32_t> topics) {
  if (topics.size() != header.numTokens) throw ValidationError("checkpoint topic count mismatch");
  out.write(kCheckpointMagic.data(), kCheckpointMagic.size());
  detail::putLe(out, header.numTopics);
  detail::putLe(out, header.numWords);
  detail::putLe(out, header.denseWordCount);
  detail::putLe(out, header.iteration);
  detail::putLe(out, header.alpha);
  detail::putLe(out, header.beta);
  detail::putLe(out, header.numTokens);
  for (std::uint32_t k : topics) {
    if (k >= (1u << 16)) throw CapacityError("checkpoint topics are stored in 16 bits");
    detail::putLe(out, static_cast<std::uint16_t>(k));
  }
}

inline Checkpoint readCheckpoint(std::istream& in) {
  std::array<char, 8> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kCheckpointMagic) {
    throw ValidationError("not a checkpoint file (bad magic)");
  }
  Checkpoint cp;
  cp.header.numTopics = detail::getLe<std::uint32_t>(in);
  cp.header.numWords = detail::getLe<std::uint32_t>(in);
  cp.header.denseWordCount = detail::getLe<std::uint32_t>(in);
  cp.header.iteration = detail::getLe<std::uint32_t>(in);
  cp.header.alpha = detail::getLe<double>(in);
  cp.header.beta = detail::getLe<double>(in);
  cp.header.numTokens = detail::getLe<std::uint64_t>(in);
  cp.topics.reserve(cp.header.numTokens);
  for (std::uint64_t i = 0; i < cp.header.numTokens; ++i) {
    const std::uint32_t k = detail::getLe<std::uint16_t>(in);
    if (k >= cp.header.numTopics) throw ValidationError("checkpoint topic id out of range");
    cp.topics.push_back(k);
  }
  return cp;
}

inline void saveCheckpoint(const std::string& path, const CheckpointHeader& header,
                           std::span<const std::uint32_t> topics) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open checkpoint '" + path + "' for writing");
  writeCheckpoint(out, header, topics);
  out.flush();
  if (!out) throw std::runtime_error("failed writing checkpoint '" + path + "'");
}

inline Checkpoint loadCheckpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint '" + path + "'");
  return readCheckpoint(in);
}

}  // namespace skiplda
