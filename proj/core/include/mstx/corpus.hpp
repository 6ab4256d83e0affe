#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mstx/vocab.hpp"

namespace mstx {

// Line-aligned sentence pairs, UTF-8, one sentence per line.
struct ParallelCorpus {
  std::vector<std::string> source;
  std::vector<std::string> target;

  static ParallelCorpus load(const std::filesystem::path& src_path,
                             const std::filesystem::path& tgt_path);
  std::size_t size() const { return source.size(); }
};

// Encoded sentence pairs (no BOS/EOS decoration yet).
struct TokenizedCorpus {
  std::vector<std::vector<std::int32_t>> source;
  std::vector<std::vector<std::int32_t>> target;
  std::size_t size() const { return source.size(); }
};

TokenizedCorpus encode_corpus(const ParallelCorpus& corpus, const Vocab& src_vocab,
                              const Vocab& tgt_vocab);

// One padded batch. Source rows carry a trailing EOS; target rows pair
// tgt_in (BOS-prefixed) with tgt_out (EOS-suffixed), so tgt_out is tgt_in
// shifted left by one with EOS appended. Pad masks are true exactly at PAD.
struct Batch {
  std::size_t size = 0;     // rows
  std::size_t src_len = 0;  // padded source width
  std::size_t tgt_len = 0;  // padded target width
  std::vector<std::int32_t> src;
  std::vector<std::int32_t> tgt_in;
  std::vector<std::int32_t> tgt_out;
  std::vector<std::uint8_t> src_pad;
  std::vector<std::uint8_t> tgt_pad;
};

struct BatchPlan {
  std::vector<Batch> batches;
  std::size_t filtered = 0;  // pairs dropped for exceeding max_len
};

// Shuffles pairs with the given seed, drops pairs that would not fit in
// max_len once decorated, and packs fixed-size batches (last one may be
// short). Deterministic per seed.
BatchPlan make_batches(const TokenizedCorpus& corpus, std::size_t batch_size,
                       std::size_t max_len, std::uint64_t shuffle_seed);

}  // namespace mstx
