#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "mstx/bleu.hpp"
#include "mstx/corpus.hpp"
#include "mstx/model.hpp"

namespace mstx {

// Argmax decoding: starts from BOS, appends the best token each step, stops
// at EOS or max_len. src_ids is one unpadded source row (EOS included).
// Returns the produced tokens without BOS/EOS.
std::vector<std::int32_t> greedy_decode(const Seq2Seq<float>& model,
                                        std::span<const std::int32_t> src_ids, int max_len,
                                        AttentionTrace* trace = nullptr);

// Decodes many sources in one padded batch. Rows are independent through
// every layer, so each result matches the single-sentence decode exactly;
// results are returned in input order.
std::vector<std::vector<std::int32_t>> greedy_decode_batch(
    const Seq2Seq<float>& model, std::span<const std::vector<std::int32_t>> src_rows,
    int max_len);

struct EvalRow {
  std::uint64_t seed = 0;
  double bleu4 = 0;
  double token_accuracy = 0;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  double mean_bleu4 = 0;
  double mean_token_accuracy = 0;
  std::size_t sentences = 0;
};

// Teacher-forced token accuracy plus greedy-decoding BLEU-4 for one model
// over a test corpus.
EvalRow evaluate_model(const Seq2Seq<float>& model, const TokenizedCorpus& test,
                       std::size_t batch_size = 64);

// Loads each checkpoint into a freshly built model and evaluates it; a
// checkpoint whose tensors do not match the config (e.g. a vocabulary
// mismatch) is an error.
EvalReport evaluate_checkpoints(const ModelConfig& config, const EncoderTopology& topology,
                                std::span<const std::filesystem::path> checkpoints,
                                const TokenizedCorpus& test);

// "seed,bleu4,token_accuracy" rows plus a trailing mean row.
void write_eval_csv(const EvalReport& report, const std::filesystem::path& path);

}  // namespace mstx
