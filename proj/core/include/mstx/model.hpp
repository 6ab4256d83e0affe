#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mstx/config.hpp"
#include "mstx/encoder.hpp"

namespace mstx {

template <typename T>
using NamedTensor = std::pair<std::string, Tensor<T>>;

// Multi-stream encoder + linear decoder + output projection, with a named
// parameter registry in fixed construction order (the registry order defines
// initialization draws, optimizer iteration and checkpoint layout).
template <typename T>
class Seq2Seq {
 public:
  // Builds and Glorot-initializes all parameters; deterministic per seed.
  // The decoder depth defaults to the encoder's total layer count when
  // config.decoder_layers == 0.
  static Seq2Seq build(const ModelConfig& config, const EncoderTopology& topology,
                       std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  const EncoderTopology& topology() const { return topology_; }

  struct EncodeResult {
    typename MultiStreamEncoder<T>::Detail detail;
    Mask pad_mask;
    std::vector<int> lengths;
  };

  // src_ids is a row-major [batch, src_len] id matrix, PAD-padded.
  EncodeResult encode(std::span<const std::int32_t> src_ids, std::size_t batch,
                      std::size_t src_len, RunContext<T>& ctx) const;

  // Teacher-forced logits [batch, tgt_len, tgt_vocab].
  Tensor<T> forward(std::span<const std::int32_t> src_ids, std::size_t batch,
                    std::size_t src_len, std::span<const std::int32_t> tgt_in_ids,
                    std::size_t tgt_len, RunContext<T>& ctx) const;

  // Decoder + projection on top of a precomputed encoder output.
  Tensor<T> decode(const Tensor<T>& encoder_out, const Mask& src_pad_mask,
                   std::span<const std::int32_t> tgt_in_ids, std::size_t batch,
                   std::size_t tgt_len, RunContext<T>& ctx) const;

  std::span<const NamedTensor<T>> parameters() const { return parameters_; }
  std::span<NamedTensor<T>> parameters() { return parameters_; }
  std::size_t parameter_count() const;
  Tensor<T> param(std::string_view name) const;
  void zero_grads();

  MultiStreamEncoder<T>& encoder() { return encoder_; }
  const MultiStreamEncoder<T>& encoder() const { return encoder_; }
  int decoder_depth() const { return static_cast<int>(decoder_.size()); }

  // Embedding + scaled positions + dropout for one side.
  Tensor<T> embed(std::span<const std::int32_t> ids, std::size_t batch, std::size_t len,
                  bool target_side, RunContext<T>& ctx) const;

 private:
  ModelConfig config_;
  EncoderTopology topology_;
  Tensor<T> src_embedding_;  // [src_vocab, d_model]
  Tensor<T> tgt_embedding_;  // [tgt_vocab, d_model]
  Tensor<T> positions_;      // [max_len, d_model], constant
  MultiStreamEncoder<T> encoder_;
  std::vector<DecoderLayerParams<T>> decoder_;
  Tensor<T> output_w_;  // [d_model, tgt_vocab]; absent when tied
  Tensor<T> output_b_;  // [tgt_vocab]
  std::vector<NamedTensor<T>> parameters_;
};

using Seq2SeqF = Seq2Seq<float>;
using Seq2SeqD = Seq2Seq<double>;

extern template class Seq2Seq<float>;
extern template class Seq2Seq<double>;

// True sequence lengths (non-PAD prefix counts) per batch row.
std::vector<int> sequence_lengths(std::span<const std::int32_t> ids, std::size_t batch,
                                  std::size_t len);

}  // namespace mstx
