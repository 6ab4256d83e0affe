#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "mstx/attention_record.hpp"
#include "mstx/ops.hpp"
#include "mstx/rng.hpp"
#include "mstx/tensor.hpp"

// Post-layer-norm Transformer building blocks: multi-head scaled dot-product
// attention, position-wise feed-forward, residual + layer norm after each
// sublayer, sinusoidal positional encoding.
namespace mstx {

// The key projection carries no bias: a key bias shifts every logit in a
// query's row by the same amount, which the softmax cancels exactly, so the
// parameter would be a zero direction of every loss.
template <typename T>
struct AttentionParams {
  Tensor<T> w_q, b_q, w_k, w_v, b_v, w_o, b_o;
  int heads = 1;
};

template <typename T>
struct FeedForwardParams {
  Tensor<T> w1, b1, w2, b2;
};

template <typename T>
struct NormParams {
  Tensor<T> gain, bias;
};

template <typename T>
struct EncoderLayerParams {
  AttentionParams<T> attn;
  FeedForwardParams<T> ffn;
  NormParams<T> norm1, norm2;
};

template <typename T>
struct DecoderLayerParams {
  AttentionParams<T> self_attn;
  AttentionParams<T> cross_attn;
  FeedForwardParams<T> ffn;
  NormParams<T> norm1, norm2, norm3;
};

// Per-forward state threaded through the blocks: training mode (enables
// dropout), the dropout source, the optional attention trace, and the
// provenance labels the currently running layer records under.
template <typename T>
struct RunContext {
  bool train = false;
  T dropout_rate = T{0};
  Rng* rng = nullptr;
  AttentionTrace* trace = nullptr;
  // Diagnostic: cut the gradient path through the encoder streams, leaving
  // only the skip connection (when present) to carry gradient to the input
  // layer. Forward values are unchanged.
  bool detach_streams = false;

  AttentionKind kind = AttentionKind::EncoderSelf;
  int layer = 0;
  int stream = 0;
  // True token counts per example, used to trim recorded matrices. The
  // decoder swaps in cross_key_lengths (source lengths) while recording
  // cross-attention.
  const std::vector<int>* query_lengths = nullptr;
  const std::vector<int>* key_lengths = nullptr;
  const std::vector<int>* cross_key_lengths = nullptr;

  bool dropout_active() const { return train && dropout_rate > T{0}; }
};

inline constexpr double kLayerNormEps = 1e-6;
inline constexpr double kMaskedLogit = -1e9;

// True above the diagonal: position t may attend to keys <= t.
Mask make_causal_mask(std::size_t len);

// [batch, 1, 1, len], true at PAD positions.
Mask make_pad_mask(std::span<const std::int32_t> ids, std::size_t batch, std::size_t len,
                   std::int32_t pad_id);

template <typename T>
struct AttentionOutput {
  Tensor<T> output;
  Tensor<T> weights;  // [batch, heads, len_q, len_k]
};

// softmax(Q K^T / sqrt(d_k)) V over [batch, heads, len, d_k] inputs. Masked
// positions get logit -1e9 before the softmax (weight <= 1e-9 after); a row
// with every key masked is an error.
template <typename T>
AttentionOutput<T> scaled_dot_product_attention(const Tensor<T>& q, const Tensor<T>& k,
                                                const Tensor<T>& v, const Mask* mask);

// Projects, splits heads, attends, merges heads, projects back. Records
// per-head weight matrices and value norms into ctx.trace when tracing.
template <typename T>
AttentionOutput<T> multi_head_attention(const Tensor<T>& x_q, const Tensor<T>& x_kv,
                                        const Mask* mask, const AttentionParams<T>& params,
                                        RunContext<T>& ctx);

template <typename T>
Tensor<T> feed_forward(const Tensor<T>& x, const FeedForwardParams<T>& params);

// y1 = LN(x + Drop(SelfAttn(x))); y = LN(y1 + Drop(FFN(y1)))
template <typename T>
Tensor<T> encoder_layer(const Tensor<T>& x, const Mask* pad_mask,
                        const EncoderLayerParams<T>& params, RunContext<T>& ctx);

template <typename T>
struct DecoderLayerOutput {
  Tensor<T> output;
  Tensor<T> self_weights;
  Tensor<T> cross_weights;
};

// Self-attention under the causal+pad mask, cross-attention over the encoder
// output under the source pad mask, then the feed-forward sublayer; layer
// norm after each residual.
template <typename T>
DecoderLayerOutput<T> decoder_layer(const Tensor<T>& x, const Tensor<T>& encoder_out,
                                    const Mask* self_mask, const Mask* cross_mask,
                                    const DecoderLayerParams<T>& params, RunContext<T>& ctx);

// PE(pos, 2i) = sin(pos / 10000^(2i/d)), PE(pos, 2i+1) = cos(same).
template <typename T>
Tensor<T> sinusoidal_positional_encoding(std::size_t max_len, std::size_t d_model);

}  // namespace mstx
