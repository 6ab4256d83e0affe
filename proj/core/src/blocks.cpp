#include "mstx/blocks.hpp"

#include <cmath>
#include <string>

#include "stride_util.hpp"

namespace mstx {

const char* to_string(AttentionKind kind) {
  switch (kind) {
    case AttentionKind::EncoderSelf: return "encoder-self";
    case AttentionKind::DecoderSelf: return "decoder-self";
    case AttentionKind::DecoderCross: return "decoder-cross";
  }
  return "unknown";
}

Mask make_causal_mask(std::size_t len) {
  Mask m = Mask::zeros({len, len});
  for (std::size_t i = 0; i < len; ++i) {
    for (std::size_t j = i + 1; j < len; ++j) m.data[i * len + j] = 1;
  }
  return m;
}

Mask make_pad_mask(std::span<const std::int32_t> ids, std::size_t batch, std::size_t len,
                   std::int32_t pad_id) {
  if (ids.size() != batch * len) {
    throw ShapeError("make_pad_mask: " + std::to_string(ids.size()) + " ids for batch " +
                     std::to_string(batch) + " x len " + std::to_string(len));
  }
  Mask m = Mask::zeros({batch, 1, 1, len});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] == pad_id) m.data[i] = 1;
  }
  return m;
}

namespace {

// Rejects attention rows whose keys are all masked; softmax would be
// undefined there.
void check_attendable(const Mask& mask, const Shape& scores_shape) {
  const auto step = detail::broadcast_strides(scores_shape, mask.shape);
  const std::size_t len_k = scores_shape.back();
  std::size_t open_in_row = 0, col = 0, row = 0;
  std::size_t bad_row = SIZE_MAX;
  detail::strided_walk(scores_shape, step, [&](std::size_t, std::size_t off) {
    if (mask.data[off] == 0) ++open_in_row;
    if (++col == len_k) {
      if (open_in_row == 0 && bad_row == SIZE_MAX) bad_row = row;
      open_in_row = 0;
      col = 0;
      ++row;
    }
  });
  if (bad_row != SIZE_MAX) {
    throw NumericError("attention: query row " + std::to_string(bad_row % scores_shape[2]) +
                       " has no unmasked key position");
  }
}

template <typename T>
Tensor<T> maybe_dropout(const Tensor<T>& x, RunContext<T>& ctx) {
  if (!ctx.dropout_active()) return x;
  if (ctx.rng == nullptr) throw ConfigError("dropout requested without a random source");
  return ops::dropout(x, ctx.dropout_rate, *ctx.rng);
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  return ops::add(ops::matmul(x, w), b);
}

// [B, L, D] -> [B, heads, L, D/heads]
template <typename T>
Tensor<T> split_heads(const Tensor<T>& x, std::size_t heads) {
  const std::size_t b = x.dim(0), l = x.dim(1), d = x.dim(2);
  return ops::transpose(ops::reshape(x, {b, l, heads, d / heads}), 1, 2);
}

// [B, heads, L, dk] -> [B, L, heads*dk]
template <typename T>
Tensor<T> merge_heads(const Tensor<T>& x) {
  const std::size_t b = x.dim(0), h = x.dim(1), l = x.dim(2), dk = x.dim(3);
  return ops::reshape(ops::transpose(x, 1, 2), {b, l, h * dk});
}

// Copies per-head weight matrices (and value-vector norms) out of the
// forward pass, trimmed to each example's true lengths.
template <typename T>
void record_attention(const Tensor<T>& weights, const Tensor<T>& v_heads, RunContext<T>& ctx) {
  const std::size_t batch = weights.dim(0), heads = weights.dim(1);
  const std::size_t len_q = weights.dim(2), len_k = weights.dim(3);
  const std::size_t dk = v_heads.dim(3);
  const auto w = weights.value();
  const auto v = v_heads.value();
  for (std::size_t b = 0; b < batch; ++b) {
    const std::size_t rows =
        ctx.query_lengths ? static_cast<std::size_t>((*ctx.query_lengths)[b]) : len_q;
    const std::size_t cols =
        ctx.key_lengths ? static_cast<std::size_t>((*ctx.key_lengths)[b]) : len_k;
    for (std::size_t h = 0; h < heads; ++h) {
      AttentionRecord rec;
      rec.kind = ctx.kind;
      rec.layer = ctx.layer;
      rec.stream = ctx.stream;
      rec.head = static_cast<int>(h);
      rec.example = static_cast<int>(b);
      rec.rows = rows;
      rec.cols = cols;
      rec.weights.resize(rows * cols);
      const std::size_t base = (b * heads + h) * len_q * len_k;
      for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cols; ++j) {
          rec.weights[i * cols + j] = static_cast<float>(w[base + i * len_k + j]);
        }
      }
      rec.value_norms.resize(cols);
      const std::size_t vbase = (b * heads + h) * len_k * dk;
      for (std::size_t j = 0; j < cols; ++j) {
        double sq = 0;
        for (std::size_t e = 0; e < dk; ++e) {
          const double x = static_cast<double>(v[vbase + j * dk + e]);
          sq += x * x;
        }
        rec.value_norms[j] = static_cast<float>(std::sqrt(sq));
      }
      ctx.trace->records.push_back(std::move(rec));
    }
  }
}

}  // namespace

template <typename T>
AttentionOutput<T> scaled_dot_product_attention(const Tensor<T>& q, const Tensor<T>& k,
                                                const Tensor<T>& v, const Mask* mask) {
  if (q.rank() != 4 || k.rank() != 4 || v.rank() != 4) {
    throw ShapeError("attention: expected [batch, heads, len, d_k] inputs, got " +
                     shape_str(q.shape()) + ", " + shape_str(k.shape()) + ", " +
                     shape_str(v.shape()));
  }
  if (q.dim(3) != k.dim(3) || k.dim(2) != v.dim(2)) {
    throw ShapeError("attention: mismatched shapes " + shape_str(q.shape()) + ", " +
                     shape_str(k.shape()) + ", " + shape_str(v.shape()));
  }
  const T inv_sqrt_dk = T{1} / std::sqrt(static_cast<T>(q.dim(3)));
  Tensor<T> scores = ops::scale(ops::matmul(q, ops::transpose(k, 2, 3)), inv_sqrt_dk);
  if (mask != nullptr) {
    check_attendable(*mask, scores.shape());
    scores = ops::masked_fill(scores, *mask, static_cast<T>(kMaskedLogit));
  }
  Tensor<T> weights = ops::softmax(scores, 3);
  return AttentionOutput<T>{ops::matmul(weights, v), weights};
}

template <typename T>
AttentionOutput<T> multi_head_attention(const Tensor<T>& x_q, const Tensor<T>& x_kv,
                                        const Mask* mask, const AttentionParams<T>& params,
                                        RunContext<T>& ctx) {
  const std::size_t d_model = x_q.dim(2);
  const std::size_t heads = static_cast<std::size_t>(params.heads);
  if (heads == 0 || d_model % heads != 0) {
    throw ConfigError("attention: d_model " + std::to_string(d_model) +
                      " not divisible by heads " + std::to_string(heads));
  }
  Tensor<T> q = split_heads(linear(x_q, params.w_q, params.b_q), heads);
  Tensor<T> k = split_heads(ops::matmul(x_kv, params.w_k), heads);
  Tensor<T> v = split_heads(linear(x_kv, params.w_v, params.b_v), heads);
  AttentionOutput<T> attn = scaled_dot_product_attention(q, k, v, mask);
  if (ctx.trace != nullptr) record_attention(attn.weights, v, ctx);
  Tensor<T> merged = merge_heads(attn.output);
  return AttentionOutput<T>{linear(merged, params.w_o, params.b_o), attn.weights};
}

template <typename T>
Tensor<T> feed_forward(const Tensor<T>& x, const FeedForwardParams<T>& params) {
  return linear(ops::relu(linear(x, params.w1, params.b1)), params.w2, params.b2);
}

namespace {

template <typename T>
Tensor<T> norm(const Tensor<T>& x, const NormParams<T>& p) {
  return ops::layer_norm(x, p.gain, p.bias, static_cast<T>(kLayerNormEps));
}

template <typename T>
void check_finite(const Tensor<T>& x, const RunContext<T>& ctx, const char* what) {
  if (ops::all_finite(x)) return;
  std::string where = std::string(what) + " layer " + std::to_string(ctx.layer);
  if (ctx.stream > 0) where += " (stream " + std::to_string(ctx.stream) + ")";
  throw NumericError("non-finite values leaving " + where);
}

}  // namespace

template <typename T>
Tensor<T> encoder_layer(const Tensor<T>& x, const Mask* pad_mask,
                        const EncoderLayerParams<T>& params, RunContext<T>& ctx) {
  ctx.kind = AttentionKind::EncoderSelf;
  Tensor<T> attn = multi_head_attention(x, x, pad_mask, params.attn, ctx).output;
  Tensor<T> h1 = norm(ops::add(x, maybe_dropout(attn, ctx)), params.norm1);
  Tensor<T> ff = feed_forward(h1, params.ffn);
  Tensor<T> y = norm(ops::add(h1, maybe_dropout(ff, ctx)), params.norm2);
  check_finite(y, ctx, "encoder");
  return y;
}

template <typename T>
DecoderLayerOutput<T> decoder_layer(const Tensor<T>& x, const Tensor<T>& encoder_out,
                                    const Mask* self_mask, const Mask* cross_mask,
                                    const DecoderLayerParams<T>& params, RunContext<T>& ctx) {
  ctx.kind = AttentionKind::DecoderSelf;
  AttentionOutput<T> self = multi_head_attention(x, x, self_mask, params.self_attn, ctx);
  Tensor<T> h1 = norm(ops::add(x, maybe_dropout(self.output, ctx)), params.norm1);

  // Cross-attention keys are source positions.
  ctx.kind = AttentionKind::DecoderCross;
  const std::vector<int>* self_keys = ctx.key_lengths;
  ctx.key_lengths = ctx.cross_key_lengths;
  AttentionOutput<T> cross =
      multi_head_attention(h1, encoder_out, cross_mask, params.cross_attn, ctx);
  ctx.key_lengths = self_keys;
  Tensor<T> h2 = norm(ops::add(h1, maybe_dropout(cross.output, ctx)), params.norm2);

  Tensor<T> ff = feed_forward(h2, params.ffn);
  Tensor<T> y = norm(ops::add(h2, maybe_dropout(ff, ctx)), params.norm3);
  check_finite(y, ctx, "decoder");
  return DecoderLayerOutput<T>{y, self.weights, cross.weights};
}

template <typename T>
Tensor<T> sinusoidal_positional_encoding(std::size_t max_len, std::size_t d_model) {
  if (d_model % 2 != 0) {
    throw ConfigError("positional encoding: d_model must be even, got " +
                      std::to_string(d_model));
  }
  Tensor<T> pe = Tensor<T>::zeros({max_len, d_model});
  auto v = pe.mutable_value();
  for (std::size_t pos = 0; pos < max_len; ++pos) {
    for (std::size_t i = 0; i < d_model / 2; ++i) {
      const double angle =
          static_cast<double>(pos) /
          std::pow(10000.0, static_cast<double>(2 * i) / static_cast<double>(d_model));
      v[pos * d_model + 2 * i] = static_cast<T>(std::sin(angle));
      v[pos * d_model + 2 * i + 1] = static_cast<T>(std::cos(angle));
    }
  }
  return pe;
}

#define MSTX_INSTANTIATE_BLOCKS(T)                                                         \
  template AttentionOutput<T> scaled_dot_product_attention<T>(                             \
      const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, const Mask*);                  \
  template AttentionOutput<T> multi_head_attention<T>(const Tensor<T>&, const Tensor<T>&,  \
                                                      const Mask*, const AttentionParams<T>&, \
                                                      RunContext<T>&);                     \
  template Tensor<T> feed_forward<T>(const Tensor<T>&, const FeedForwardParams<T>&);       \
  template Tensor<T> encoder_layer<T>(const Tensor<T>&, const Mask*,                       \
                                      const EncoderLayerParams<T>&, RunContext<T>&);       \
  template DecoderLayerOutput<T> decoder_layer<T>(const Tensor<T>&, const Tensor<T>&,      \
                                                  const Mask*, const Mask*,                \
                                                  const DecoderLayerParams<T>&,            \
                                                  RunContext<T>&);                         \
  template Tensor<T> sinusoidal_positional_encoding<T>(std::size_t, std::size_t);

MSTX_INSTANTIATE_BLOCKS(float)
MSTX_INSTANTIATE_BLOCKS(double)

#undef MSTX_INSTANTIATE_BLOCKS

}  // namespace mstx
