#include "mstx/model.hpp"

#include <algorithm>
#include <cmath>

namespace mstx {

std::vector<int> sequence_lengths(std::span<const std::int32_t> ids, std::size_t batch,
                                  std::size_t len) {
  std::vector<int> lengths(batch, 0);
  for (std::size_t b = 0; b < batch; ++b) {
    int n = 0;
    for (std::size_t i = 0; i < len; ++i) {
      if (ids[b * len + i] != kPadId) ++n;
    }
    lengths[b] = n;
  }
  return lengths;
}

namespace {

// Draws parameters in registry order so a fixed seed reproduces the model
// bit for bit; every stream gets independent draws.
template <typename T>
class ParamBuilder {
 public:
  ParamBuilder(std::uint64_t seed, std::vector<NamedTensor<T>>& registry)
      : rng_(seed), registry_(registry) {}

  Tensor<T> glorot(const std::string& name, std::size_t fan_in, std::size_t fan_out) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Tensor<T> t = Tensor<T>::zeros({fan_in, fan_out}, true);
    auto v = t.mutable_value();
    for (auto& x : v) x = static_cast<T>(rng_.uniform(-limit, limit));
    registry_.emplace_back(name, t);
    return t;
  }

  Tensor<T> zeros(const std::string& name, std::size_t n) {
    Tensor<T> t = Tensor<T>::zeros({n}, true);
    registry_.emplace_back(name, t);
    return t;
  }

  Tensor<T> ones(const std::string& name, std::size_t n) {
    Tensor<T> t = Tensor<T>::full({n}, T{1}, true);
    registry_.emplace_back(name, t);
    return t;
  }

  AttentionParams<T> attention(const std::string& prefix, int d_model, int heads) {
    AttentionParams<T> p;
    const std::size_t d = static_cast<std::size_t>(d_model);
    p.w_q = glorot(prefix + ".w_q", d, d);
    p.b_q = zeros(prefix + ".b_q", d);
    p.w_k = glorot(prefix + ".w_k", d, d);
    p.w_v = glorot(prefix + ".w_v", d, d);
    p.b_v = zeros(prefix + ".b_v", d);
    p.w_o = glorot(prefix + ".w_o", d, d);
    p.b_o = zeros(prefix + ".b_o", d);
    p.heads = heads;
    return p;
  }

  FeedForwardParams<T> feed_forward(const std::string& prefix, int d_model, int d_ff) {
    FeedForwardParams<T> p;
    p.w1 = glorot(prefix + ".w1", d_model, d_ff);
    p.b1 = zeros(prefix + ".b1", d_ff);
    p.w2 = glorot(prefix + ".w2", d_ff, d_model);
    p.b2 = zeros(prefix + ".b2", d_model);
    return p;
  }

  NormParams<T> norm(const std::string& prefix, int d_model) {
    NormParams<T> p;
    p.gain = ones(prefix + ".gain", d_model);
    p.bias = zeros(prefix + ".bias", d_model);
    return p;
  }

  EncoderLayerParams<T> encoder_layer(const std::string& prefix, const ModelConfig& c) {
    EncoderLayerParams<T> p;
    p.attn = attention(prefix + ".attn", c.d_model, c.heads);
    p.ffn = feed_forward(prefix + ".ffn", c.d_model, c.d_ff);
    p.norm1 = norm(prefix + ".norm1", c.d_model);
    p.norm2 = norm(prefix + ".norm2", c.d_model);
    return p;
  }

  DecoderLayerParams<T> decoder_layer(const std::string& prefix, const ModelConfig& c) {
    DecoderLayerParams<T> p;
    p.self_attn = attention(prefix + ".self", c.d_model, c.heads);
    p.cross_attn = attention(prefix + ".cross", c.d_model, c.heads);
    p.ffn = feed_forward(prefix + ".ffn", c.d_model, c.d_ff);
    p.norm1 = norm(prefix + ".norm1", c.d_model);
    p.norm2 = norm(prefix + ".norm2", c.d_model);
    p.norm3 = norm(prefix + ".norm3", c.d_model);
    return p;
  }

 private:
  Rng rng_;
  std::vector<NamedTensor<T>>& registry_;
};

template <typename T>
Tensor<T> apply_dropout(const Tensor<T>& x, RunContext<T>& ctx) {
  if (!ctx.dropout_active()) return x;
  if (ctx.rng == nullptr) throw ConfigError("dropout requested without a random source");
  return ops::dropout(x, ctx.dropout_rate, *ctx.rng);
}

}  // namespace

template <typename T>
Seq2Seq<T> Seq2Seq<T>::build(const ModelConfig& config, const EncoderTopology& topology,
                             std::uint64_t seed) {
  config.validate();
  topology.validate();

  Seq2Seq<T> model;
  model.config_ = config;
  model.topology_ = topology;

  ParamBuilder<T> b(seed, model.parameters_);
  model.src_embedding_ = b.glorot("src_embedding", config.src_vocab, config.d_model);
  model.tgt_embedding_ = b.glorot("tgt_embedding", config.tgt_vocab, config.d_model);
  model.positions_ = sinusoidal_positional_encoding<T>(config.max_len, config.d_model);

  model.encoder_.topology = topology;
  model.encoder_.input_layer = b.encoder_layer("encoder.input", config);
  model.encoder_.streams.resize(topology.streams);
  for (int s = 0; s < topology.streams; ++s) {
    for (int l = 0; l < topology.stream_depth; ++l) {
      model.encoder_.streams[s].push_back(b.encoder_layer(
          "encoder.stream" + std::to_string(s + 1) + ".layer" + std::to_string(l), config));
    }
  }
  model.encoder_.output_layer = b.encoder_layer("encoder.output", config);

  const int decoder_layers =
      config.decoder_layers > 0 ? config.decoder_layers : topology.total_layers();
  for (int j = 0; j < decoder_layers; ++j) {
    model.decoder_.push_back(b.decoder_layer("decoder.layer" + std::to_string(j), config));
  }

  if (!config.tie_output) {
    model.output_w_ = b.glorot("output.w", config.d_model, config.tgt_vocab);
  }
  model.output_b_ = b.zeros("output.b", config.tgt_vocab);
  return model;
}

template <typename T>
Tensor<T> Seq2Seq<T>::embed(std::span<const std::int32_t> ids, std::size_t batch,
                            std::size_t len, bool target_side, RunContext<T>& ctx) const {
  if (len > static_cast<std::size_t>(config_.max_len)) {
    throw DataError("sequence of length " + std::to_string(len) +
                    " exceeds configured max length " + std::to_string(config_.max_len));
  }
  const Tensor<T>& table = target_side ? tgt_embedding_ : src_embedding_;
  Tensor<T> emb = ops::embedding_lookup(table, ids, {batch, len});
  emb = ops::scale(emb, static_cast<T>(std::sqrt(static_cast<double>(config_.d_model))));
  const std::size_t d = static_cast<std::size_t>(config_.d_model);
  const auto pv = positions_.value();
  Tensor<T> pe =
      Tensor<T>::from({len, d}, std::vector<T>(pv.begin(), pv.begin() + len * d));
  emb = ops::add(emb, pe);
  return apply_dropout(emb, ctx);
}

template <typename T>
typename Seq2Seq<T>::EncodeResult Seq2Seq<T>::encode(std::span<const std::int32_t> src_ids,
                                                     std::size_t batch, std::size_t src_len,
                                                     RunContext<T>& ctx) const {
  EncodeResult result;
  result.lengths = sequence_lengths(src_ids, batch, src_len);
  result.pad_mask = make_pad_mask(src_ids, batch, src_len, kPadId);

  const std::vector<int>* saved_q = ctx.query_lengths;
  const std::vector<int>* saved_k = ctx.key_lengths;
  ctx.query_lengths = &result.lengths;
  ctx.key_lengths = &result.lengths;
  Tensor<T> x = embed(src_ids, batch, src_len, false, ctx);
  result.detail = encoder_.forward_detail(x, &result.pad_mask, ctx);
  ctx.query_lengths = saved_q;
  ctx.key_lengths = saved_k;
  return result;
}

template <typename T>
Tensor<T> Seq2Seq<T>::decode(const Tensor<T>& encoder_out, const Mask& src_pad_mask,
                             std::span<const std::int32_t> tgt_in_ids, std::size_t batch,
                             std::size_t tgt_len, RunContext<T>& ctx) const {
  std::vector<int> tgt_lengths = sequence_lengths(tgt_in_ids, batch, tgt_len);
  Mask self_mask =
      mask_or(make_causal_mask(tgt_len), make_pad_mask(tgt_in_ids, batch, tgt_len, kPadId));

  const std::vector<int>* saved_q = ctx.query_lengths;
  const std::vector<int>* saved_k = ctx.key_lengths;
  ctx.query_lengths = &tgt_lengths;
  ctx.key_lengths = &tgt_lengths;

  Tensor<T> y = embed(tgt_in_ids, batch, tgt_len, true, ctx);
  for (std::size_t j = 0; j < decoder_.size(); ++j) {
    ctx.stream = 0;
    ctx.layer = static_cast<int>(j);
    y = decoder_layer(y, encoder_out, &self_mask, &src_pad_mask, decoder_[j], ctx).output;
  }

  ctx.query_lengths = saved_q;
  ctx.key_lengths = saved_k;

  if (config_.tie_output) {
    return ops::add(ops::matmul(y, ops::transpose(tgt_embedding_, 0, 1)), output_b_);
  }
  return ops::add(ops::matmul(y, output_w_), output_b_);
}

template <typename T>
Tensor<T> Seq2Seq<T>::forward(std::span<const std::int32_t> src_ids, std::size_t batch,
                              std::size_t src_len, std::span<const std::int32_t> tgt_in_ids,
                              std::size_t tgt_len, RunContext<T>& ctx) const {
  EncodeResult enc = encode(src_ids, batch, src_len, ctx);
  const std::vector<int>* saved_cross = ctx.cross_key_lengths;
  ctx.cross_key_lengths = &enc.lengths;
  Tensor<T> logits =
      decode(enc.detail.z_out, enc.pad_mask, tgt_in_ids, batch, tgt_len, ctx);
  ctx.cross_key_lengths = saved_cross;
  return logits;
}

template <typename T>
std::size_t Seq2Seq<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : parameters_) n += t.size();
  return n;
}

template <typename T>
Tensor<T> Seq2Seq<T>::param(std::string_view name) const {
  for (const auto& [pname, t] : parameters_) {
    if (pname == name) return t;
  }
  throw ConfigError("unknown parameter: " + std::string(name));
}

template <typename T>
void Seq2Seq<T>::zero_grads() {
  for (auto& [name, t] : parameters_) t.drop_grad();
}

template class Seq2Seq<float>;
template class Seq2Seq<double>;

}  // namespace mstx
