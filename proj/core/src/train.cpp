#include "mstx/train.hpp"

#include <cmath>

#include "mstx/ops.hpp"

namespace mstx {

double lr_schedule(std::int64_t step, int d_model, int warmup_steps) {
  if (step < 1) throw ConfigError("lr_schedule: step must be >= 1, got " + std::to_string(step));
  if (warmup_steps < 1) throw ConfigError("lr_schedule: warmup_steps must be >= 1");
  const double s = static_cast<double>(step);
  const double w = static_cast<double>(warmup_steps);
  return std::pow(static_cast<double>(d_model), -0.5) *
         std::min(std::pow(s, -0.5), s * std::pow(w, -1.5));
}

template <typename T>
Tensor<T> masked_cross_entropy(const Tensor<T>& logits, std::span<const std::int32_t> gold,
                               std::span<const std::uint8_t> pad) {
  if (logits.rank() != 3) {
    throw ShapeError("cross_entropy: logits must be [batch, len, vocab], got " +
                     shape_str(logits.shape()));
  }
  const std::size_t positions = logits.dim(0) * logits.dim(1);
  if (gold.size() != positions || pad.size() != positions) {
    throw ShapeError("cross_entropy: expected " + std::to_string(positions) +
                     " targets and pad flags");
  }
  std::size_t live = 0;
  for (auto p : pad) {
    if (!p) ++live;
  }
  if (live == 0) throw DataError("cross_entropy: every position is padded");

  Tensor<T> keep = Tensor<T>::zeros({logits.dim(0), logits.dim(1)});
  auto kv = keep.mutable_value();
  for (std::size_t i = 0; i < positions; ++i) kv[i] = pad[i] ? T{0} : T{1};

  Tensor<T> log_probs = ops::log_softmax(logits, 2);
  Tensor<T> picked = ops::gather_last(log_probs, gold);
  Tensor<T> masked = ops::multiply(picked, keep);
  return ops::scale(ops::reduce_sum(masked), -T{1} / static_cast<T>(live));
}

template <typename T>
double token_accuracy_from_logits(const Tensor<T>& logits, std::span<const std::int32_t> gold,
                                  std::span<const std::uint8_t> pad) {
  const std::size_t vocab = logits.dim(2);
  const std::size_t positions = logits.dim(0) * logits.dim(1);
  const auto v = logits.value();
  std::size_t live = 0, hits = 0;
  for (std::size_t i = 0; i < positions; ++i) {
    if (pad[i]) continue;
    ++live;
    const T* row = v.data() + i * vocab;
    std::size_t best = 0;
    for (std::size_t j = 1; j < vocab; ++j) {
      if (row[j] > row[best]) best = j;
    }
    if (static_cast<std::int32_t>(best) == gold[i]) ++hits;
  }
  return live == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(live);
}

AdamState::AdamState(std::span<const NamedTensor<float>> params) {
  m_.reserve(params.size());
  v_.reserve(params.size());
  for (const auto& [name, t] : params) {
    m_.emplace_back(t.size(), 0.0f);
    v_.emplace_back(t.size(), 0.0f);
  }
}

void adam_step(std::span<NamedTensor<float>> params, AdamState& state, double lr,
               const AdamConfig& config) {
  if (state.m_.size() != params.size()) {
    throw ConfigError("adam: state tracks " + std::to_string(state.m_.size()) +
                      " parameters, model has " + std::to_string(params.size()));
  }
  state.step_ += 1;
  const double b1 = config.beta1, b2 = config.beta2;
  const double corr1 = 1.0 - std::pow(b1, static_cast<double>(state.step_));
  const double corr2 = 1.0 - std::pow(b2, static_cast<double>(state.step_));

  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& [name, param] = params[pi];
    auto values = param.mutable_value();
    auto& m = state.m_[pi];
    auto& v = state.v_[pi];
    const bool has_grad = param.has_grad();
    std::span<const float> grad;
    if (has_grad) {
      grad = param.grad();
      for (std::size_t i = 0; i < grad.size(); ++i) {
        if (!std::isfinite(grad[i])) {
          throw NumericError("adam: non-finite gradient in parameter " + name);
        }
      }
    }
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double g = has_grad ? static_cast<double>(grad[i]) : 0.0;
      const double mi = b1 * m[i] + (1.0 - b1) * g;
      const double vi = b2 * v[i] + (1.0 - b2) * g * g;
      m[i] = static_cast<float>(mi);
      v[i] = static_cast<float>(vi);
      const double m_hat = mi / corr1;
      const double v_hat = vi / corr2;
      values[i] -= static_cast<float>(lr * m_hat / (std::sqrt(v_hat) + config.eps));
    }
  }
}

template Tensor<float> masked_cross_entropy<float>(const Tensor<float>&,
                                                   std::span<const std::int32_t>,
                                                   std::span<const std::uint8_t>);
template Tensor<double> masked_cross_entropy<double>(const Tensor<double>&,
                                                     std::span<const std::int32_t>,
                                                     std::span<const std::uint8_t>);
template double token_accuracy_from_logits<float>(const Tensor<float>&,
                                                  std::span<const std::int32_t>,
                                                  std::span<const std::uint8_t>);
template double token_accuracy_from_logits<double>(const Tensor<double>&,
                                                   std::span<const std::int32_t>,
                                                   std::span<const std::uint8_t>);

}  // namespace mstx
