#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mstx/model.hpp"

namespace mstx {

// d_model^(-0.5) * min(step^(-0.5), step * warmup^(-1.5)): linear warmup to
// the peak at step == warmup_steps, then inverse-sqrt decay. step counts
// from 1.
double lr_schedule(std::int64_t step, int d_model, int warmup_steps);

// Mean of -log softmax(logits)[gold] over non-PAD positions. logits is
// [batch, len, vocab]; pad marks ignored positions.
template <typename T>
Tensor<T> masked_cross_entropy(const Tensor<T>& logits, std::span<const std::int32_t> gold,
                               std::span<const std::uint8_t> pad);

// Fraction of non-PAD positions where argmax(logits) == gold.
template <typename T>
double token_accuracy_from_logits(const Tensor<T>& logits, std::span<const std::int32_t> gold,
                                  std::span<const std::uint8_t> pad);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-9;
};

// First/second moment accumulators aligned with a parameter registry.
class AdamState {
 public:
  AdamState() = default;
  explicit AdamState(std::span<const NamedTensor<float>> params);

  std::int64_t step() const { return step_; }
  void set_step(std::int64_t step) { step_ = step; }

  std::span<std::vector<float>> first_moments() { return m_; }
  std::span<std::vector<float>> second_moments() { return v_; }
  std::span<const std::vector<float>> first_moments() const { return m_; }
  std::span<const std::vector<float>> second_moments() const { return v_; }

 private:
  friend void adam_step(std::span<NamedTensor<float>>, AdamState&, double, const AdamConfig&);
  std::vector<std::vector<float>> m_, v_;
  std::int64_t step_ = 0;
};

// One bias-corrected Adam update. Parameters without an accumulated gradient
// are treated as having zero gradient (moments decay, values hold); a
// non-finite gradient raises NumericError naming the parameter.
void adam_step(std::span<NamedTensor<float>> params, AdamState& state, double lr,
               const AdamConfig& config = {});

extern template Tensor<float> masked_cross_entropy<float>(const Tensor<float>&,
                                                          std::span<const std::int32_t>,
                                                          std::span<const std::uint8_t>);
extern template Tensor<double> masked_cross_entropy<double>(const Tensor<double>&,
                                                            std::span<const std::int32_t>,
                                                            std::span<const std::uint8_t>);

}  // namespace mstx
