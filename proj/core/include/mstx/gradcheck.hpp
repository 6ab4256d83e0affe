#pragma once

#include <functional>
#include <span>

#include "mstx/tape.hpp"
#include "mstx/tensor.hpp"

namespace mstx {

template <typename T>
struct GradCheckReport {
  T max_rel_error = 0;
  std::size_t checked_elements = 0;
  // Parameter index and flat element where the maximum occurred.
  std::size_t worst_param = 0;
  std::size_t worst_element = 0;
};

// Compares analytic gradients against central finite differences.
//
// loss_fn must rebuild the forward pass from the given parameter tensors and
// return a scalar loss; it must be deterministic (dropout off, fixed inputs).
// For each element of each parameter that requires a gradient the value is
// perturbed by +-eps in place and the loss re-evaluated. The returned error
// is max over elements of |analytic - numeric| / max(|analytic|, |numeric|,
// 1e-8). Parameters with requires_grad == false are skipped and contribute 0.
template <typename T>
GradCheckReport<T> grad_check_report(const std::function<Tensor<T>()>& loss_fn,
                                     std::span<Tensor<T>> params, T eps);

template <typename T>
T grad_check(const std::function<Tensor<T>()>& loss_fn, std::span<Tensor<T>> params, T eps);

extern template GradCheckReport<float> grad_check_report<float>(
    const std::function<Tensor<float>()>&, std::span<Tensor<float>>, float);
extern template GradCheckReport<double> grad_check_report<double>(
    const std::function<Tensor<double>()>&, std::span<Tensor<double>>, double);
extern template float grad_check<float>(const std::function<Tensor<float>()>&,
                                        std::span<Tensor<float>>, float);
extern template double grad_check<double>(const std::function<Tensor<double>()>&,
                                          std::span<Tensor<double>>, double);

}  // namespace mstx
