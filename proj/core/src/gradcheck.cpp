#include "mstx/gradcheck.hpp"

#include <cmath>
#include <vector>

#include "mstx/error.hpp"

namespace mstx {

template <typename T>
GradCheckReport<T> grad_check_report(const std::function<Tensor<T>()>& loss_fn,
                                     std::span<Tensor<T>> params, T eps) {
  if (eps <= T{0}) throw NumericError("grad_check: eps must be positive");

  for (auto& p : params) p.drop_grad();

  // Analytic pass.
  std::vector<std::vector<T>> analytic(params.size());
  {
    Tape<T> tape;
    typename Tape<T>::Scope scope(tape);
    Tensor<T> loss = loss_fn();
    if (!std::isfinite(static_cast<double>(loss.item()))) {
      throw NumericError("grad_check: loss is not finite");
    }
    tape.backward(loss);
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (!params[i].requires_grad()) continue;
      if (params[i].has_grad()) {
        auto g = params[i].grad();
        analytic[i].assign(g.begin(), g.end());
      } else {
        analytic[i].assign(params[i].size(), T{0});
      }
    }
  }
  for (auto& p : params) p.drop_grad();

  GradCheckReport<T> report;
  const T floor = static_cast<T>(1e-8);
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    if (!params[pi].requires_grad()) continue;
    auto values = params[pi].mutable_value();
    for (std::size_t ei = 0; ei < values.size(); ++ei) {
      const T saved = values[ei];
      values[ei] = saved + eps;
      const T up = loss_fn().item();
      values[ei] = saved - eps;
      const T down = loss_fn().item();
      values[ei] = saved;
      if (!std::isfinite(static_cast<double>(up)) || !std::isfinite(static_cast<double>(down))) {
        throw NumericError("grad_check: perturbed loss is not finite");
      }
      const T numeric = (up - down) / (T{2} * eps);
      const T a = analytic[pi][ei];
      const T denom = std::max({std::abs(a), std::abs(numeric), floor});
      const T rel = std::abs(a - numeric) / denom;
      ++report.checked_elements;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_param = pi;
        report.worst_element = ei;
      }
    }
  }
  return report;
}

template <typename T>
T grad_check(const std::function<Tensor<T>()>& loss_fn, std::span<Tensor<T>> params, T eps) {
  return grad_check_report(loss_fn, params, eps).max_rel_error;
}

template GradCheckReport<float> grad_check_report<float>(const std::function<Tensor<float>()>&,
                                                         std::span<Tensor<float>>, float);
template GradCheckReport<double> grad_check_report<double>(const std::function<Tensor<double>()>&,
                                                           std::span<Tensor<double>>, double);
template float grad_check<float>(const std::function<Tensor<float>()>&, std::span<Tensor<float>>,
                                 float);
template double grad_check<double>(const std::function<Tensor<double>()>&,
                                   std::span<Tensor<double>>, double);

}  // namespace mstx
