#include "mstx/tensor.hpp"

#include <algorithm>
#include <sstream>

#include "stride_util.hpp"

namespace mstx {

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream out;
  out << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ", ";
    out << shape[i];
  }
  out << "]";
  return out.str();
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  for (std::size_t d : shape) {
    if (d == 0) throw ShapeError("tensor: zero-sized dimension in " + shape_str(shape));
  }
  auto node = std::make_shared<detail::TensorNode<T>>();
  node->value.assign(shape_size(shape), T{0});
  node->shape = std::move(shape);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  std::fill(t.node_->value.begin(), t.node_->value.end(), value);
  return t;
}

template <typename T>
Tensor<T> Tensor<T>::from(Shape shape, std::vector<T> data, bool requires_grad) {
  if (shape_size(shape) != data.size()) {
    throw ShapeError("tensor: shape " + shape_str(shape) + " does not match " +
                     std::to_string(data.size()) + " elements");
  }
  auto node = std::make_shared<detail::TensorNode<T>>();
  node->shape = std::move(shape);
  node->value = std::move(data);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value) {
  return from({1}, {value});
}

template <typename T>
T Tensor<T>::item() const {
  if (!is_scalar()) {
    throw ShapeError("item: tensor " + shape_str(shape()) + " is not a scalar");
  }
  return node_->value[0];
}

template <typename T>
std::span<const T> Tensor<T>::grad() const {
  if (!has_grad()) throw NumericError("grad: no gradient accumulated for this tensor");
  return node_->grad;
}

template <typename T>
std::span<T> Tensor<T>::grad_accumulator() {
  if (node_->grad.empty()) node_->grad.assign(node_->value.size(), T{0});
  return node_->grad;
}

template <typename T>
void Tensor<T>::zero_grad() {
  std::fill(node_->grad.begin(), node_->grad.end(), T{0});
}

template class Tensor<float>;
template class Tensor<double>;

Mask Mask::zeros(Shape shape) {
  Mask m;
  m.data.assign(shape_size(shape), 0);
  m.shape = std::move(shape);
  return m;
}

Mask mask_or(const Mask& a, const Mask& b) {
  using detail::broadcast_offset;
  using detail::broadcastable;
  using detail::row_major_strides;
  // Result shape: elementwise max of right-aligned dims.
  const Mask& lo = a.shape.size() <= b.shape.size() ? a : b;
  const Mask& hi = a.shape.size() <= b.shape.size() ? b : a;
  Shape out_shape = hi.shape;
  const std::size_t pad = hi.shape.size() - lo.shape.size();
  for (std::size_t i = 0; i < lo.shape.size(); ++i) {
    out_shape[i + pad] = std::max(out_shape[i + pad], lo.shape[i]);
  }
  if (!broadcastable(out_shape, a.shape) || !broadcastable(out_shape, b.shape)) {
    throw ShapeError("mask_or: shapes " + shape_str(a.shape) + " and " +
                     shape_str(b.shape) + " do not broadcast");
  }
  Mask out = Mask::zeros(out_shape);
  const auto sa = row_major_strides(a.shape);
  const auto sb = row_major_strides(b.shape);
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    const bool va = a.data[broadcast_offset(i, out.shape, a.shape, sa)] != 0;
    const bool vb = b.data[broadcast_offset(i, out.shape, b.shape, sb)] != 0;
    out.data[i] = (va || vb) ? 1 : 0;
  }
  return out;
}

}  // namespace mstx
