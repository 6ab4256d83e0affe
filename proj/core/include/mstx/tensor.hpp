#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "mstx/error.hpp"

namespace mstx {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

template <typename T>
struct TensorNode {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // empty = no gradient accumulated yet
  bool requires_grad = false;
};

}  // namespace detail

// N-dimensional row-major array participating in reverse-mode
// differentiation. A Tensor is a cheap handle; copies alias the same storage.
// Values are immutable during a forward pass (mutable_value is for
// initialization, optimizer updates and tests); gradients accumulate across
// uses rather than overwrite.
template <typename T>
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<T> data, bool requires_grad = false);
  static Tensor scalar(T value);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t size() const { return node_->value.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  bool is_scalar() const { return defined() && size() == 1; }

  std::span<const T> value() const { return node_->value; }
  std::span<T> mutable_value() { return node_->value; }

  // Value of a single-element tensor.
  T item() const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool enabled) { node_->requires_grad = enabled; }

  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const T> grad() const;
  // Gradient buffer, allocated to zeros on first use.
  std::span<T> grad_accumulator();
  void zero_grad();
  void drop_grad() { node_->grad.clear(); }

  bool same_node(const Tensor& other) const { return node_ == other.node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorNode<T>> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::TensorNode<T>> node_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

extern template class Tensor<float>;
extern template class Tensor<double>;

// Boolean mask; true marks a blocked / padded position. Broadcasts against
// tensors numpy-style (align shapes on the right, size-1 dims repeat).
struct Mask {
  Shape shape;
  std::vector<std::uint8_t> data;

  static Mask zeros(Shape shape);
  std::size_t size() const { return data.size(); }
  bool at(std::size_t flat) const { return data[flat] != 0; }
};

// Elementwise logical-or with broadcasting; used to combine causal and pad
// masks.
Mask mask_or(const Mask& a, const Mask& b);

}  // namespace mstx
