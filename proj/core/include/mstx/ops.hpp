#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mstx/rng.hpp"
#include "mstx/tape.hpp"
#include "mstx/tensor.hpp"

// Differentiable tensor primitives. Each op validates shapes, computes its
// forward value, and records a backward rule on the active tape when any
// input requires a gradient. All kernels run in a fixed order, so results
// are bitwise reproducible; matmul may additionally split rows across
// worker threads (see set_threads), which does not change any result bit.
namespace mstx::ops {

// Worker threads for matmul row partitioning. Default 1 (reference mode).
void set_threads(int n);
int threads();

// a [.., M, K] x b [K, N] (shared) or a [.., M, K] x b [.., K, N]
// (batched, equal leading dims) -> [.., M, N].
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

// Elementwise; b may also be a right-aligned broadcast shape of a.
template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> multiply(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor);

// Swaps two axes (copying).
template <typename T>
Tensor<T> transpose(const Tensor<T>& a, std::size_t axis0, std::size_t axis1);

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape);

template <typename T>
Tensor<T> concat(std::span<const Tensor<T>> parts, std::size_t axis);

template <typename T>
std::vector<Tensor<T>> split(const Tensor<T>& a, std::size_t parts, std::size_t axis);

template <typename T>
Tensor<T> softmax(const Tensor<T>& a, std::size_t axis);

template <typename T>
Tensor<T> log_softmax(const Tensor<T>& a, std::size_t axis);

template <typename T>
Tensor<T> relu(const Tensor<T>& a);

// Normalizes over the last axis; gain and bias have that axis's extent.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& a, const Tensor<T>& gain, const Tensor<T>& bias, T eps);

// Inverted dropout: keeps elements with probability 1-rate and scales the
// kept ones by 1/(1-rate), so evaluation needs no rescaling. rate 0 returns
// the input unchanged. Callers apply this in training mode only.
template <typename T>
Tensor<T> dropout(const Tensor<T>& a, T rate, Rng& rng);

// table [V, D] gathered by ids (shape ids_shape) -> ids_shape + [D].
template <typename T>
Tensor<T> embedding_lookup(const Tensor<T>& table, std::span<const std::int32_t> ids,
                           Shape ids_shape);

// Writes `fill` where mask is true; masked positions receive no gradient.
template <typename T>
Tensor<T> masked_fill(const Tensor<T>& a, const Mask& mask, T fill);

template <typename T>
Tensor<T> reduce_sum(const Tensor<T>& a);
template <typename T>
Tensor<T> reduce_mean(const Tensor<T>& a);

// Picks one element along the final axis per leading position:
// a [.., V] with ids of length prod(..) -> [..].
template <typename T>
Tensor<T> gather_last(const Tensor<T>& a, std::span<const std::int32_t> ids);

// Elementwise sum of k same-shape tensors added in ascending value order at
// each position, making the result invariant to input permutation bit for
// bit. Single-input calls return the input unchanged.
template <typename T>
Tensor<T> ordered_sum(std::span<const Tensor<T>> parts);

template <typename T>
bool all_finite(const Tensor<T>& a);

}  // namespace mstx::ops
