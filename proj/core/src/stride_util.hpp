#pragma once

#include <cstddef>
#include <vector>

#include "mstx/tensor.hpp"

namespace mstx::detail {

inline std::vector<std::size_t> row_major_strides(const Shape& shape) {
  std::vector<std::size_t> strides(shape.size(), 1);
  for (std::size_t i = shape.size(); i-- > 1;) {
    strides[i - 1] = strides[i] * shape[i];
  }
  return strides;
}

// True when `in` broadcasts against `out` numpy-style (right-aligned,
// size-1 dims repeat).
inline bool broadcastable(const Shape& out, const Shape& in) {
  if (in.size() > out.size()) return false;
  const std::size_t pad = out.size() - in.size();
  for (std::size_t i = 0; i < in.size(); ++i) {
    if (in[i] != 1 && in[i] != out[i + pad]) return false;
  }
  return true;
}

// Flat offset into an array of `shape` (with `strides`) addressed by the
// multi-index that `flat` denotes in `out_shape`, broadcasting size-1 dims.
inline std::size_t broadcast_offset(std::size_t flat, const Shape& out_shape,
                                    const Shape& shape,
                                    const std::vector<std::size_t>& strides) {
  std::size_t offset = 0;
  const std::size_t pad = out_shape.size() - shape.size();
  for (std::size_t axis = out_shape.size(); axis-- > 0;) {
    const std::size_t idx = flat % out_shape[axis];
    flat /= out_shape[axis];
    if (axis >= pad && shape[axis - pad] != 1) {
      offset += idx * strides[axis - pad];
    }
  }
  return offset;
}

// Walks flat indices of out_shape in order, carrying a second offset that
// advances by `strides` per axis (odometer; no per-element divisions).
template <typename Fn>
void strided_walk(const Shape& out_shape, const std::vector<std::size_t>& strides,
                  const Fn& fn) {
  const std::size_t rank = out_shape.size();
  std::vector<std::size_t> idx(rank, 0);
  std::size_t off = 0;
  const std::size_t total = shape_size(out_shape);
  for (std::size_t flat = 0; flat < total; ++flat) {
    fn(flat, off);
    for (std::size_t ax = rank; ax-- > 0;) {
      ++idx[ax];
      off += strides[ax];
      if (idx[ax] < out_shape[ax]) break;
      off -= strides[ax] * out_shape[ax];
      idx[ax] = 0;
    }
  }
}

// Per-out-axis strides for `shape` broadcast right-aligned against
// out_shape (0 on size-1 or missing axes).
inline std::vector<std::size_t> broadcast_strides(const Shape& out_shape, const Shape& shape) {
  const std::size_t rank = out_shape.size();
  const std::size_t pad = rank - shape.size();
  const auto row_strides = row_major_strides(shape);
  std::vector<std::size_t> step(rank, 0);
  for (std::size_t ax = pad; ax < rank; ++ax) {
    if (shape[ax - pad] != 1) step[ax] = row_strides[ax - pad];
  }
  return step;
}

}  // namespace mstx::detail
