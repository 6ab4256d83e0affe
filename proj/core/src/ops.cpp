#include "mstx/ops.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <thread>

#include "stride_util.hpp"

namespace mstx::ops {

namespace {

std::atomic<int> g_threads{1};

// Splits [0, rows) into contiguous chunks, one worker each. Every output row
// is written by exactly one worker in the same inner order as the serial
// path, so results do not depend on the worker count.
template <typename Fn>
void parallel_rows(std::size_t rows, const Fn& fn) {
  const int n = g_threads.load(std::memory_order_relaxed);
  if (n <= 1 || rows < 2 * static_cast<std::size_t>(n)) {
    fn(std::size_t{0}, rows);
    return;
  }
  const std::size_t chunk = (rows + n - 1) / n;
  std::vector<std::thread> pool;
  for (std::size_t lo = 0; lo < rows; lo += chunk) {
    const std::size_t hi = std::min(rows, lo + chunk);
    pool.emplace_back(fn, lo, hi);
  }
  for (auto& t : pool) t.join();
}

// C[M,N] += A[M,K] * B[K,N]. Four K steps per pass over the C row: the j
// lanes stay independent, so the loop vectorizes without reassociating any
// single output element beyond the fixed 4-term grouping.
template <typename T>
void mm_nn(const T* a, const T* b, T* c, std::size_t m, std::size_t n, std::size_t k) {
  parallel_rows(m, [=](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      T* __restrict__ crow = c + i * n;
      const T* arow = a + i * k;
      std::size_t kk = 0;
      for (; kk + 4 <= k; kk += 4) {
        const T a0 = arow[kk], a1 = arow[kk + 1], a2 = arow[kk + 2], a3 = arow[kk + 3];
        const T* b0 = b + kk * n;
        const T* b1 = b0 + n;
        const T* b2 = b1 + n;
        const T* b3 = b2 + n;
        for (std::size_t j = 0; j < n; ++j) {
          crow[j] += a0 * b0[j] + a1 * b1[j] + a2 * b2[j] + a3 * b3[j];
        }
      }
      for (; kk < k; ++kk) {
        const T av = arow[kk];
        const T* brow = b + kk * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  });
}

// C[M,N] += A[M,K] * B[N,K]^T. Materializes B^T once (O(NK) against the
// O(MNK) multiply) and reuses the fast kernel.
template <typename T>
void mm_nt(const T* a, const T* b, T* c, std::size_t m, std::size_t n, std::size_t k) {
  thread_local std::vector<T> scratch;
  scratch.resize(n * k);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t kk = 0; kk < k; ++kk) scratch[kk * n + j] = b[j * k + kk];
  }
  mm_nn(a, scratch.data(), c, m, n, k);
}

// C[M,N] += A[K,M]^T * B[K,N]
template <typename T>
void mm_tn(const T* a, const T* b, T* c, std::size_t m, std::size_t n, std::size_t k) {
  parallel_rows(m, [=](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      T* __restrict__ crow = c + i * n;
      std::size_t kk = 0;
      for (; kk + 4 <= k; kk += 4) {
        const T a0 = a[kk * m + i], a1 = a[(kk + 1) * m + i];
        const T a2 = a[(kk + 2) * m + i], a3 = a[(kk + 3) * m + i];
        const T* b0 = b + kk * n;
        const T* b1 = b0 + n;
        const T* b2 = b1 + n;
        const T* b3 = b2 + n;
        for (std::size_t j = 0; j < n; ++j) {
          crow[j] += a0 * b0[j] + a1 * b1[j] + a2 * b2[j] + a3 * b3[j];
        }
      }
      for (; kk < k; ++kk) {
        const T av = a[kk * m + i];
        const T* brow = b + kk * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  });
}

template <typename T>
bool any_requires_grad(const std::vector<Tensor<T>>& inputs) {
  for (const auto& t : inputs) {
    if (t.requires_grad()) return true;
  }
  return false;
}

// Marks the output and records the backward rule if a tape is active and a
// gradient will be needed.
template <typename T>
Tensor<T> finish(const char* name, std::vector<Tensor<T>> inputs, Tensor<T> out,
                 std::function<void()> backward_step) {
  Tape<T>* tape = Tape<T>::active();
  if (tape != nullptr && any_requires_grad(inputs)) {
    out.set_requires_grad(true);
    tape->record(name, std::move(inputs), out, std::move(backward_step));
  }
  return out;
}

[[noreturn]] void shape_fail(const char* op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " +
                   shape_str(b));
}

// outer x n x inner decomposition around `axis`.
struct AxisSplit {
  std::size_t outer, n, inner;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis) {
  AxisSplit s{1, shape[axis], 1};
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

void check_axis(const char* op, const Shape& shape, std::size_t axis) {
  if (axis >= shape.size()) {
    throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) +
                     " out of range for shape " + shape_str(shape));
  }
}

using detail::broadcast_strides;
using detail::strided_walk;

// True when `sub` is exactly the trailing dims of `full`: broadcasting then
// reduces to repeating a contiguous block.
bool suffix_shape(const Shape& full, const Shape& sub) {
  if (sub.size() > full.size()) return false;
  const std::size_t pad = full.size() - sub.size();
  for (std::size_t i = 0; i < sub.size(); ++i) {
    if (sub[i] != full[i + pad]) return false;
  }
  return true;
}

}  // namespace

void set_threads(int n) { g_threads.store(n < 1 ? 1 : n, std::memory_order_relaxed); }
int threads() { return g_threads.load(std::memory_order_relaxed); }

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() < 2 || (sb.size() != 2 && sb.size() != sa.size())) shape_fail("matmul", sa, sb);
  const std::size_t m = sa[sa.size() - 2];
  const std::size_t k = sa[sa.size() - 1];
  const bool shared_b = sb.size() == 2;
  if (shared_b) {
    if (sb[0] != k) shape_fail("matmul", sa, sb);
  } else {
    if (sb[sb.size() - 2] != k) shape_fail("matmul", sa, sb);
    for (std::size_t i = 0; i + 2 < sa.size(); ++i) {
      if (sa[i] != sb[i]) shape_fail("matmul", sa, sb);
    }
  }
  const std::size_t n = sb[sb.size() - 1];
  std::size_t batch = 1;
  for (std::size_t i = 0; i + 2 < sa.size(); ++i) batch *= sa[i];

  Shape out_shape(sa.begin(), sa.end() - 2);
  out_shape.push_back(m);
  out_shape.push_back(n);
  Tensor<T> out = Tensor<T>::zeros(std::move(out_shape));

  const T* pa = a.value().data();
  const T* pb = b.value().data();
  T* pc = out.mutable_value().data();
  for (std::size_t i = 0; i < batch; ++i) {
    mm_nn(pa + i * m * k, shared_b ? pb : pb + i * k * n, pc + i * m * n, m, n, k);
  }

  Tensor<T> a_in = a, b_in = b, out_ref = out;
  return finish<T>(
      "matmul", {a, b}, out, [a_in, b_in, out_ref, m, n, k, batch, shared_b]() mutable {
        if (!out_ref.has_grad()) return;
        const T* g = out_ref.grad().data();
        if (a_in.requires_grad()) {
          T* da = a_in.grad_accumulator().data();
          const T* pb = b_in.value().data();
          for (std::size_t i = 0; i < batch; ++i) {
            mm_nt(g + i * m * n, shared_b ? pb : pb + i * k * n, da + i * m * k, m, k, n);
          }
        }
        if (b_in.requires_grad()) {
          T* db = b_in.grad_accumulator().data();
          const T* pa = a_in.value().data();
          for (std::size_t i = 0; i < batch; ++i) {
            mm_tn(pa + i * m * k, g + i * m * n, shared_b ? db : db + i * k * n, k, n, m);
          }
        }
      });
}

namespace {

// add / multiply share shape handling: identical shapes, or b broadcasting
// right-aligned with size-1 dims against a.
template <typename T>
void check_broadcast(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
  if (!detail::broadcastable(a.shape(), b.shape())) shape_fail(op, a.shape(), b.shape());
}

}  // namespace

namespace {

enum class BroadcastKind { Same, Suffix, General };

template <typename T>
BroadcastKind broadcast_kind(const Tensor<T>& a, const Tensor<T>& b) {
  if (b.shape() == a.shape()) return BroadcastKind::Same;
  if (suffix_shape(a.shape(), b.shape())) return BroadcastKind::Suffix;
  return BroadcastKind::General;
}

}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  check_broadcast("add", a, b);
  Tensor<T> out = Tensor<T>::zeros(a.shape());
  const auto va = a.value();
  const auto vb = b.value();
  auto vo = out.mutable_value();
  const BroadcastKind kind = broadcast_kind(a, b);
  switch (kind) {
    case BroadcastKind::Same:
      for (std::size_t i = 0; i < va.size(); ++i) vo[i] = va[i] + vb[i];
      break;
    case BroadcastKind::Suffix: {
      const std::size_t bs = vb.size();
      for (std::size_t blk = 0; blk < va.size(); blk += bs) {
        for (std::size_t j = 0; j < bs; ++j) vo[blk + j] = va[blk + j] + vb[j];
      }
      break;
    }
    case BroadcastKind::General: {
      const auto step = broadcast_strides(a.shape(), b.shape());
      strided_walk(a.shape(), step,
                   [&](std::size_t flat, std::size_t off) { vo[flat] = va[flat] + vb[off]; });
      break;
    }
  }

  Tensor<T> a_in = a, b_in = b, out_ref = out;
  return finish<T>("add", {a, b}, out, [a_in, b_in, out_ref, kind]() mutable {
    if (!out_ref.has_grad()) return;
    const auto g = out_ref.grad();
    if (a_in.requires_grad()) {
      auto da = a_in.grad_accumulator();
      for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i];
    }
    if (b_in.requires_grad()) {
      auto db = b_in.grad_accumulator();
      switch (kind) {
        case BroadcastKind::Same:
          for (std::size_t i = 0; i < g.size(); ++i) db[i] += g[i];
          break;
        case BroadcastKind::Suffix: {
          const std::size_t bs = db.size();
          for (std::size_t blk = 0; blk < g.size(); blk += bs) {
            for (std::size_t j = 0; j < bs; ++j) db[j] += g[blk + j];
          }
          break;
        }
        case BroadcastKind::General: {
          const auto step = broadcast_strides(a_in.shape(), b_in.shape());
          strided_walk(a_in.shape(), step,
                       [&](std::size_t flat, std::size_t off) { db[off] += g[flat]; });
          break;
        }
      }
    }
  });
}

template <typename T>
Tensor<T> multiply(const Tensor<T>& a, const Tensor<T>& b) {
  check_broadcast("multiply", a, b);
  Tensor<T> out = Tensor<T>::zeros(a.shape());
  const auto va = a.value();
  const auto vb = b.value();
  auto vo = out.mutable_value();
  const BroadcastKind kind = broadcast_kind(a, b);
  switch (kind) {
    case BroadcastKind::Same:
      for (std::size_t i = 0; i < va.size(); ++i) vo[i] = va[i] * vb[i];
      break;
    case BroadcastKind::Suffix: {
      const std::size_t bs = vb.size();
      for (std::size_t blk = 0; blk < va.size(); blk += bs) {
        for (std::size_t j = 0; j < bs; ++j) vo[blk + j] = va[blk + j] * vb[j];
      }
      break;
    }
    case BroadcastKind::General: {
      const auto step = broadcast_strides(a.shape(), b.shape());
      strided_walk(a.shape(), step,
                   [&](std::size_t flat, std::size_t off) { vo[flat] = va[flat] * vb[off]; });
      break;
    }
  }

  Tensor<T> a_in = a, b_in = b, out_ref = out;
  return finish<T>("multiply", {a, b}, out, [a_in, b_in, out_ref, kind]() mutable {
    if (!out_ref.has_grad()) return;
    const auto g = out_ref.grad();
    const auto va = a_in.value();
    const auto vb = b_in.value();
    const auto step = kind == BroadcastKind::General
                          ? broadcast_strides(a_in.shape(), b_in.shape())
                          : std::vector<std::size_t>{};
    if (a_in.requires_grad()) {
      auto da = a_in.grad_accumulator();
      switch (kind) {
        case BroadcastKind::Same:
          for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * vb[i];
          break;
        case BroadcastKind::Suffix: {
          const std::size_t bs = vb.size();
          for (std::size_t blk = 0; blk < g.size(); blk += bs) {
            for (std::size_t j = 0; j < bs; ++j) da[blk + j] += g[blk + j] * vb[j];
          }
          break;
        }
        case BroadcastKind::General:
          strided_walk(a_in.shape(), step, [&](std::size_t flat, std::size_t off) {
            da[flat] += g[flat] * vb[off];
          });
          break;
      }
    }
    if (b_in.requires_grad()) {
      auto db = b_in.grad_accumulator();
      switch (kind) {
        case BroadcastKind::Same:
          for (std::size_t i = 0; i < g.size(); ++i) db[i] += g[i] * va[i];
          break;
        case BroadcastKind::Suffix: {
          const std::size_t bs = db.size();
          for (std::size_t blk = 0; blk < g.size(); blk += bs) {
            for (std::size_t j = 0; j < bs; ++j) db[j] += g[blk + j] * va[blk + j];
          }
          break;
        }
        case BroadcastKind::General:
          strided_walk(a_in.shape(), step, [&](std::size_t flat, std::size_t off) {
            db[off] += g[flat] * va[flat];
          });
          break;
      }
    }
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  Tensor<T> out = Tensor<T>::zeros(a.shape());
  const auto va = a.value();
  auto vo = out.mutable_value();
  for (std::size_t i = 0; i < va.size(); ++i) vo[i] = va[i] * factor;

  Tensor<T> a_in = a, out_ref = out;
  return finish<T>("scale", {a}, out, [a_in, out_ref, factor]() mutable {
    if (!out_ref.has_grad() || !a_in.requires_grad()) return;
    const auto g = out_ref.grad();
    auto da = a_in.grad_accumulator();
    for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * factor;
  });
}

namespace {

// Source strides per output axis for a two-axis swap.
std::vector<std::size_t> transpose_strides(const Shape& in_shape, std::size_t axis0,
                                           std::size_t axis1) {
  auto strides = mstx::detail::row_major_strides(in_shape);
  std::swap(strides[axis0], strides[axis1]);
  return strides;
}

}  // namespace

template <typename T>
Tensor<T> transpose(const Tensor<T>& a, std::size_t axis0, std::size_t axis1) {
  check_axis("transpose", a.shape(), axis0);
  check_axis("transpose", a.shape(), axis1);
  Shape out_shape = a.shape();
  std::swap(out_shape[axis0], out_shape[axis1]);
  const auto strides = transpose_strides(a.shape(), axis0, axis1);
  Tensor<T> out = Tensor<T>::zeros(out_shape);
  const auto va = a.value();
  auto vo = out.mutable_value();
  strided_walk(out_shape, strides,
               [&](std::size_t flat, std::size_t src) { vo[flat] = va[src]; });

  Tensor<T> a_in = a, out_ref = out;
  return finish<T>("transpose", {a}, out,
                   [a_in, out_ref, out_shape = std::move(out_shape), strides]() mutable {
                     if (!out_ref.has_grad() || !a_in.requires_grad()) return;
                     const auto g = out_ref.grad();
                     auto da = a_in.grad_accumulator();
                     strided_walk(out_shape, strides,
                                  [&](std::size_t flat, std::size_t src) { da[src] += g[flat]; });
                   });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  if (shape_size(shape) != a.size()) shape_fail("reshape", a.shape(), shape);
  Tensor<T> out = Tensor<T>::from(std::move(shape),
                                  std::vector<T>(a.value().begin(), a.value().end()));
  Tensor<T> a_in = a, out_ref = out;
  return finish<T>("reshape", {a}, out, [a_in, out_ref]() mutable {
    if (!out_ref.has_grad() || !a_in.requires_grad()) return;
    const auto g = out_ref.grad();
    auto da = a_in.grad_accumulator();
    for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i];
  });
}

template <typename T>
Tensor<T> concat(std::span<const Tensor<T>> parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& first = parts[0].shape();
  check_axis("concat", first, axis);
  Shape out_shape = first;
  std::size_t axis_total = 0;
  for (const auto& p : parts) {
    if (p.rank() != first.size()) shape_fail("concat", first, p.shape());
    for (std::size_t i = 0; i < first.size(); ++i) {
      if (i != axis && p.shape()[i] != first[i]) shape_fail("concat", first, p.shape());
    }
    axis_total += p.shape()[axis];
  }
  out_shape[axis] = axis_total;
  Tensor<T> out = Tensor<T>::zeros(out_shape);
  const AxisSplit s = split_axis(out_shape, axis);
  auto vo = out.mutable_value();

  std::vector<std::size_t> offsets;  // per-part start along the axis
  std::size_t at = 0;
  for (const auto& p : parts) {
    offsets.push_back(at);
    at += p.shape()[axis];
  }
  for (std::size_t pi = 0; pi < parts.size(); ++pi) {
    const auto vp = parts[pi].value();
    const std::size_t pn = parts[pi].shape()[axis];
    for (std::size_t o = 0; o < s.outer; ++o) {
      std::copy_n(vp.data() + o * pn * s.inner, pn * s.inner,
                  vo.data() + (o * s.n + offsets[pi]) * s.inner);
    }
  }

  std::vector<Tensor<T>> inputs(parts.begin(), parts.end());
  Tensor<T> out_ref = out;
  std::vector<Tensor<T>> captured = inputs;
  return finish<T>("concat", std::move(inputs), out,
                   [captured, out_ref, offsets, s]() mutable {
                     if (!out_ref.has_grad()) return;
                     const auto g = out_ref.grad();
                     for (std::size_t pi = 0; pi < captured.size(); ++pi) {
                       if (!captured[pi].requires_grad()) continue;
                       auto dp = captured[pi].grad_accumulator();
                       const std::size_t pn_axis =
                           captured[pi].size() / (s.outer * s.inner);
                       for (std::size_t o = 0; o < s.outer; ++o) {
                         const T* src = g.data() + (o * s.n + offsets[pi]) * s.inner;
                         T* dst = dp.data() + o * pn_axis * s.inner;
                         for (std::size_t i = 0; i < pn_axis * s.inner; ++i) dst[i] += src[i];
                       }
                     }
                   });
}

template <typename T>
std::vector<Tensor<T>> split(const Tensor<T>& a, std::size_t parts, std::size_t axis) {
  check_axis("split", a.shape(), axis);
  if (parts == 0 || a.shape()[axis] % parts != 0) {
    throw ShapeError("split: axis extent " + std::to_string(a.shape()[axis]) +
                     " not divisible into " + std::to_string(parts) + " parts");
  }
  const AxisSplit s = split_axis(a.shape(), axis);
  const std::size_t pn = s.n / parts;
  Shape part_shape = a.shape();
  part_shape[axis] = pn;

  std::vector<Tensor<T>> outs;
  for (std::size_t pi = 0; pi < parts; ++pi) {
    Tensor<T> out = Tensor<T>::zeros(part_shape);
    auto vo = out.mutable_value();
    const auto va = a.value();
    for (std::size_t o = 0; o < s.outer; ++o) {
      std::copy_n(va.data() + (o * s.n + pi * pn) * s.inner, pn * s.inner,
                  vo.data() + o * pn * s.inner);
    }
    Tensor<T> a_in = a, out_ref = out;
    outs.push_back(finish<T>("split", {a}, out, [a_in, out_ref, s, pn, pi]() mutable {
      if (!out_ref.has_grad() || !a_in.requires_grad()) return;
      const auto g = out_ref.grad();
      auto da = a_in.grad_accumulator();
      for (std::size_t o = 0; o < s.outer; ++o) {
        const T* src = g.data() + o * pn * s.inner;
        T* dst = da.data() + (o * s.n + pi * pn) * s.inner;
        for (std::size_t i = 0; i < pn * s.inner; ++i) dst[i] += src[i];
      }
    }));
  }
  return outs;
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& a, std::size_t axis) {
  check_axis("softmax", a.shape(), axis);
  const AxisSplit s = split_axis(a.shape(), axis);
  Tensor<T> out = Tensor<T>::zeros(a.shape());
  const auto va = a.value();
  auto vo = out.mutable_value();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.n * s.inner + in;
      T mx = va[base];
      for (std::size_t j = 1; j < s.n; ++j) mx = std::max(mx, va[base + j * s.inner]);
      T sum{0};
      for (std::size_t j = 0; j < s.n; ++j) {
        const T e = std::exp(va[base + j * s.inner] - mx);
        vo[base + j * s.inner] = e;
        sum += e;
      }
      const T inv = T{1} / sum;
      for (std::size_t j = 0; j < s.n; ++j) vo[base + j * s.inner] *= inv;
    }
  }

  Tensor<T> a_in = a, out_ref = out;
  return finish<T>("softmax", {a}, out, [a_in, out_ref, s]() mutable {
    if (!out_ref.has_grad() || !a_in.requires_grad()) return;
    const auto g = out_ref.grad();
    const auto y = out_ref.value();
    auto da = a_in.grad_accumulator();
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t in = 0; in < s.inner; ++in) {
        const std::size_t base = o * s.n * s.inner + in;
        T dot{0};
        for (std::size_t j = 0; j < s.n; ++j) {
          dot += g[base + j * s.inner] * y[base + j * s.inner];
        }
        for (std::size_t j = 0; j < s.n; ++j) {
          const std::size_t idx = base + j * s.inner;
          da[idx] += y[idx] * (g[idx] - dot);
        }
      }
    }
  });
}

template <typename T>
Tensor<T> log_softmax(const Tensor<T>& a, std::size_t axis) {
  check_axis("log_softmax", a.shape(), axis);
  const AxisSplit s = split_axis(a.shape(), axis);
  Tensor<T> out = Tensor<T>::zeros(a.shape());
  const auto va = a.value();
  auto vo = out.mutable_value();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.n * s.inner + in;
      T mx = va[base];
      for (std::size_t j = 1; j < s.n; ++j) mx = std::max(mx, va[base + j * s.inner]);
      T sum{0};
      for (std::size_t j = 0; j < s.n; ++j) sum += std::exp(va[base + j * s.inner] - mx);
      // Two-step form: folding log(sum) into mx first would round the
      // correction away whenever it is below one ulp of mx.
      const T log_sum = std::log(sum);
      for (std::size_t j = 0; j < s.n; ++j) {
        vo[base + j * s.inner] = (va[base + j * s.inner] - mx) - log_sum;
      }
    }
  }

  Tensor<T> a_in = a, out_ref = out;
  return finish<T>("log_softmax", {a}, out, [a_in, out_ref, s]() mutable {
    if (!out_ref.has_grad() || !a_in.requires_grad()) return;
    const auto g = out_ref.grad();
    const auto y = out_ref.value();
    auto da = a_in.grad_accumulator();
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t in = 0; in < s.inner; ++in) {
        const std::size_t base = o * s.n * s.inner + in;
        T gsum{0};
        for (std::size_t j = 0; j < s.n; ++j) gsum += g[base + j * s.inner];
        for (std::size_t j = 0; j < s.n; ++j) {
          const std::size_t idx = base + j * s.inner;
          da[idx] += g[idx] - std::exp(y[idx]) * gsum;
        }
      }
    }
  });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
  Tensor<T> out = Tensor<T>::zeros(a.shape());
  const auto va = a.value();
  auto vo = out.mutable_value();
  for (std::size_t i = 0; i < va.size(); ++i) vo[i] = va[i] > T{0} ? va[i] : T{0};

  Tensor<T> a_in = a, out_ref = out;
  return finish<T>("relu", {a}, out, [a_in, out_ref]() mutable {
    if (!out_ref.has_grad() || !a_in.requires_grad()) return;
    const auto g = out_ref.grad();
    const auto va = a_in.value();
    auto da = a_in.grad_accumulator();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (va[i] > T{0}) da[i] += g[i];
    }
  });
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& a, const Tensor<T>& gain, const Tensor<T>& bias, T eps) {
  if (a.rank() < 1) throw ShapeError("layer_norm: input must have rank >= 1");
  const std::size_t d = a.shape().back();
  if (gain.shape() != Shape{d} || bias.shape() != Shape{d}) {
    throw ShapeError("layer_norm: gain/bias must be [" + std::to_string(d) + "], got " +
                     shape_str(gain.shape()) + " and " + shape_str(bias.shape()));
  }
  const std::size_t rows = a.size() / d;
  Tensor<T> out = Tensor<T>::zeros(a.shape());
  const auto va = a.value();
  const auto vg = gain.value();
  const auto vb = bias.value();
  auto vo = out.mutable_value();

  // Normalized values and inverse stddev are reused by the backward rule.
  auto xhat = std::make_shared<std::vector<T>>(a.size());
  auto inv_std = std::make_shared<std::vector<T>>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* x = va.data() + r * d;
    T mean{0};
    for (std::size_t i = 0; i < d; ++i) mean += x[i];
    mean /= static_cast<T>(d);
    T var{0};
    for (std::size_t i = 0; i < d; ++i) {
      const T c = x[i] - mean;
      var += c * c;
    }
    var /= static_cast<T>(d);
    const T inv = T{1} / std::sqrt(var + eps);
    (*inv_std)[r] = inv;
    for (std::size_t i = 0; i < d; ++i) {
      const T xh = (x[i] - mean) * inv;
      (*xhat)[r * d + i] = xh;
      vo[r * d + i] = xh * vg[i] + vb[i];
    }
  }

  Tensor<T> a_in = a, g_in = gain, b_in = bias, out_ref = out;
  return finish<T>("layer_norm", {a, gain, bias}, out,
                   [a_in, g_in, b_in, out_ref, xhat, inv_std, rows, d]() mutable {
                     if (!out_ref.has_grad()) return;
                     const auto g = out_ref.grad();
                     const auto vg = g_in.value();
                     for (std::size_t r = 0; r < rows; ++r) {
                       const T* grow = g.data() + r * d;
                       const T* xh = xhat->data() + r * d;
                       if (a_in.requires_grad()) {
                         auto da = a_in.grad_accumulator();
                         T mean_h{0}, mean_hx{0};
                         for (std::size_t i = 0; i < d; ++i) {
                           const T h = grow[i] * vg[i];
                           mean_h += h;
                           mean_hx += h * xh[i];
                         }
                         mean_h /= static_cast<T>(d);
                         mean_hx /= static_cast<T>(d);
                         const T inv = (*inv_std)[r];
                         for (std::size_t i = 0; i < d; ++i) {
                           const T h = grow[i] * vg[i];
                           da[r * d + i] += inv * (h - mean_h - xh[i] * mean_hx);
                         }
                       }
                       if (g_in.requires_grad()) {
                         auto dg = g_in.grad_accumulator();
                         for (std::size_t i = 0; i < d; ++i) dg[i] += grow[i] * xh[i];
                       }
                       if (b_in.requires_grad()) {
                         auto db = b_in.grad_accumulator();
                         for (std::size_t i = 0; i < d; ++i) db[i] += grow[i];
                       }
                     }
                   });
}

template <typename T>
Tensor<T> dropout(const Tensor<T>& a, T rate, Rng& rng) {
  if (rate < T{0} || rate >= T{1}) {
    throw ShapeError("dropout: rate must lie in [0, 1), got " + std::to_string(rate));
  }
  if (rate == T{0}) return a;

  const T keep_scale = T{1} / (T{1} - rate);
  auto keep = std::make_shared<std::vector<std::uint8_t>>(a.size());
  Tensor<T> out = Tensor<T>::zeros(a.shape());
  const auto va = a.value();
  auto vo = out.mutable_value();
  for (std::size_t i = 0; i < va.size(); ++i) {
    const bool k = rng.uniform() >= static_cast<double>(rate);
    (*keep)[i] = k ? 1 : 0;
    vo[i] = k ? va[i] * keep_scale : T{0};
  }

  Tensor<T> a_in = a, out_ref = out;
  return finish<T>("dropout", {a}, out, [a_in, out_ref, keep, keep_scale]() mutable {
    if (!out_ref.has_grad() || !a_in.requires_grad()) return;
    const auto g = out_ref.grad();
    auto da = a_in.grad_accumulator();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if ((*keep)[i]) da[i] += g[i] * keep_scale;
    }
  });
}

template <typename T>
Tensor<T> embedding_lookup(const Tensor<T>& table, std::span<const std::int32_t> ids,
                           Shape ids_shape) {
  if (table.rank() != 2) {
    throw ShapeError("embedding_lookup: table must be [vocab, dim], got " +
                     shape_str(table.shape()));
  }
  if (shape_size(ids_shape) != ids.size()) {
    throw ShapeError("embedding_lookup: ids shape " + shape_str(ids_shape) +
                     " does not match " + std::to_string(ids.size()) + " ids");
  }
  const std::size_t vocab = table.dim(0);
  const std::size_t d = table.dim(1);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab) {
      throw DataError("embedding_lookup: token id " + std::to_string(ids[i]) +
                      " outside vocabulary of size " + std::to_string(vocab));
    }
  }
  Shape out_shape = ids_shape;
  out_shape.push_back(d);
  Tensor<T> out = Tensor<T>::zeros(out_shape);
  const auto vt = table.value();
  auto vo = out.mutable_value();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    std::copy_n(vt.data() + static_cast<std::size_t>(ids[i]) * d, d, vo.data() + i * d);
  }

  auto id_copy = std::make_shared<std::vector<std::int32_t>>(ids.begin(), ids.end());
  Tensor<T> t_in = table, out_ref = out;
  return finish<T>("embedding_lookup", {table}, out, [t_in, out_ref, id_copy, d]() mutable {
    if (!out_ref.has_grad() || !t_in.requires_grad()) return;
    const auto g = out_ref.grad();
    auto dt = t_in.grad_accumulator();
    for (std::size_t i = 0; i < id_copy->size(); ++i) {
      T* dst = dt.data() + static_cast<std::size_t>((*id_copy)[i]) * d;
      const T* src = g.data() + i * d;
      for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
    }
  });
}

template <typename T>
Tensor<T> masked_fill(const Tensor<T>& a, const Mask& mask, T fill) {
  if (!detail::broadcastable(a.shape(), mask.shape)) {
    shape_fail("masked_fill", a.shape(), mask.shape);
  }
  auto blocked = std::make_shared<std::vector<std::uint8_t>>(a.size());
  Tensor<T> out = Tensor<T>::zeros(a.shape());
  const auto va = a.value();
  auto vo = out.mutable_value();
  const auto step = broadcast_strides(a.shape(), mask.shape);
  strided_walk(a.shape(), step, [&](std::size_t flat, std::size_t off) {
    const bool b = mask.data[off] != 0;
    (*blocked)[flat] = b ? 1 : 0;
    vo[flat] = b ? fill : va[flat];
  });

  Tensor<T> a_in = a, out_ref = out;
  return finish<T>("masked_fill", {a}, out, [a_in, out_ref, blocked]() mutable {
    if (!out_ref.has_grad() || !a_in.requires_grad()) return;
    const auto g = out_ref.grad();
    auto da = a_in.grad_accumulator();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (!(*blocked)[i]) da[i] += g[i];
    }
  });
}

template <typename T>
Tensor<T> reduce_sum(const Tensor<T>& a) {
  T sum{0};
  for (T v : a.value()) sum += v;
  Tensor<T> out = Tensor<T>::scalar(sum);
  Tensor<T> a_in = a, out_ref = out;
  return finish<T>("reduce_sum", {a}, out, [a_in, out_ref]() mutable {
    if (!out_ref.has_grad() || !a_in.requires_grad()) return;
    const T g = out_ref.grad()[0];
    auto da = a_in.grad_accumulator();
    for (std::size_t i = 0; i < da.size(); ++i) da[i] += g;
  });
}

template <typename T>
Tensor<T> reduce_mean(const Tensor<T>& a) {
  T sum{0};
  for (T v : a.value()) sum += v;
  const T inv = T{1} / static_cast<T>(a.size());
  Tensor<T> out = Tensor<T>::scalar(sum * inv);
  Tensor<T> a_in = a, out_ref = out;
  return finish<T>("reduce_mean", {a}, out, [a_in, out_ref, inv]() mutable {
    if (!out_ref.has_grad() || !a_in.requires_grad()) return;
    const T g = out_ref.grad()[0] * inv;
    auto da = a_in.grad_accumulator();
    for (std::size_t i = 0; i < da.size(); ++i) da[i] += g;
  });
}

template <typename T>
Tensor<T> gather_last(const Tensor<T>& a, std::span<const std::int32_t> ids) {
  if (a.rank() < 1) throw ShapeError("gather_last: input must have rank >= 1");
  const std::size_t v = a.shape().back();
  const std::size_t lead = a.size() / v;
  if (ids.size() != lead) {
    throw ShapeError("gather_last: expected " + std::to_string(lead) + " indices, got " +
                     std::to_string(ids.size()));
  }
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= v) {
      throw DataError("gather_last: index " + std::to_string(ids[i]) +
                      " outside final axis of extent " + std::to_string(v));
    }
  }
  Shape out_shape(a.shape().begin(), a.shape().end() - 1);
  if (out_shape.empty()) out_shape.push_back(1);
  Tensor<T> out = Tensor<T>::zeros(out_shape);
  const auto va = a.value();
  auto vo = out.mutable_value();
  for (std::size_t i = 0; i < lead; ++i) {
    vo[i] = va[i * v + static_cast<std::size_t>(ids[i])];
  }

  auto id_copy = std::make_shared<std::vector<std::int32_t>>(ids.begin(), ids.end());
  Tensor<T> a_in = a, out_ref = out;
  return finish<T>("gather_last", {a}, out, [a_in, out_ref, id_copy, v]() mutable {
    if (!out_ref.has_grad() || !a_in.requires_grad()) return;
    const auto g = out_ref.grad();
    auto da = a_in.grad_accumulator();
    for (std::size_t i = 0; i < g.size(); ++i) {
      da[i * v + static_cast<std::size_t>((*id_copy)[i])] += g[i];
    }
  });
}

template <typename T>
Tensor<T> ordered_sum(std::span<const Tensor<T>> parts) {
  if (parts.empty()) throw ShapeError("ordered_sum: no inputs");
  const Shape& shape = parts[0].shape();
  for (const auto& p : parts) {
    if (p.shape() != shape) shape_fail("ordered_sum", shape, p.shape());
  }
  if (parts.size() == 1) return parts[0];

  const std::size_t k = parts.size();
  Tensor<T> out = Tensor<T>::zeros(shape);
  auto vo = out.mutable_value();
  std::vector<std::span<const T>> views;
  views.reserve(k);
  for (const auto& p : parts) views.push_back(p.value());
  std::vector<T> buf(k);
  for (std::size_t i = 0; i < vo.size(); ++i) {
    for (std::size_t p = 0; p < k; ++p) buf[p] = views[p][i];
    std::sort(buf.begin(), buf.end());
    T s{0};
    for (std::size_t p = 0; p < k; ++p) s += buf[p];
    vo[i] = s;
  }

  std::vector<Tensor<T>> inputs(parts.begin(), parts.end());
  std::vector<Tensor<T>> captured = inputs;
  Tensor<T> out_ref = out;
  return finish<T>("ordered_sum", std::move(inputs), out, [captured, out_ref]() mutable {
    if (!out_ref.has_grad()) return;
    const auto g = out_ref.grad();
    for (auto& p : captured) {
      if (!p.requires_grad()) continue;
      auto dp = p.grad_accumulator();
      for (std::size_t i = 0; i < g.size(); ++i) dp[i] += g[i];
    }
  });
}

template <typename T>
bool all_finite(const Tensor<T>& a) {
  for (T v : a.value()) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

#define MSTX_INSTANTIATE_OPS(T)                                                              \
  template Tensor<T> matmul<T>(const Tensor<T>&, const Tensor<T>&);                          \
  template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);                             \
  template Tensor<T> multiply<T>(const Tensor<T>&, const Tensor<T>&);                        \
  template Tensor<T> scale<T>(const Tensor<T>&, T);                                          \
  template Tensor<T> transpose<T>(const Tensor<T>&, std::size_t, std::size_t);               \
  template Tensor<T> reshape<T>(const Tensor<T>&, Shape);                                    \
  template Tensor<T> concat<T>(std::span<const Tensor<T>>, std::size_t);                     \
  template std::vector<Tensor<T>> split<T>(const Tensor<T>&, std::size_t, std::size_t);      \
  template Tensor<T> softmax<T>(const Tensor<T>&, std::size_t);                              \
  template Tensor<T> log_softmax<T>(const Tensor<T>&, std::size_t);                          \
  template Tensor<T> relu<T>(const Tensor<T>&);                                              \
  template Tensor<T> layer_norm<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T); \
  template Tensor<T> dropout<T>(const Tensor<T>&, T, Rng&);                                  \
  template Tensor<T> embedding_lookup<T>(const Tensor<T>&, std::span<const std::int32_t>,    \
                                         Shape);                                             \
  template Tensor<T> masked_fill<T>(const Tensor<T>&, const Mask&, T);                       \
  template Tensor<T> reduce_sum<T>(const Tensor<T>&);                                        \
  template Tensor<T> reduce_mean<T>(const Tensor<T>&);                                       \
  template Tensor<T> gather_last<T>(const Tensor<T>&, std::span<const std::int32_t>);        \
  template Tensor<T> ordered_sum<T>(std::span<const Tensor<T>>);                             \
  template bool all_finite<T>(const Tensor<T>&);

MSTX_INSTANTIATE_OPS(float)
MSTX_INSTANTIATE_OPS(double)

#undef MSTX_INSTANTIATE_OPS

}  // namespace mstx::ops
