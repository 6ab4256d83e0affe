#pragma once

#include <functional>
#include <span>
#include <vector>

#include "mstx/tensor.hpp"

namespace mstx {

// Recording of primitive operations for one forward pass. Operations append
// in execution order, so every op's inputs precede it; backward() replays the
// records in reverse, visiting each exactly once and accumulating gradients
// into every tensor that requires them.
//
// A tape is activated for the current thread with Tape::Scope. Primitives
// record themselves only while a tape is active and at least one input
// requires a gradient; forward passes without an active tape are plain
// evaluation. One tape serves one backward pass: calling backward() twice
// without re-running the forward is an error.
template <typename T>
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  class Scope {
   public:
    explicit Scope(Tape& tape) : previous_(active_) { active_ = &tape; }
    ~Scope() { active_ = previous_; }
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Tape* previous_;
  };

  static Tape* active() { return active_; }

  void record(const char* op, std::vector<Tensor<T>> inputs, Tensor<T> output,
              std::function<void()> backward_step);

  // Seeds d(loss)/d(loss) = 1 and replays the tape in reverse.
  void backward(const Tensor<T>& loss);

  std::size_t num_ops() const { return ops_.size(); }
  bool consumed() const { return consumed_; }
  void reset();

  // Read-only view of one recorded op, for diagnostics and tests.
  struct OpView {
    const char* name;
    std::span<const Tensor<T>> inputs;
    const Tensor<T>& output;
  };
  OpView op(std::size_t index) const;

 private:
  struct Record {
    const char* name;
    std::vector<Tensor<T>> inputs;
    Tensor<T> output;
    std::function<void()> backward_step;
  };
  std::vector<Record> ops_;
  bool consumed_ = false;
  static thread_local Tape* active_;
};

using TapeF = Tape<float>;
using TapeD = Tape<double>;

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace mstx
