#include "mstx/tape.hpp"

namespace mstx {

template <typename T>
thread_local Tape<T>* Tape<T>::active_ = nullptr;

template <typename T>
void Tape<T>::record(const char* op, std::vector<Tensor<T>> inputs, Tensor<T> output,
                     std::function<void()> backward_step) {
  if (consumed_) {
    throw NumericError("tape: recording after backward; re-run the forward pass first");
  }
  ops_.push_back(Record{op, std::move(inputs), std::move(output), std::move(backward_step)});
}

template <typename T>
void Tape<T>::backward(const Tensor<T>& loss) {
  if (!loss.defined() || !loss.is_scalar()) {
    throw NumericError("backward: loss must be a scalar tensor");
  }
  if (consumed_) {
    throw NumericError("backward: tape already consumed; re-run the forward pass first");
  }
  if (ops_.empty()) {
    throw NumericError("backward: tape is empty");
  }
  Tensor<T> seed = loss;
  seed.grad_accumulator()[0] = T{1};
  for (std::size_t i = ops_.size(); i-- > 0;) {
    ops_[i].backward_step();
  }
  consumed_ = true;
}

template <typename T>
void Tape<T>::reset() {
  ops_.clear();
  consumed_ = false;
}

template <typename T>
typename Tape<T>::OpView Tape<T>::op(std::size_t index) const {
  const Record& r = ops_.at(index);
  return OpView{r.name, r.inputs, r.output};
}

template class Tape<float>;
template class Tape<double>;

}  // namespace mstx
