#include "mstx/encoder.hpp"

namespace mstx {

std::string EncoderTopology::label() const {
  std::string s = std::to_string(streams) + "(" + std::to_string(stream_depth) + ")";
  if (skip) s += "+skip";
  return s;
}

template <typename T>
typename MultiStreamEncoder<T>::Detail MultiStreamEncoder<T>::forward_detail(
    const Tensor<T>& x, const Mask* pad_mask, RunContext<T>& ctx) const {
  topology.validate();

  ctx.stream = 0;
  ctx.layer = 0;
  Tensor<T> z_in = encoder_layer(x, pad_mask, input_layer, ctx);

  std::vector<Tensor<T>> outputs;
  outputs.reserve(streams.size());
  for (std::size_t s = 0; s < streams.size(); ++s) {
    Tensor<T> z = z_in;
    for (std::size_t l = 0; l < streams[s].size(); ++l) {
      ctx.stream = static_cast<int>(s + 1);
      ctx.layer = static_cast<int>(l + 1);
      z = encoder_layer(z, pad_mask, streams[s][l], ctx);
    }
    if (ctx.detach_streams) {
      z = Tensor<T>::from(z.shape(), std::vector<T>(z.value().begin(), z.value().end()));
    }
    outputs.push_back(z);
  }

  Tensor<T> merged = ops::ordered_sum<T>(outputs);
  if (topology.skip) merged = ops::add(merged, z_in);

  ctx.stream = 0;
  ctx.layer = topology.stream_depth + 1;
  Tensor<T> z_out = encoder_layer(merged, pad_mask, output_layer, ctx);
  return Detail{z_in, merged, z_out};
}

template struct MultiStreamEncoder<float>;
template struct MultiStreamEncoder<double>;

}  // namespace mstx
