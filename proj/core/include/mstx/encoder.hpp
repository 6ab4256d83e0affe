#pragma once

#include <vector>

#include "mstx/blocks.hpp"
#include "mstx/config.hpp"

namespace mstx {

// Declarative encoder layout: k parallel streams of l layers each between a
// shared input layer and a shared output layer, with an optional skip
// connection carrying the input layer's output straight to the merge.
// streams=1, skip=false is a plain linear stack of stream_depth + 2 layers.
struct EncoderTopology {
  int streams = 1;
  int stream_depth = 1;
  bool skip = false;

  int total_layers() const { return streams * stream_depth + 2; }

  void validate() const {
    if (streams < 1 || stream_depth < 1) {
      throw ConfigError("topology: streams and stream_depth must be >= 1, got " +
                        std::to_string(streams) + "(" + std::to_string(stream_depth) + ")");
    }
  }

  // "2(1)+skip" style label.
  std::string label() const;
};

// Encoder body: input layer, k independent stacks that each see only the
// input layer's output, and an output layer applied to the merged result.
// Merging is an elementwise sum taken in ascending value order at every
// position, so stream order never affects a single bit of the output; the
// skip addend is applied after the stream sum, exactly once.
template <typename T>
struct MultiStreamEncoder {
  EncoderTopology topology;
  EncoderLayerParams<T> input_layer;
  std::vector<std::vector<EncoderLayerParams<T>>> streams;  // [k][l]
  EncoderLayerParams<T> output_layer;

  struct Detail {
    Tensor<T> z_in;       // input layer output, shared by streams and skip
    Tensor<T> merged;     // stream sum (+ z_in when skip); the output layer's input
    Tensor<T> z_out;      // final encoder output
  };

  // x is the embedded (embedding + positions + dropout) source batch.
  Detail forward_detail(const Tensor<T>& x, const Mask* pad_mask, RunContext<T>& ctx) const;
  Tensor<T> forward(const Tensor<T>& x, const Mask* pad_mask, RunContext<T>& ctx) const {
    return forward_detail(x, pad_mask, ctx).z_out;
  }
};

extern template struct MultiStreamEncoder<float>;
extern template struct MultiStreamEncoder<double>;

}  // namespace mstx
