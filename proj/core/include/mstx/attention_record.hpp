#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace mstx {

enum class AttentionKind { EncoderSelf, DecoderSelf, DecoderCross };

const char* to_string(AttentionKind kind);

// One head's attention weight matrix for one example, with provenance.
// Matrices are trimmed to the example's true (unpadded) lengths; rows sum to
// 1 over the unmasked keys. Stream 0 means "no stream" (shared encoder
// layers and all decoder layers); stream layers are numbered from 1.
struct AttentionRecord {
  AttentionKind kind = AttentionKind::EncoderSelf;
  int layer = 0;
  int stream = 0;
  int head = 0;
  int example = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<float> weights;      // row-major rows x cols
  std::vector<float> value_norms;  // L2 norm of each key's projected value vector; size cols

  float weight(std::size_t r, std::size_t c) const { return weights[r * cols + c]; }
};

// Collector passed through a forward pass when attention recording is on.
struct AttentionTrace {
  std::vector<AttentionRecord> records;
};

}  // namespace mstx
