#pragma once

#include <cstdint>
#include <string>

#include "mstx/error.hpp"

namespace mstx {

// Reserved token ids, shared by the tokenizer, batching and the model.
inline constexpr std::int32_t kPadId = 0;
inline constexpr std::int32_t kBosId = 1;
inline constexpr std::int32_t kEosId = 2;
inline constexpr std::int32_t kUnkId = 3;

struct ModelConfig {
  std::string name = "model";
  int d_model = 64;
  int d_ff = 256;
  int heads = 4;
  float dropout = 0.1f;
  int max_len = 64;
  int src_vocab = 4000;
  int tgt_vocab = 4000;
  // 0 = match the encoder's total layer count.
  int decoder_layers = 0;
  bool tie_output = false;

  void validate() const {
    if (d_model <= 0 || d_ff <= 0 || heads <= 0) {
      throw ConfigError("model: d_model, d_ff and heads must be positive");
    }
    if (d_model % heads != 0) {
      throw ConfigError("model: d_model " + std::to_string(d_model) +
                        " must be divisible by heads " + std::to_string(heads));
    }
    if (d_model % 2 != 0) {
      throw ConfigError("model: d_model must be even for sinusoidal positions");
    }
    if (max_len < 2) throw ConfigError("model: max_len must be at least 2");
    if (src_vocab <= kUnkId || tgt_vocab <= kUnkId) {
      throw ConfigError("model: vocab sizes must exceed the reserved token ids");
    }
    if (dropout < 0.0f || dropout >= 1.0f) {
      throw ConfigError("model: dropout must lie in [0, 1)");
    }
    if (decoder_layers < 0) throw ConfigError("model: decoder_layers must be >= 0");
  }
};

}  // namespace mstx
