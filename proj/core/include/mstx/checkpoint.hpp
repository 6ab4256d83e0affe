#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>

#include "mstx/model.hpp"
#include "mstx/train.hpp"

namespace mstx {

// Binary checkpoint, little-endian:
//   magic "MSTX", u32 version,
//   u64 tensor count, then per tensor:
//     u32 name length, UTF-8 name, u32 rank, u64 dims..., f32 data
//   optimizer state in the same tensor encoding (u64 count + tensors named
//   adam.m:<param> / adam.v:<param>),
//   rng state bytes (u64 length + bytes), u64 step.
//
// save -> load -> save produces byte-identical files; loading into a model
// whose parameter names or shapes differ raises an error naming the first
// offending tensor.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path,
                     std::span<const NamedTensor<float>> params, const AdamState& adam,
                     const std::string& rng_state, std::int64_t step);

struct LoadedCheckpointMeta {
  std::string rng_state;
  std::int64_t step = 0;
};

// Fills params and adam in place; shapes and names must match exactly.
LoadedCheckpointMeta load_checkpoint(const std::filesystem::path& path,
                                     std::span<NamedTensor<float>> params, AdamState& adam);

}  // namespace mstx
