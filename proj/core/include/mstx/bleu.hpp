#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace mstx {

struct BleuOptions {
  // Add-one smoothing of an n-gram precision (n >= 2) only when its clipped
  // match count is zero; disable for exact hand-oracle comparisons.
  bool smooth = true;
};

// Corpus-level BLEU-4 on token-id sequences, 0..100: geometric mean of the
// clipped 1..4-gram precisions times the brevity penalty exp(1 - r/c) for
// c < r. A single reference per hypothesis. Orders of n with no hypothesis
// n-grams at all contribute precision 1.
double bleu4(std::span<const std::vector<std::int32_t>> hypotheses,
             std::span<const std::vector<std::int32_t>> references, const BleuOptions& options = {});

}  // namespace mstx
