#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mstx/attention_record.hpp"
#include "mstx/corpus.hpp"
#include "mstx/model.hpp"

namespace mstx {

// Attention-pattern taxonomy. Classification is total: every row-stochastic
// matrix lands in exactly one class.
enum class PatternClass {
  Vertical,
  Diagonal,
  DiagonalShiftForward,
  DiagonalShiftBackward,
  SoftDiagonal,
  Heterogeneous,
};
inline constexpr int kPatternClasses = 6;

const char* to_string(PatternClass c);

struct ClassifierConfig {
  // Mass fractions; checked in this order:
  //   1. Vertical when one column holds >= vertical_threshold of all mass;
  //   2. Diagonal / shift +-1 when the single diagonal at offset 0, +1 or -1
  //      holds >= diagonal_threshold (best offset wins; ties prefer 0, then
  //      +1, then -1; +1 attends to the next token);
  //   3. SoftDiagonal when the +-2 band around that best offset holds
  //      >= soft_threshold;
  //   4. Heterogeneous otherwise.
  float vertical_threshold = 0.5f;
  float diagonal_threshold = 0.6f;
  float soft_threshold = 0.7f;
  float row_sum_tolerance = 1e-4f;
};

// weights is row-major [rows, cols], rows and cols >= 2; each row must sum
// to 1 within row_sum_tolerance.
PatternClass classify_pattern(std::span<const float> weights, std::size_t rows, std::size_t cols,
                              const ClassifierConfig& config = {});

PatternClass classify_pattern(const AttentionRecord& record,
                              const ClassifierConfig& config = {});

enum class HistogramBasis {
  PerExample,    // one count per (example, head)
  MajorityVote,  // one count per head: its most frequent class across examples
};

// Per-layer class counts for one attention kind.
struct PatternHistogram {
  AttentionKind kind = AttentionKind::EncoderSelf;
  // layer index -> counts per class
  std::map<int, std::array<std::int64_t, kPatternClasses>> counts;
  std::size_t skipped = 0;  // matrices below the 2x2 classification minimum
};

PatternHistogram tabulate_patterns(std::span<const AttentionRecord> records, AttentionKind kind,
                                   HistogramBasis basis, const ClassifierConfig& config = {});

// Runs the model over a probe batch in eval mode with recording enabled.
AttentionTrace record_attention(const Seq2Seq<float>& model, const Batch& batch);

struct WeightedNorms {
  std::size_t rows = 0, cols = 0;
  std::vector<float> matrix;  // alpha_ij * ||v_j||
  // Pearson correlation between column-mean attention weights and value
  // norms; 0 when either side has no variance.
  float correlation = 0;
};

// value_vectors is row-major [cols, dim]: the per-head value vectors (after
// the value projection) for each attended position.
WeightedNorms weighted_norms(const AttentionRecord& record, std::span<const float> value_vectors,
                             std::size_t dim);

// Same analysis from the norms captured in the record itself.
WeightedNorms weighted_norms(const AttentionRecord& record);

// Per record: a CSV of the weight matrix and an 8-bit binary PGM ("P5")
// image with value = round(255 * w / max_w). Filenames follow
// {kind}_layer{L}_stream{S}_head{H}; pass records of a single example (or
// averaged records) to avoid overwriting.
void export_heatmaps(std::span<const AttentionRecord> records,
                     const std::filesystem::path& out_dir);

}  // namespace mstx
