#include "mstx/attn_lab.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "mstx/trainer.hpp"

namespace mstx {

const char* to_string(PatternClass c) {
  switch (c) {
    case PatternClass::Vertical: return "vertical";
    case PatternClass::Diagonal: return "diagonal";
    case PatternClass::DiagonalShiftForward: return "diagonal-shift-forward";
    case PatternClass::DiagonalShiftBackward: return "diagonal-shift-backward";
    case PatternClass::SoftDiagonal: return "soft-diagonal";
    case PatternClass::Heterogeneous: return "heterogeneous";
  }
  return "unknown";
}

namespace {

double band_mass(std::span<const float> w, std::size_t rows, std::size_t cols, int offset,
                 int halfwidth) {
  double mass = 0;
  for (std::size_t i = 0; i < rows; ++i) {
    const int lo = static_cast<int>(i) + offset - halfwidth;
    const int hi = static_cast<int>(i) + offset + halfwidth;
    for (int j = std::max(lo, 0); j <= std::min(hi, static_cast<int>(cols) - 1); ++j) {
      mass += w[i * cols + static_cast<std::size_t>(j)];
    }
  }
  return mass;
}

}  // namespace

PatternClass classify_pattern(std::span<const float> weights, std::size_t rows, std::size_t cols,
                              const ClassifierConfig& config) {
  if (rows < 2 || cols < 2) {
    throw ShapeError("classify_pattern: matrix must be at least 2x2, got " +
                     std::to_string(rows) + "x" + std::to_string(cols));
  }
  if (weights.size() != rows * cols) {
    throw ShapeError("classify_pattern: expected " + std::to_string(rows * cols) + " weights");
  }
  double total = 0;
  for (std::size_t i = 0; i < rows; ++i) {
    double row_sum = 0;
    for (std::size_t j = 0; j < cols; ++j) row_sum += weights[i * cols + j];
    if (std::abs(row_sum - 1.0) > config.row_sum_tolerance) {
      throw NumericError("classify_pattern: row " + std::to_string(i) + " sums to " +
                         std::to_string(row_sum) + ", not row-stochastic");
    }
    total += row_sum;
  }

  // 1. Vertical: one column dominates.
  for (std::size_t j = 0; j < cols; ++j) {
    double col = 0;
    for (std::size_t i = 0; i < rows; ++i) col += weights[i * cols + j];
    if (col / total >= config.vertical_threshold) return PatternClass::Vertical;
  }

  // 2. Diagonal at offset 0, +1 or -1 (tie order prefers 0, then +1).
  const int offsets[3] = {0, +1, -1};
  int best_offset = 0;
  double best_mass = -1;
  for (int offset : offsets) {
    const double mass = band_mass(weights, rows, cols, offset, 0) / total;
    if (mass > best_mass) {
      best_mass = mass;
      best_offset = offset;
    }
  }
  if (best_mass >= config.diagonal_threshold) {
    if (best_offset == 0) return PatternClass::Diagonal;
    return best_offset > 0 ? PatternClass::DiagonalShiftForward
                           : PatternClass::DiagonalShiftBackward;
  }

  // 3. Soft diagonal: +-2 band around the best offset.
  if (band_mass(weights, rows, cols, best_offset, 2) / total >= config.soft_threshold) {
    return PatternClass::SoftDiagonal;
  }

  return PatternClass::Heterogeneous;
}

PatternClass classify_pattern(const AttentionRecord& record, const ClassifierConfig& config) {
  return classify_pattern(record.weights, record.rows, record.cols, config);
}

PatternHistogram tabulate_patterns(std::span<const AttentionRecord> records, AttentionKind kind,
                                   HistogramBasis basis, const ClassifierConfig& config) {
  PatternHistogram hist;
  hist.kind = kind;

  if (basis == HistogramBasis::PerExample) {
    for (const auto& rec : records) {
      if (rec.kind != kind) continue;
      if (rec.rows < 2 || rec.cols < 2) {
        ++hist.skipped;
        continue;
      }
      const PatternClass c = classify_pattern(rec, config);
      ++hist.counts[rec.layer][static_cast<std::size_t>(c)];
    }
    return hist;
  }

  // Majority vote: collect per-head votes across examples, then credit each
  // head's winning class once. Vote ties break toward the earlier class in
  // the decision order.
  std::map<std::tuple<int, int, int>, std::array<std::int64_t, kPatternClasses>> votes;
  for (const auto& rec : records) {
    if (rec.kind != kind) continue;
    if (rec.rows < 2 || rec.cols < 2) {
      ++hist.skipped;
      continue;
    }
    const PatternClass c = classify_pattern(rec, config);
    ++votes[{rec.layer, rec.stream, rec.head}][static_cast<std::size_t>(c)];
  }
  for (const auto& [key, tally] : votes) {
    std::size_t winner = 0;
    for (std::size_t c = 1; c < kPatternClasses; ++c) {
      if (tally[c] > tally[winner]) winner = c;
    }
    ++hist.counts[std::get<0>(key)][winner];
  }
  return hist;
}

AttentionTrace record_attention(const Seq2Seq<float>& model, const Batch& batch) {
  AttentionTrace trace;
  RunContext<float> ctx;
  ctx.trace = &trace;
  (void)model.forward(batch.src, batch.size, batch.src_len, batch.tgt_in, batch.tgt_len, ctx);
  return trace;
}

WeightedNorms weighted_norms(const AttentionRecord& record, std::span<const float> value_vectors,
                             std::size_t dim) {
  if (value_vectors.size() != record.cols * dim) {
    throw ShapeError("weighted_norms: expected " + std::to_string(record.cols) + " x " +
                     std::to_string(dim) + " value vectors, got " +
                     std::to_string(value_vectors.size()) + " elements");
  }
  std::vector<float> norms(record.cols);
  for (std::size_t j = 0; j < record.cols; ++j) {
    double sq = 0;
    for (std::size_t e = 0; e < dim; ++e) {
      const double x = value_vectors[j * dim + e];
      sq += x * x;
    }
    norms[j] = static_cast<float>(std::sqrt(sq));
  }
  AttentionRecord with_norms = record;
  with_norms.value_norms = std::move(norms);
  return weighted_norms(with_norms);
}

WeightedNorms weighted_norms(const AttentionRecord& record) {
  if (record.value_norms.size() != record.cols) {
    throw ShapeError("weighted_norms: record holds " + std::to_string(record.value_norms.size()) +
                     " value norms for " + std::to_string(record.cols) + " keys");
  }
  WeightedNorms out;
  out.rows = record.rows;
  out.cols = record.cols;
  out.matrix.resize(record.rows * record.cols);
  for (std::size_t i = 0; i < record.rows; ++i) {
    for (std::size_t j = 0; j < record.cols; ++j) {
      out.matrix[i * record.cols + j] = record.weight(i, j) * record.value_norms[j];
    }
  }

  // Pearson correlation between column-mean weights and value norms.
  std::vector<double> col_mean(record.cols, 0);
  for (std::size_t i = 0; i < record.rows; ++i) {
    for (std::size_t j = 0; j < record.cols; ++j) col_mean[j] += record.weight(i, j);
  }
  for (auto& c : col_mean) c /= static_cast<double>(record.rows);

  double mean_w = 0, mean_n = 0;
  for (std::size_t j = 0; j < record.cols; ++j) {
    mean_w += col_mean[j];
    mean_n += record.value_norms[j];
  }
  mean_w /= static_cast<double>(record.cols);
  mean_n /= static_cast<double>(record.cols);
  double cov = 0, var_w = 0, var_n = 0;
  for (std::size_t j = 0; j < record.cols; ++j) {
    const double dw = col_mean[j] - mean_w;
    const double dn = record.value_norms[j] - mean_n;
    cov += dw * dn;
    var_w += dw * dw;
    var_n += dn * dn;
  }
  out.correlation =
      (var_w > 0 && var_n > 0) ? static_cast<float>(cov / std::sqrt(var_w * var_n)) : 0.0f;
  return out;
}

void export_heatmaps(std::span<const AttentionRecord> records,
                     const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  for (const auto& rec : records) {
    const std::string base = std::string(to_string(rec.kind)) + "_layer" +
                             std::to_string(rec.layer) + "_stream" + std::to_string(rec.stream) +
                             "_head" + std::to_string(rec.head);

    const auto csv_path = out_dir / (base + ".csv");
    std::ofstream csv(csv_path, std::ios::binary);
    if (!csv) throw DataError("export_heatmaps: cannot write " + csv_path.string());
    for (std::size_t i = 0; i < rec.rows; ++i) {
      for (std::size_t j = 0; j < rec.cols; ++j) {
        if (j) csv << ',';
        csv << format_float(rec.weight(i, j));
      }
      csv << '\n';
    }

    float max_w = 0;
    for (float w : rec.weights) max_w = std::max(max_w, w);
    const auto pgm_path = out_dir / (base + ".pgm");
    std::ofstream pgm(pgm_path, std::ios::binary);
    if (!pgm) throw DataError("export_heatmaps: cannot write " + pgm_path.string());
    pgm << "P5\n" << rec.cols << ' ' << rec.rows << "\n255\n";
    for (float w : rec.weights) {
      const int value = max_w > 0 ? static_cast<int>(std::lround(255.0 * w / max_w)) : 0;
      pgm.put(static_cast<char>(std::clamp(value, 0, 255)));
    }
  }
}

}  // namespace mstx
