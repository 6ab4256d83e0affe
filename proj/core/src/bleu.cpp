#include "mstx/bleu.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "mstx/error.hpp"

namespace mstx {

namespace {

using Ngram = std::vector<std::int32_t>;

std::map<Ngram, std::int64_t> ngram_counts(const std::vector<std::int32_t>& tokens,
                                           std::size_t n) {
  std::map<Ngram, std::int64_t> counts;
  if (tokens.size() < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    ++counts[Ngram(tokens.begin() + i, tokens.begin() + i + n)];
  }
  return counts;
}

}  // namespace

double bleu4(std::span<const std::vector<std::int32_t>> hypotheses,
             std::span<const std::vector<std::int32_t>> references,
             const BleuOptions& options) {
  if (hypotheses.size() != references.size()) {
    throw DataError("bleu: " + std::to_string(hypotheses.size()) + " hypotheses vs " +
                    std::to_string(references.size()) + " references");
  }
  if (hypotheses.empty()) throw DataError("bleu: empty corpus");

  std::int64_t hyp_len = 0, ref_len = 0;
  std::int64_t matches[4] = {0, 0, 0, 0};
  std::int64_t totals[4] = {0, 0, 0, 0};

  for (std::size_t i = 0; i < hypotheses.size(); ++i) {
    hyp_len += static_cast<std::int64_t>(hypotheses[i].size());
    ref_len += static_cast<std::int64_t>(references[i].size());
    for (std::size_t n = 1; n <= 4; ++n) {
      const auto hyp_counts = ngram_counts(hypotheses[i], n);
      const auto ref_counts = ngram_counts(references[i], n);
      for (const auto& [gram, count] : hyp_counts) {
        totals[n - 1] += count;
        auto it = ref_counts.find(gram);
        if (it != ref_counts.end()) matches[n - 1] += std::min(count, it->second);
      }
    }
  }

  if (hyp_len == 0) return 0.0;

  double log_precision_sum = 0;
  for (int n = 0; n < 4; ++n) {
    double p;
    if (totals[n] == 0) {
      p = 1.0;  // no n-grams of this order exist to be wrong
    } else if (matches[n] == 0) {
      if (!options.smooth || n == 0) return 0.0;
      p = 1.0 / static_cast<double>(totals[n] + 1);
    } else {
      p = static_cast<double>(matches[n]) / static_cast<double>(totals[n]);
    }
    log_precision_sum += std::log(p);
  }

  const double brevity =
      hyp_len < ref_len
          ? std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len))
          : 1.0;
  return 100.0 * brevity * std::exp(log_precision_sum / 4.0);
}

}  // namespace mstx
