#include "mstx/evaluate.hpp"

#include <algorithm>
#include <fstream>

#include "mstx/train.hpp"
#include "mstx/trainer.hpp"

namespace mstx {

std::vector<std::int32_t> greedy_decode(const Seq2Seq<float>& model,
                                        std::span<const std::int32_t> src_ids, int max_len,
                                        AttentionTrace* trace) {
  RunContext<float> ctx;  // eval mode: no dropout, nothing recorded
  auto enc = model.encode(src_ids, 1, src_ids.size(), ctx);

  std::vector<std::int32_t> tgt_in{kBosId};
  std::vector<std::int32_t> produced;
  while (static_cast<int>(tgt_in.size()) < max_len) {
    Tensor<float> logits =
        model.decode(enc.detail.z_out, enc.pad_mask, tgt_in, 1, tgt_in.size(), ctx);
    const std::size_t vocab = logits.dim(2);
    const auto v = logits.value();
    const float* row = v.data() + (tgt_in.size() - 1) * vocab;
    std::size_t best = 0;
    for (std::size_t j = 1; j < vocab; ++j) {
      if (row[j] > row[best]) best = j;
    }
    const auto token = static_cast<std::int32_t>(best);
    if (token == kEosId) break;
    produced.push_back(token);
    tgt_in.push_back(token);
  }

  if (trace != nullptr) {
    // One teacher-forced pass over the finished hypothesis so the recorded
    // matrices cover full sequences.
    ctx.trace = trace;
    (void)model.forward(src_ids, 1, src_ids.size(), tgt_in, tgt_in.size(), ctx);
    ctx.trace = nullptr;
  }
  return produced;
}

std::vector<std::vector<std::int32_t>> greedy_decode_batch(
    const Seq2Seq<float>& model, std::span<const std::vector<std::int32_t>> src_rows,
    int max_len) {
  const std::size_t rows = src_rows.size();
  if (rows == 0) return {};
  std::size_t src_len = 1;
  for (const auto& r : src_rows) src_len = std::max(src_len, r.size());

  std::vector<std::int32_t> src(rows * src_len, kPadId);
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy(src_rows[r].begin(), src_rows[r].end(), src.begin() + r * src_len);
  }

  RunContext<float> ctx;
  auto enc = model.encode(src, rows, src_len, ctx);

  std::vector<std::vector<std::int32_t>> produced(rows);
  std::vector<std::int32_t> tgt_in(rows, kBosId);  // [rows, t], grows each step
  std::vector<bool> finished(rows, false);
  std::size_t live = rows;
  std::size_t t = 1;
  while (live > 0 && static_cast<int>(t) < max_len) {
    Tensor<float> logits = model.decode(enc.detail.z_out, enc.pad_mask, tgt_in, rows, t, ctx);
    const std::size_t vocab = logits.dim(2);
    const auto v = logits.value();
    std::vector<std::int32_t> next(rows, kPadId);
    for (std::size_t r = 0; r < rows; ++r) {
      if (finished[r]) continue;
      const float* row = v.data() + (r * t + (t - 1)) * vocab;
      std::size_t best = 0;
      for (std::size_t j = 1; j < vocab; ++j) {
        if (row[j] > row[best]) best = j;
      }
      const auto token = static_cast<std::int32_t>(best);
      if (token == kEosId) {
        finished[r] = true;
        --live;
      } else {
        produced[r].push_back(token);
        next[r] = token;
      }
    }
    // Re-pack [rows, t+1]; finished rows grow with PAD, which later steps
    // mask out of self-attention.
    std::vector<std::int32_t> grown(rows * (t + 1), kPadId);
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy(tgt_in.begin() + r * t, tgt_in.begin() + (r + 1) * t, grown.begin() + r * (t + 1));
      grown[r * (t + 1) + t] = next[r];
    }
    tgt_in = std::move(grown);
    ++t;
  }
  return produced;
}

EvalRow evaluate_model(const Seq2Seq<float>& model, const TokenizedCorpus& test,
                       std::size_t batch_size) {
  if (test.size() == 0) throw DataError("evaluate: empty test corpus");

  // Teacher-forced accuracy over deterministic batches.
  RunContext<float> ctx;
  double hit_weighted = 0;
  std::size_t live_total = 0;
  BatchPlan plan = make_batches(test, batch_size, model.config().max_len, 0);
  for (const Batch& b : plan.batches) {
    Tensor<float> logits = model.forward(b.src, b.size, b.src_len, b.tgt_in, b.tgt_len, ctx);
    std::size_t live = 0;
    for (auto p : b.tgt_pad) {
      if (!p) ++live;
    }
    hit_weighted += token_accuracy_from_logits(logits, b.tgt_out, b.tgt_pad) *
                    static_cast<double>(live);
    live_total += live;
  }

  // Greedy-decoding BLEU against the raw target token sequences, in batches.
  // Hypotheses are capped at twice the longest source plus a margin; a model
  // that has not learned to stop would otherwise pad every batch to max_len.
  std::vector<std::vector<std::int32_t>> hyps, refs;
  hyps.reserve(test.size());
  refs.reserve(test.size());
  std::vector<std::vector<std::int32_t>> pending;
  auto flush = [&] {
    if (pending.empty()) return;
    std::size_t longest = 0;
    for (const auto& s : pending) longest = std::max(longest, s.size());
    const int cap = std::min<int>(model.config().max_len, static_cast<int>(2 * longest + 5));
    auto decoded = greedy_decode_batch(model, pending, cap);
    for (auto& hyp : decoded) hyps.push_back(std::move(hyp));
    pending.clear();
  };
  for (std::size_t i = 0; i < test.size(); ++i) {
    std::vector<std::int32_t> src = test.source[i];
    src.push_back(kEosId);
    if (src.size() > static_cast<std::size_t>(model.config().max_len)) continue;
    pending.push_back(std::move(src));
    refs.push_back(test.target[i]);
    if (pending.size() == batch_size) flush();
  }
  flush();

  EvalRow row;
  row.token_accuracy = live_total == 0 ? 0.0 : hit_weighted / static_cast<double>(live_total);
  row.bleu4 = bleu4(hyps, refs);
  return row;
}

namespace {

std::uint64_t seed_from_filename(const std::filesystem::path& path, std::uint64_t fallback) {
  const std::string stem = path.stem().string();
  const std::size_t at = stem.rfind("seed");
  if (at == std::string::npos) return fallback;
  std::uint64_t value = 0;
  bool any = false;
  for (std::size_t i = at + 4; i < stem.size() && stem[i] >= '0' && stem[i] <= '9'; ++i) {
    value = value * 10 + static_cast<std::uint64_t>(stem[i] - '0');
    any = true;
  }
  return any ? value : fallback;
}

}  // namespace

EvalReport evaluate_checkpoints(const ModelConfig& config, const EncoderTopology& topology,
                                std::span<const std::filesystem::path> checkpoints,
                                const TokenizedCorpus& test) {
  if (checkpoints.empty()) throw ConfigError("evaluate: at least one checkpoint required");

  EvalReport report;
  report.sentences = test.size();
  for (std::size_t i = 0; i < checkpoints.size(); ++i) {
    Seq2Seq<float> model = Seq2Seq<float>::build(config, topology, 0);
    AdamState adam(model.parameters());
    load_checkpoint(checkpoints[i], model.parameters(), adam);
    EvalRow row = evaluate_model(model, test);
    row.seed = seed_from_filename(checkpoints[i], i);
    report.rows.push_back(row);
    report.mean_bleu4 += row.bleu4;
    report.mean_token_accuracy += row.token_accuracy;
  }
  report.mean_bleu4 /= static_cast<double>(report.rows.size());
  report.mean_token_accuracy /= static_cast<double>(report.rows.size());
  return report;
}

void write_eval_csv(const EvalReport& report, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("evaluate: cannot write " + path.string());
  out << "seed,bleu4,token_accuracy\n";
  for (const auto& row : report.rows) {
    out << row.seed << ',' << format_float(row.bleu4) << ',' << format_float(row.token_accuracy)
        << '\n';
  }
  out << "mean," << format_float(report.mean_bleu4) << ','
      << format_float(report.mean_token_accuracy) << '\n';
}

}  // namespace mstx
