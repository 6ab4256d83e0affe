#include "mstx/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "mstx/ops.hpp"
#include "mstx/tape.hpp"

namespace mstx {

std::string format_float(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

Trainer::Trainer(const ModelConfig& config, const EncoderTopology& topology,
                 const TokenizedCorpus& corpus, const TrainConfig& train, std::uint64_t seed)
    : config_(config),
      train_(train),
      corpus_(&corpus),
      model_(Seq2Seq<float>::build(config, topology, seed)),
      adam_(AdamState(model_.parameters())),
      rng_(Rng::mix(seed, 0x647270)),  // dropout stream, separate from init
      seed_(seed) {
  train_.validate();
  steps_per_epoch_ = static_cast<std::int64_t>(
      make_batches(corpus, train_.batch_size, config_.max_len, Rng::mix(seed_, 0)).batches.size());
  if (steps_per_epoch_ == 0) {
    throw DataError("train: no usable pairs (all filtered by max_len or empty corpus)");
  }
}

std::int64_t Trainer::planned_steps() const {
  const std::int64_t by_epochs =
      train_.epochs >= 1 ? static_cast<std::int64_t>(train_.epochs) * steps_per_epoch_ : 0;
  if (train_.max_steps > 0 && (by_epochs == 0 || train_.max_steps < by_epochs)) {
    return train_.max_steps;
  }
  return by_epochs;
}

const Batch& Trainer::current_batch() {
  const std::int64_t epoch = step_ / steps_per_epoch_;
  if (epoch != loaded_epoch_) {
    epoch_batches_ = make_batches(*corpus_, train_.batch_size, config_.max_len,
                                  Rng::mix(seed_, static_cast<std::uint64_t>(epoch)))
                         .batches;
    loaded_epoch_ = epoch;
  }
  return epoch_batches_[static_cast<std::size_t>(step_ % steps_per_epoch_)];
}

StepRecord Trainer::step() {
  const Batch& batch = current_batch();
  const std::int64_t step_number = step_ + 1;
  const double lr = lr_schedule(step_number, config_.d_model, train_.warmup_steps);

  RunContext<float> ctx;
  ctx.train = true;
  ctx.dropout_rate = config_.dropout;
  ctx.rng = &rng_;

  Tape<float> tape;
  Tape<float>::Scope scope(tape);
  Tensor<float> logits =
      model_.forward(batch.src, batch.size, batch.src_len, batch.tgt_in, batch.tgt_len, ctx);
  Tensor<float> loss = masked_cross_entropy(logits, batch.tgt_out, batch.tgt_pad);
  const double loss_value = static_cast<double>(loss.item());
  if (!std::isfinite(loss_value)) {
    throw NumericError("train: loss diverged at step " + std::to_string(step_number));
  }
  tape.backward(loss);
  adam_step(model_.parameters(), adam_, lr);
  model_.zero_grads();

  step_ = step_number;
  return StepRecord{step_number, loss_value, lr};
}

void Trainer::save(const std::filesystem::path& path) const {
  save_checkpoint(path, model_.parameters(), adam_, rng_.serialize(), step_);
}

void Trainer::load(const std::filesystem::path& path) {
  LoadedCheckpointMeta meta = load_checkpoint(path, model_.parameters(), adam_);
  rng_.restore(meta.rng_state);
  step_ = meta.step;
  loaded_epoch_ = -1;  // repositions the batch stream on the next step
}

ExperimentResult run_experiment(const ModelConfig& config, const EncoderTopology& topology,
                                const TokenizedCorpus& corpus, const TrainConfig& train,
                                const std::filesystem::path& out_dir) {
  train.validate();
  std::filesystem::create_directories(out_dir);

  ExperimentResult result;
  result.out_dir = out_dir;

  for (std::uint64_t seed : train.seeds) {
    SeedRun run;
    run.seed = seed;
    run.status = "ok";
    Trainer trainer(config, topology, corpus, train, seed);

    const auto curve_path = out_dir / ("curve_seed" + std::to_string(seed) + ".csv");
    std::ofstream curve(curve_path, std::ios::binary);
    if (!curve) throw DataError("train: cannot write " + curve_path.string());
    curve << "step,seed,loss,lr\n";

    while (!trainer.done()) {
      try {
        StepRecord rec = trainer.step();
        run.steps.push_back(rec);
        curve << rec.step << ',' << seed << ',' << format_float(rec.loss) << ','
              << format_float(rec.lr) << '\n';
        if (train.checkpoint_every > 0 && rec.step % train.checkpoint_every == 0 &&
            !trainer.done()) {
          trainer.save(out_dir /
                       ("seed" + std::to_string(seed) + "_step" + std::to_string(rec.step) +
                        ".ckpt"));
        }
      } catch (const NumericError&) {
        run.status = "diverged";
        break;
      }
    }

    run.checkpoint = out_dir / ("seed" + std::to_string(seed) + ".ckpt");
    trainer.save(run.checkpoint);
    result.runs.push_back(std::move(run));
  }

  // Seed-averaged curve over the steps every surviving seed reached.
  const auto mean_path = out_dir / "curve_mean.csv";
  std::ofstream mean(mean_path, std::ios::binary);
  if (!mean) throw DataError("train: cannot write " + mean_path.string());
  mean << "step,mean_loss\n";
  std::size_t longest = 0;
  for (const auto& run : result.runs) longest = std::max(longest, run.steps.size());
  for (std::size_t i = 0; i < longest; ++i) {
    double sum = 0;
    int n = 0;
    std::int64_t step = 0;
    for (const auto& run : result.runs) {
      if (i < run.steps.size()) {
        sum += run.steps[i].loss;
        step = run.steps[i].step;
        ++n;
      }
    }
    if (n > 0) mean << step << ',' << format_float(sum / n) << '\n';
  }
  return result;
}

}  // namespace mstx
