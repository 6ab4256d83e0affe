#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mstx/checkpoint.hpp"
#include "mstx/corpus.hpp"
#include "mstx/model.hpp"
#include "mstx/train.hpp"

namespace mstx {

struct TrainConfig {
  int epochs = 1;
  int warmup_steps = 4000;
  int batch_size = 64;
  std::vector<std::uint64_t> seeds{1};
  int checkpoint_every = 0;  // extra checkpoints every N steps; 0 = end only
  int max_steps = 0;         // hard cap; 0 = epochs decide

  void validate() const {
    if (warmup_steps < 1) throw ConfigError("train: warmup_steps must be >= 1");
    if (seeds.empty()) throw ConfigError("train: at least one seed required");
    if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (epochs < 1 && max_steps < 1) throw ConfigError("train: epochs or max_steps required");
  }
};

struct StepRecord {
  std::int64_t step = 0;
  double loss = 0;
  double lr = 0;
};

// One seed's optimization loop. Steps cycle through epochs whose batch order
// derives from (seed, epoch), so a checkpoint restored mid-run resumes the
// exact batch and dropout stream: training 10 steps, saving, loading and
// training 10 more matches 20 uninterrupted steps bit for bit.
class Trainer {
 public:
  Trainer(const ModelConfig& config, const EncoderTopology& topology,
          const TokenizedCorpus& corpus, const TrainConfig& train, std::uint64_t seed);

  StepRecord step();
  std::int64_t current_step() const { return step_; }
  std::int64_t steps_per_epoch() const { return steps_per_epoch_; }
  // Steps implied by the configured epochs (or max_steps when set).
  std::int64_t planned_steps() const;
  bool done() const { return step_ >= planned_steps(); }

  Seq2Seq<float>& model() { return model_; }
  const Seq2Seq<float>& model() const { return model_; }
  std::uint64_t seed() const { return seed_; }

  void save(const std::filesystem::path& path) const;
  void load(const std::filesystem::path& path);

 private:
  const Batch& current_batch();

  ModelConfig config_;
  TrainConfig train_;
  const TokenizedCorpus* corpus_;
  Seq2Seq<float> model_;
  AdamState adam_;
  Rng rng_;  // dropout stream; persisted in checkpoints
  std::uint64_t seed_;
  std::int64_t step_ = 0;
  std::int64_t steps_per_epoch_ = 0;
  std::int64_t loaded_epoch_ = -1;
  std::vector<Batch> epoch_batches_;
};

struct SeedRun {
  std::uint64_t seed = 0;
  std::vector<StepRecord> steps;
  std::string status;  // "ok" or "diverged"
  std::filesystem::path checkpoint;
};

struct ExperimentResult {
  std::vector<SeedRun> runs;
  std::filesystem::path out_dir;
};

// The multi-seed protocol: trains one model per seed on the same data,
// writes per-seed loss curves ("step,seed,loss,lr"), the seed-averaged curve
// ("step,mean_loss") and one checkpoint per seed. A diverged seed is
// recorded and the remaining seeds still run.
ExperimentResult run_experiment(const ModelConfig& config, const EncoderTopology& topology,
                                const TokenizedCorpus& corpus, const TrainConfig& train,
                                const std::filesystem::path& out_dir);

// "%.9g" formatting shared by every CSV writer, so identical runs produce
// byte-identical files.
std::string format_float(double v);

}  // namespace mstx
