#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>

#include "mstx/checkpoint.hpp"
#include "mstx/trainer.hpp"
#include "testutil.hpp"

using namespace mstx;

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.d_model = 8;
  c.d_ff = 16;
  c.heads = 2;
  c.dropout = 0.1f;
  c.max_len = 16;
  c.src_vocab = 16;
  c.tgt_vocab = 16;
  return c;
}

TokenizedCorpus tiny_corpus(std::size_t n = 40) {
  TokenizedCorpus c;
  Rng rng(77);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::int32_t> ids;
    const std::size_t len = 2 + rng.uniform_int(4);
    for (std::size_t j = 0; j < len; ++j) {
      ids.push_back(static_cast<std::int32_t>(4 + rng.uniform_int(10)));
    }
    c.source.push_back(ids);
    c.target.push_back(ids);
  }
  return c;
}

}  // namespace

TEST_CASE("learning rate schedule peaks exactly at warmup") {
  // At step == warmup both min() arguments equal warmup^(-0.5).
  const double peak = lr_schedule(4000, 128, 4000);
  CHECK(std::abs(peak - std::pow(128.0, -0.5) * std::pow(4000.0, -0.5)) < 1e-9);
  CHECK(peak == doctest::Approx(1.3975e-3).epsilon(1e-4));

  CHECK(lr_schedule(1, 128, 4000) < peak);
  CHECK(lr_schedule(3999, 128, 4000) < peak);
  CHECK(lr_schedule(4001, 128, 4000) < peak);
  CHECK_THROWS_AS(lr_schedule(0, 128, 4000), ConfigError);

  // Monotone up on [1, warmup], monotone down past it.
  for (int s = 1; s < 200; ++s) CHECK(lr_schedule(s, 64, 200) < lr_schedule(s + 1, 64, 200));
  for (int s = 200; s < 400; ++s) CHECK(lr_schedule(s, 64, 200) > lr_schedule(s + 1, 64, 200));
}

TEST_CASE("uniform logits give loss ln(V)") {
  const std::size_t vocab = 11;
  TensorF logits = TensorF::zeros({1, 3, vocab});
  std::vector<std::int32_t> gold{4, 5, 6};
  std::vector<std::uint8_t> pad{0, 0, 0};
  CHECK(masked_cross_entropy(logits, gold, pad).item() ==
        doctest::Approx(std::log(static_cast<double>(vocab))));
}

TEST_CASE("loss vanishes as the correct logit's margin grows") {
  std::vector<std::int32_t> gold{2};
  std::vector<std::uint8_t> pad{0};
  double previous = 100;
  for (float margin : {1.0f, 4.0f, 16.0f, 64.0f}) {
    TensorF logits = TensorF::zeros({1, 1, 4});
    logits.mutable_value()[2] = margin;
    const double loss = masked_cross_entropy(logits, gold, pad).item();
    CHECK(loss < previous);
    previous = loss;
  }
  CHECK(previous < 1e-8);
}

TEST_CASE("pad-only positions leave the loss unchanged; all-pad is an error") {
  Rng rng(5);
  TensorF logits = testutil::random_tensor<float>({1, 2, 6}, rng);
  std::vector<std::int32_t> gold{4, 5};
  std::vector<std::uint8_t> pad{0, 0};
  const float base = masked_cross_entropy(logits, gold, pad).item();

  std::vector<float> padded(logits.value().begin(), logits.value().end());
  for (int i = 0; i < 6; ++i) padded.push_back(rng.uniform(-3, 3));
  TensorF logits2 = TensorF::from({1, 3, 6}, padded);
  std::vector<std::int32_t> gold2{4, 5, 1};
  std::vector<std::uint8_t> pad2{0, 0, 1};
  CHECK(masked_cross_entropy(logits2, gold2, pad2).item() == base);

  std::vector<std::uint8_t> all_pad{1, 1, 1};
  CHECK_THROWS_AS(masked_cross_entropy(logits2, gold2, all_pad), DataError);
}

TEST_CASE("adam: zero gradient holds parameters and decays moments") {
  std::vector<NamedTensor<float>> params{{"w", TensorF::from({2}, {1.0f, -2.0f}, true)}};
  AdamState state(params);

  // One real step to charge the moments.
  params[0].second.grad_accumulator()[0] = 0.5f;
  params[0].second.grad_accumulator()[1] = -0.25f;
  adam_step(params, state, 0.01);
  const float m_after = state.first_moments()[0][0];
  const float v_after = state.second_moments()[0][0];
  params[0].second.drop_grad();
  const std::vector<float> held(params[0].second.value().begin(),
                                params[0].second.value().end());

  adam_step(params, state, 0.01);  // no gradient at all
  CHECK(params[0].second.value()[0] != held[0]);  // moments still push the value
  CHECK(state.first_moments()[0][0] == doctest::Approx(m_after * 0.9f));
  CHECK(state.second_moments()[0][0] == doctest::Approx(v_after * 0.98f));
}

TEST_CASE("adam: the first update moves each weight by about lr against the gradient") {
  std::vector<NamedTensor<float>> params{{"w", TensorF::from({3}, {0.0f, 0.0f, 0.0f}, true)}};
  AdamState state(params);
  auto g = params[0].second.grad_accumulator();
  g[0] = 0.7f;
  g[1] = -1.3f;
  g[2] = 1e-3f;
  adam_step(params, state, 0.01);
  // Bias-corrected m_hat / (sqrt(v_hat) + eps) ~= sign(g) on the first step.
  CHECK(params[0].second.value()[0] == doctest::Approx(-0.01).epsilon(1e-3));
  CHECK(params[0].second.value()[1] == doctest::Approx(0.01).epsilon(1e-3));
  CHECK(params[0].second.value()[2] == doctest::Approx(-0.01).epsilon(1e-3));
}

TEST_CASE("adam is deterministic and rejects non-finite gradients") {
  auto run = [] {
    std::vector<NamedTensor<float>> params{{"w", TensorF::from({2}, {0.3f, -0.4f}, true)}};
    AdamState state(params);
    auto g = params[0].second.grad_accumulator();
    g[0] = 0.11f;
    g[1] = -0.07f;
    adam_step(params, state, 0.02);
    return std::vector<float>(params[0].second.value().begin(),
                              params[0].second.value().end());
  };
  CHECK(run() == run());

  std::vector<NamedTensor<float>> params{{"bad.weight", TensorF::from({1}, {1.0f}, true)}};
  AdamState state(params);
  params[0].second.grad_accumulator()[0] = std::numeric_limits<float>::quiet_NaN();
  try {
    adam_step(params, state, 0.01);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("bad.weight") != std::string::npos);
  }
}

TEST_CASE("one step on a frozen batch reduces the loss for nearly all seeds") {
  // 8 pairs at batch 8: every step sees the same frozen batch, and with
  // dropout off the loss sequence is deterministic.
  TokenizedCorpus corpus = tiny_corpus(8);
  TrainConfig train;
  train.epochs = 4;
  train.batch_size = 8;
  train.warmup_steps = 4000;

  int improved = 0;
  const int trials = 20;
  for (int seed = 1; seed <= trials; ++seed) {
    ModelConfig config = tiny_config();
    config.dropout = 0.0f;
    Trainer trainer(config, EncoderTopology{2, 1, true}, corpus, train, seed);
    const double before = trainer.step().loss;
    const double after = trainer.step().loss;
    if (after < before) ++improved;
  }
  CHECK(improved >= trials * 95 / 100);
}

TEST_CASE("experiment runner writes per-seed and averaged curves") {
  auto dir = testutil::temp_dir("experiment");
  TokenizedCorpus corpus = tiny_corpus(24);
  TrainConfig train;
  train.epochs = 2;
  train.batch_size = 8;
  train.warmup_steps = 100;
  train.seeds = {1, 2, 3};

  ExperimentResult result =
      run_experiment(tiny_config(), EncoderTopology{2, 1, true}, corpus, train, dir);
  REQUIRE(result.runs.size() == 3);
  for (const auto& run : result.runs) {
    CHECK(run.status == "ok");
    CHECK(run.steps.size() == 6);  // 24 pairs / 8 per batch * 2 epochs
    CHECK(std::filesystem::exists(run.checkpoint));
  }
  const std::string seed1 = testutil::read_file(dir / "curve_seed1.csv");
  CHECK(seed1.rfind("step,seed,loss,lr\n", 0) == 0);
  const std::string mean = testutil::read_file(dir / "curve_mean.csv");
  CHECK(mean.rfind("step,mean_loss\n", 0) == 0);
  CHECK(std::count(mean.begin(), mean.end(), '\n') == 7);  // header + 6 steps
}

TEST_CASE("a single seed's averaged curve equals its own curve") {
  auto dir = testutil::temp_dir("experiment1");
  TokenizedCorpus corpus = tiny_corpus(16);
  TrainConfig train;
  train.epochs = 1;
  train.batch_size = 8;
  train.warmup_steps = 100;
  train.seeds = {9};
  ExperimentResult result =
      run_experiment(tiny_config(), EncoderTopology{1, 2, false}, corpus, train, dir);
  REQUIRE(result.runs.size() == 1);
  for (const auto& rec : result.runs[0].steps) {
    (void)rec;
  }
  const std::string mean = testutil::read_file(dir / "curve_mean.csv");
  std::istringstream in(mean);
  std::string line;
  std::getline(in, line);
  std::size_t i = 0;
  while (std::getline(in, line)) {
    const auto comma = line.find(',');
    CHECK(line.substr(comma + 1) == format_float(result.runs[0].steps[i].loss));
    ++i;
  }
  CHECK(i == result.runs[0].steps.size());
}

TEST_CASE("checkpoints round-trip byte for byte") {
  auto dir = testutil::temp_dir("ckpt");
  TokenizedCorpus corpus = tiny_corpus(16);
  TrainConfig train;
  train.epochs = 4;
  train.batch_size = 8;
  train.warmup_steps = 50;

  Trainer t(tiny_config(), EncoderTopology{2, 1, true}, corpus, train, 5);
  for (int i = 0; i < 3; ++i) t.step();
  t.save(dir / "a.ckpt");

  Trainer u(tiny_config(), EncoderTopology{2, 1, true}, corpus, train, 999);
  u.load(dir / "a.ckpt");
  u.save(dir / "b.ckpt");
  CHECK(testutil::read_file(dir / "a.ckpt") == testutil::read_file(dir / "b.ckpt"));
}

TEST_CASE("training resumes bitwise after save/load") {
  TokenizedCorpus corpus = tiny_corpus(32);
  TrainConfig train;
  train.epochs = 10;
  train.batch_size = 8;
  train.warmup_steps = 50;
  auto dir = testutil::temp_dir("resume");

  Trainer straight(tiny_config(), EncoderTopology{2, 1, true}, corpus, train, 3);
  std::vector<double> wanted;
  for (int i = 0; i < 20; ++i) wanted.push_back(straight.step().loss);

  Trainer first(tiny_config(), EncoderTopology{2, 1, true}, corpus, train, 3);
  std::vector<double> seen;
  for (int i = 0; i < 10; ++i) seen.push_back(first.step().loss);
  first.save(dir / "mid.ckpt");

  Trainer second(tiny_config(), EncoderTopology{2, 1, true}, corpus, train, 3);
  second.load(dir / "mid.ckpt");
  for (int i = 0; i < 10; ++i) seen.push_back(second.step().loss);

  REQUIRE(seen.size() == wanted.size());
  for (std::size_t i = 0; i < seen.size(); ++i) CHECK(seen[i] == wanted[i]);
}

TEST_CASE("checkpoint errors: magic, truncation, topology mismatch") {
  auto dir = testutil::temp_dir("ckpt_err");
  TokenizedCorpus corpus = tiny_corpus(8);
  TrainConfig train;
  train.epochs = 1;
  train.batch_size = 8;
  train.warmup_steps = 50;

  Trainer t(tiny_config(), EncoderTopology{2, 1, true}, corpus, train, 5);
  t.step();
  t.save(dir / "good.ckpt");

  // Corrupt magic.
  const std::string good = testutil::read_file(dir / "good.ckpt");
  std::string bytes = good;
  bytes[0] = 'X';
  testutil::write_file(dir / "badmagic.ckpt", bytes);
  Trainer m(tiny_config(), EncoderTopology{2, 1, true}, corpus, train, 5);
  try {
    m.load(dir / "badmagic.ckpt");
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("magic") != std::string::npos);
  }

  // Truncated: cut inside the trailing rng/step section.
  testutil::write_file(dir / "short.ckpt", good.substr(0, good.size() - 12));
  try {
    m.load(dir / "short.ckpt");
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("truncated") != std::string::npos);
  }

  // Mismatched topology names the offending tensor.
  Trainer other(tiny_config(), EncoderTopology{1, 2, false}, corpus, train, 5);
  try {
    other.load(dir / "good.ckpt");
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("encoder.stream") != std::string::npos);
  }
}

TEST_CASE("a trainer surfaces non-finite losses as numeric errors") {
  TokenizedCorpus corpus = tiny_corpus(8);
  TrainConfig train;
  train.epochs = 1;
  train.batch_size = 8;
  train.warmup_steps = 50;
  Trainer t(tiny_config(), EncoderTopology{1, 1, false}, corpus, train, 1);
  for (auto& [name, tensor] : t.model().parameters()) {
    if (name == "src_embedding") {
      tensor.mutable_value()[40] = std::numeric_limits<float>::infinity();
    }
  }
  CHECK_THROWS_AS(t.step(), NumericError);
}
