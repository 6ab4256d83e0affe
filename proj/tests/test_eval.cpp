#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mstx/evaluate.hpp"
#include "mstx/trainer.hpp"
#include "testutil.hpp"

using namespace mstx;

using Sentences = std::vector<std::vector<std::int32_t>>;

TEST_CASE("perfect hypotheses score 100") {
  Sentences refs{{4, 5, 6, 7, 8}, {9, 10}, {11}};
  CHECK(bleu4(refs, refs) == doctest::Approx(100.0));
}

TEST_CASE("clipping example: 'the the the the' vs 'the cat'") {
  // ids: the=4, cat=5
  Sentences hyp{{4, 4, 4, 4}};
  Sentences ref{{4, 5}};

  BleuOptions unsmoothed;
  unsmoothed.smooth = false;
  CHECK(bleu4(hyp, ref, unsmoothed) == 0.0);

  // Hand oracle: p1 = 1/4 clipped; the zero higher-order precisions take
  // (0+1)/(count+1): p2 = 1/4, p3 = 1/3, p4 = 1/2; brevity penalty 1.
  const double hand =
      100.0 * std::exp((std::log(1.0 / 4) + std::log(1.0 / 4) + std::log(1.0 / 3) +
                        std::log(1.0 / 2)) /
                       4.0);
  CHECK(bleu4(hyp, ref) == doctest::Approx(hand).epsilon(1e-8));
}

TEST_CASE("brevity penalty example: 3-token hypothesis against a 5-token reference") {
  Sentences hyp{{4, 5, 6}};
  Sentences ref{{4, 5, 6, 7, 8}};
  // Every 1..3-gram matches; there are no 4-grams; penalty exp(1 - 5/3).
  const double hand = 100.0 * std::exp(1.0 - 5.0 / 3.0);
  CHECK(bleu4(hyp, ref) == doctest::Approx(hand).epsilon(1e-8));
}

TEST_CASE("corpus BLEU is invariant to sentence order") {
  Rng rng(8);
  Sentences hyp, ref;
  for (int i = 0; i < 12; ++i) {
    std::vector<std::int32_t> h, r;
    const std::size_t n = 3 + rng.uniform_int(6);
    for (std::size_t j = 0; j < n; ++j) {
      h.push_back(static_cast<std::int32_t>(4 + rng.uniform_int(8)));
      r.push_back(static_cast<std::int32_t>(4 + rng.uniform_int(8)));
    }
    hyp.push_back(h);
    ref.push_back(r);
  }
  const double base = bleu4(hyp, ref);
  Sentences hyp2(hyp.rbegin(), hyp.rend());
  Sentences ref2(ref.rbegin(), ref.rend());
  CHECK(bleu4(hyp2, ref2) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("BLEU stays within [0, 100] and self-BLEU is 100") {
  Rng rng(9);
  for (int trial = 0; trial < 25; ++trial) {
    Sentences hyp, ref;
    const int sentences = 1 + rng.uniform_int(5);
    for (int i = 0; i < sentences; ++i) {
      std::vector<std::int32_t> h, r;
      const std::size_t hn = 1 + rng.uniform_int(8);
      const std::size_t rn = 1 + rng.uniform_int(8);
      for (std::size_t j = 0; j < hn; ++j) {
        h.push_back(static_cast<std::int32_t>(4 + rng.uniform_int(5)));
      }
      for (std::size_t j = 0; j < rn; ++j) {
        r.push_back(static_cast<std::int32_t>(4 + rng.uniform_int(5)));
      }
      hyp.push_back(h);
      ref.push_back(r);
    }
    const double score = bleu4(hyp, ref);
    CHECK(score >= 0.0);
    CHECK(score <= 100.0);
    CHECK(bleu4(hyp, hyp) == doctest::Approx(100.0));
  }
}

TEST_CASE("BLEU input validation") {
  Sentences one{{4, 5}};
  Sentences two{{4, 5}, {6}};
  CHECK_THROWS_AS(bleu4(one, two), DataError);
  CHECK_THROWS_AS(bleu4({}, {}), DataError);
}

TEST_CASE("BLEU agrees across decode/re-encode when tokenization round-trips") {
  Vocab v = Vocab::train_subword({"ein kleiner baum", "der baum steht", "ein baum steht da"},
                                 48);
  const std::vector<std::string> hyp_text{"ein baum steht", "der kleiner baum"};
  const std::vector<std::string> ref_text{"ein baum steht da", "der baum"};
  Sentences hyp, ref, hyp_rt;
  for (const auto& s : hyp_text) hyp.push_back(v.encode(s));
  for (const auto& s : ref_text) ref.push_back(v.encode(s));
  for (const auto& ids : hyp) hyp_rt.push_back(v.encode(v.decode(ids)));
  CHECK(bleu4(hyp_rt, ref) == doctest::Approx(bleu4(hyp, ref)).epsilon(1e-12));
}

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.d_model = 8;
  c.d_ff = 16;
  c.heads = 2;
  c.max_len = 16;
  c.src_vocab = 16;
  c.tgt_vocab = 16;
  return c;
}

TokenizedCorpus tiny_corpus(std::size_t n = 12) {
  TokenizedCorpus c;
  Rng rng(17);
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

TEST_CASE("a model whose logits always favor EOS translates to nothing") {
  auto model = Seq2Seq<float>::build(tiny_config(), EncoderTopology{1, 1, false}, 3);
  for (auto& [name, t] : model.parameters()) {
    if (name == "output.b") t.mutable_value()[kEosId] = 100.0f;
  }
  std::vector<std::int32_t> src{4, 5, 6, kEosId};
  CHECK(greedy_decode(model, src, 16).empty());
}

TEST_CASE("greedy decoding is deterministic") {
  auto model = Seq2Seq<float>::build(tiny_config(), EncoderTopology{2, 1, true}, 21);
  std::vector<std::int32_t> src{7, 8, 9, kEosId};
  const auto a = greedy_decode(model, src, 16);
  const auto b = greedy_decode(model, src, 16);
  CHECK(a == b);
  CHECK(a.size() <= 15);  // BOS occupies one slot of max_len
}

TEST_CASE("batched greedy decoding matches single-sentence decoding row by row") {
  auto model = Seq2Seq<float>::build(tiny_config(), EncoderTopology{2, 1, true}, 14);
  Rng rng(6);
  std::vector<std::vector<std::int32_t>> srcs;
  for (int i = 0; i < 7; ++i) {
    std::vector<std::int32_t> s;
    const std::size_t n = 2 + rng.uniform_int(5);
    for (std::size_t j = 0; j < n; ++j) {
      s.push_back(static_cast<std::int32_t>(4 + rng.uniform_int(10)));
    }
    s.push_back(kEosId);
    srcs.push_back(std::move(s));
  }
  const auto batched = greedy_decode_batch(model, srcs, 12);
  REQUIRE(batched.size() == srcs.size());
  for (std::size_t i = 0; i < srcs.size(); ++i) {
    CHECK(batched[i] == greedy_decode(model, srcs[i], 12));
  }
}

TEST_CASE("evaluate_checkpoints reports one row per checkpoint plus the mean") {
  auto dir = testutil::temp_dir("evalckpt");
  TokenizedCorpus corpus = tiny_corpus();
  TrainConfig train;
  train.epochs = 1;
  train.batch_size = 6;
  train.warmup_steps = 50;
  train.seeds = {1, 2, 3};
  ExperimentResult exp =
      run_experiment(tiny_config(), EncoderTopology{2, 1, true}, corpus, train, dir);

  std::vector<std::filesystem::path> paths;
  for (const auto& run : exp.runs) paths.push_back(run.checkpoint);
  EvalReport report = evaluate_checkpoints(tiny_config(), EncoderTopology{2, 1, true}, paths,
                                           corpus);
  REQUIRE(report.rows.size() == 3);
  CHECK(report.rows[0].seed == 1);
  CHECK(report.rows[1].seed == 2);
  double sum = 0;
  for (const auto& row : report.rows) sum += row.bleu4;
  CHECK(report.mean_bleu4 == doctest::Approx(sum / 3));

  // Identical checkpoints give identical rows; a single row is its own mean.
  std::vector<std::filesystem::path> twice{paths[0], paths[0]};
  EvalReport same =
      evaluate_checkpoints(tiny_config(), EncoderTopology{2, 1, true}, twice, corpus);
  CHECK(same.rows[0].bleu4 == same.rows[1].bleu4);
  std::vector<std::filesystem::path> just_one{paths[1]};
  EvalReport single =
      evaluate_checkpoints(tiny_config(), EncoderTopology{2, 1, true}, just_one, corpus);
  CHECK(single.mean_bleu4 == single.rows[0].bleu4);

  // Loading into a mismatched vocabulary is an error.
  ModelConfig bigger = tiny_config();
  bigger.tgt_vocab = 32;
  CHECK_THROWS_AS(
      evaluate_checkpoints(bigger, EncoderTopology{2, 1, true}, just_one, corpus), DataError);

  const auto csv = dir / "eval.csv";
  write_eval_csv(report, csv);
  const std::string text = testutil::read_file(csv);
  CHECK(text.rfind("seed,bleu4,token_accuracy\n", 0) == 0);
  CHECK(text.find("mean,") != std::string::npos);
}
