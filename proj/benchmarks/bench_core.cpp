#include <benchmark/benchmark.h>

#include "mstx/attn_lab.hpp"
#include "mstx/evaluate.hpp"
#include "mstx/trainer.hpp"

using namespace mstx;

namespace {

TensorF random_tensor(Shape shape, Rng& rng) {
  TensorF t = TensorF::zeros(std::move(shape));
  for (auto& v : t.mutable_value()) v = static_cast<float>(rng.uniform(-1, 1));
  return t;
}

TokenizedCorpus synthetic_corpus(std::size_t pairs, std::uint64_t seed) {
  TokenizedCorpus c;
  Rng rng(seed);
  for (std::size_t i = 0; i < pairs; ++i) {
    std::vector<std::int32_t> ids;
    const std::size_t len = 6 + rng.uniform_int(12);
    for (std::size_t j = 0; j < len; ++j) {
      ids.push_back(static_cast<std::int32_t>(4 + rng.uniform_int(24)));
    }
    c.source.push_back(ids);
    c.target.push_back(ids);
  }
  return c;
}

ModelConfig desk_config(int vocab) {
  ModelConfig c;
  c.d_model = 64;
  c.d_ff = 256;
  c.heads = 4;
  c.dropout = 0.1f;
  c.max_len = 64;
  c.src_vocab = vocab;
  c.tgt_vocab = vocab;
  return c;
}

}  // namespace

static void BM_Matmul(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  TensorF a = random_tensor({n, n}, rng);
  TensorF b = random_tensor({n, n}, rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(ops::matmul(a, b));
  }
  state.SetItemsProcessed(state.iterations() * 2 * n * n * n);
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(128)->Arg(256);

static void BM_EncoderLayerForward(benchmark::State& state) {
  auto model = Seq2Seq<float>::build(desk_config(64), EncoderTopology{2, 1, true}, 1);
  Rng rng(2);
  TensorF x = random_tensor({64, 20, 64}, rng);
  RunContext<float> ctx;
  for (auto _ : state) {
    benchmark::DoNotOptimize(model.encoder().forward(x, nullptr, ctx));
  }
}
BENCHMARK(BM_EncoderLayerForward);

static void BM_TrainStep(benchmark::State& state) {
  TokenizedCorpus corpus = synthetic_corpus(256, 3);
  TrainConfig train;
  train.epochs = 1000000;
  train.batch_size = 64;
  train.warmup_steps = 400;
  Trainer trainer(desk_config(32), EncoderTopology{2, 1, true}, corpus, train, 1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(trainer.step());
  }
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

static void BM_GreedyDecodeBatch(benchmark::State& state) {
  auto model = Seq2Seq<float>::build(desk_config(32), EncoderTopology{2, 1, true}, 1);
  TokenizedCorpus corpus = synthetic_corpus(64, 4);
  std::vector<std::vector<std::int32_t>> srcs;
  for (auto ids : corpus.source) {
    ids.push_back(kEosId);
    srcs.push_back(std::move(ids));
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(greedy_decode_batch(model, srcs, 40));
  }
}
BENCHMARK(BM_GreedyDecodeBatch)->Unit(benchmark::kMillisecond);

static void BM_Bleu(benchmark::State& state) {
  Rng rng(5);
  std::vector<std::vector<std::int32_t>> hyp, ref;
  for (int i = 0; i < 1000; ++i) {
    std::vector<std::int32_t> h, r;
    for (int j = 0; j < 20; ++j) {
      h.push_back(static_cast<std::int32_t>(4 + rng.uniform_int(30)));
      r.push_back(static_cast<std::int32_t>(4 + rng.uniform_int(30)));
    }
    hyp.push_back(h);
    ref.push_back(r);
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(bleu4(hyp, ref));
  }
  state.SetItemsProcessed(state.iterations() * 1000);
}
BENCHMARK(BM_Bleu)->Unit(benchmark::kMillisecond);

static void BM_ClassifyPattern(benchmark::State& state) {
  Rng rng(6);
  const std::size_t n = 24;
  std::vector<float> w(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    double sum = 0;
    for (std::size_t j = 0; j < n; ++j) {
      w[i * n + j] = static_cast<float>(rng.uniform(1e-3, 1.0));
      sum += w[i * n + j];
    }
    for (std::size_t j = 0; j < n; ++j) {
      w[i * n + j] = static_cast<float>(w[i * n + j] / sum);
    }
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(classify_pattern(w, n, n));
  }
}
BENCHMARK(BM_ClassifyPattern);

static void BM_SubwordTrain(benchmark::State& state) {
  Rng rng(7);
  std::vector<std::string> lines;
  for (int i = 0; i < 400; ++i) {
    std::string line;
    for (int w = 0; w < 8; ++w) {
      if (w) line += ' ';
      const int len = 3 + static_cast<int>(rng.uniform_int(6));
      for (int c2 = 0; c2 < len; ++c2) {
        line += static_cast<char>('a' + rng.uniform_int(16));
      }
    }
    lines.push_back(line);
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(Vocab::train_subword(lines, 600));
  }
}
BENCHMARK(BM_SubwordTrain)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
