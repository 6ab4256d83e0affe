// mstx: train, translate, evaluate and analyze multi-stream transformer
// models from the command line.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "mstx/attn_lab.hpp"
#include "mstx/evaluate.hpp"
#include "mstx/gradcheck.hpp"
#include "mstx/ops.hpp"
#include "mstx/trainer.hpp"
#include "runspec.hpp"

namespace fs = std::filesystem;
using namespace mstx;
using cli::KeyValues;
using cli::RunSpec;

namespace {

struct CommonFlags {
  std::string preset;
  std::string config;
  std::int64_t seed = -1;
  std::string out;
  bool record_attention = false;
  int threads = 1;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--preset", flags.preset, "built-in preset (tiny, desk, paper-4layer, paper-6layer)");
  cmd->add_option("--config", flags.config, "config file with dotted key = value lines");
  cmd->add_option("--seed", flags.seed, "override the seed list with a single seed");
  cmd->add_option("--out", flags.out, "override the output directory");
  cmd->add_flag("--record-attention", flags.record_attention,
                "export attention heatmaps where supported");
  cmd->add_option("--threads", flags.threads, "matmul worker threads (default 1)");
}

RunSpec spec_from(const CommonFlags& flags) {
  KeyValues overrides;
  if (flags.seed >= 0) overrides["train.seeds"] = std::to_string(flags.seed);
  if (!flags.out.empty()) overrides["out.dir"] = flags.out;
  RunSpec spec = cli::build_runspec(flags.preset, flags.config, overrides);
  ops::set_threads(flags.threads);
  return spec;
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

Vocab load_or_train_vocab(const fs::path& configured, const std::vector<std::string>* lines,
                          int size, const fs::path& fallback_path) {
  if (!configured.empty() && fs::exists(configured)) return Vocab::load(configured);
  if (lines == nullptr) {
    throw DataError("vocabulary file " +
                    (configured.empty() ? fallback_path : configured).string() +
                    " not found and no corpus available to train one");
  }
  Vocab v = Vocab::train_subword(*lines, static_cast<std::size_t>(size));
  const fs::path target = configured.empty() ? fallback_path : configured;
  fs::create_directories(target.parent_path().empty() ? "." : target.parent_path());
  v.save(target);
  return v;
}

struct PreparedData {
  Vocab src_vocab, tgt_vocab;
  TokenizedCorpus train;
  TokenizedCorpus test;
  bool has_test = false;
};

PreparedData prepare_data(RunSpec& spec, bool need_train) {
  PreparedData data{Vocab::train_subword({"x"}, 6), Vocab::train_subword({"x"}, 6), {}, {}};

  ParallelCorpus train_corpus;
  const bool have_train = !spec.train_src.empty() && !spec.train_tgt.empty();
  if (need_train && !have_train) {
    throw ConfigError("data.train_src and data.train_tgt are required");
  }
  if (have_train) train_corpus = ParallelCorpus::load(spec.train_src, spec.train_tgt);

  fs::create_directories(spec.out_dir);
  data.src_vocab = load_or_train_vocab(spec.src_vocab, have_train ? &train_corpus.source : nullptr,
                                       spec.src_vocab_size, spec.out_dir / "vocab_src.txt");
  data.tgt_vocab = load_or_train_vocab(spec.tgt_vocab, have_train ? &train_corpus.target : nullptr,
                                       spec.tgt_vocab_size, spec.out_dir / "vocab_tgt.txt");
  spec.model.src_vocab = static_cast<int>(data.src_vocab.size());
  spec.model.tgt_vocab = static_cast<int>(data.tgt_vocab.size());

  if (have_train) data.train = encode_corpus(train_corpus, data.src_vocab, data.tgt_vocab);
  if (!spec.test_src.empty() && !spec.test_tgt.empty()) {
    ParallelCorpus test_corpus = ParallelCorpus::load(spec.test_src, spec.test_tgt);
    data.test = encode_corpus(test_corpus, data.src_vocab, data.tgt_vocab);
    data.has_test = true;
  }
  return data;
}

Seq2Seq<float> model_from_checkpoint(const RunSpec& spec, const fs::path& checkpoint) {
  Seq2Seq<float> model = Seq2Seq<float>::build(spec.model, spec.topology, 0);
  AdamState adam(model.parameters());
  load_checkpoint(checkpoint, model.parameters(), adam);
  return model;
}

int cmd_tokenizer_train(const fs::path& input, int vocab_size, const fs::path& out) {
  Vocab v = Vocab::train_subword(read_lines(input), static_cast<std::size_t>(vocab_size));
  v.save(out);
  std::cout << "trained vocabulary of " << v.size() << " tokens -> " << out.string() << "\n";
  return 0;
}

int cmd_train(const CommonFlags& flags) {
  RunSpec spec = spec_from(flags);
  PreparedData data = prepare_data(spec, true);

  ExperimentResult result =
      run_experiment(spec.model, spec.topology, data.train, spec.train, spec.out_dir);
  std::size_t diverged = 0;
  for (const auto& run : result.runs) {
    std::cout << "seed " << run.seed << ": " << run.status << ", " << run.steps.size()
              << " steps";
    if (!run.steps.empty()) {
      std::cout << ", final loss " << format_float(run.steps.back().loss);
    }
    std::cout << ", checkpoint " << run.checkpoint.string() << "\n";
    if (run.status != "ok") ++diverged;
  }

  if (data.has_test) {
    std::vector<fs::path> checkpoints;
    for (const auto& run : result.runs) {
      if (run.status == "ok") checkpoints.push_back(run.checkpoint);
    }
    if (!checkpoints.empty()) {
      EvalReport report =
          evaluate_checkpoints(spec.model, spec.topology, checkpoints, data.test);
      write_eval_csv(report, spec.out_dir / "eval.csv");
      std::cout << "mean BLEU-4 " << format_float(report.mean_bleu4) << ", mean token accuracy "
                << format_float(report.mean_token_accuracy) << "\n";
    }
  }
  if (diverged == result.runs.size()) {
    throw NumericError("train: every seed diverged");
  }
  return 0;
}

int cmd_translate(const CommonFlags& flags, const fs::path& checkpoint, const fs::path& input,
                  const fs::path& output) {
  RunSpec spec = spec_from(flags);
  if (spec.src_vocab.empty() || spec.tgt_vocab.empty()) {
    throw ConfigError("translate: data.src_vocab and data.tgt_vocab files are required");
  }
  Vocab src_vocab = Vocab::load(spec.src_vocab);
  Vocab tgt_vocab = Vocab::load(spec.tgt_vocab);
  spec.model.src_vocab = static_cast<int>(src_vocab.size());
  spec.model.tgt_vocab = static_cast<int>(tgt_vocab.size());
  Seq2Seq<float> model = model_from_checkpoint(spec, checkpoint);

  const std::vector<std::string> lines = read_lines(input);
  std::ofstream out(output, std::ios::binary);
  if (!out) throw DataError("cannot write " + output.string());

  bool traced = false;
  for (const auto& line : lines) {
    std::vector<std::int32_t> src = src_vocab.encode(line);
    src.push_back(kEosId);
    if (src.size() > static_cast<std::size_t>(spec.model.max_len)) {
      out << "\n";  // over-long input: emit an empty line, keep alignment
      continue;
    }
    AttentionTrace trace;
    const bool want_trace = flags.record_attention && !traced;
    const auto hyp = greedy_decode(model, src, spec.model.max_len,
                                   want_trace ? &trace : nullptr);
    if (want_trace) {
      export_heatmaps(trace.records, spec.out_dir / "heatmaps");
      traced = true;
    }
    out << tgt_vocab.decode(hyp) << "\n";
  }
  std::cout << "translated " << lines.size() << " lines -> " << output.string() << "\n";
  return 0;
}

int cmd_evaluate(const CommonFlags& flags, const std::vector<fs::path>& checkpoints) {
  RunSpec spec = spec_from(flags);
  if (spec.test_src.empty() || spec.test_tgt.empty()) {
    throw ConfigError("evaluate: data.test_src and data.test_tgt are required");
  }
  PreparedData data = prepare_data(spec, false);
  if (!data.has_test) throw DataError("evaluate: test corpus missing");

  EvalReport report = evaluate_checkpoints(spec.model, spec.topology, checkpoints, data.test);
  write_eval_csv(report, spec.out_dir / "eval.csv");
  for (const auto& row : report.rows) {
    std::cout << "seed " << row.seed << ": BLEU-4 " << format_float(row.bleu4)
              << ", token accuracy " << format_float(row.token_accuracy) << "\n";
  }
  std::cout << "mean: BLEU-4 " << format_float(report.mean_bleu4) << ", token accuracy "
            << format_float(report.mean_token_accuracy) << "\n";
  return 0;
}

int cmd_gradcheck(const CommonFlags& flags, double eps, double tol) {
  CommonFlags resolved = flags;
  if (resolved.preset.empty() && resolved.config.empty()) resolved.preset = "tiny";
  RunSpec spec = spec_from(resolved);
  const std::uint64_t seed = flags.seed >= 0 ? static_cast<std::uint64_t>(flags.seed) : 7;

  ModelConfig config = spec.model;
  config.dropout = 0.0f;
  config.src_vocab = spec.src_vocab_size;
  config.tgt_vocab = spec.tgt_vocab_size;
  auto model = Seq2Seq<double>::build(config, spec.topology, seed);

  // Fixed-shape probe batch: two rows, source lengths 5/4, target 4/3.
  Rng rng(Rng::mix(seed, 1));
  auto token = [&](int vocab) {
    return static_cast<std::int32_t>(4 + rng.uniform_int(static_cast<std::uint64_t>(vocab - 4)));
  };
  std::vector<std::int32_t> src(2 * 5, kPadId), tgt_in(2 * 4, kPadId), tgt_out(2 * 4, kPadId);
  std::vector<std::uint8_t> pad(2 * 4, 1);
  const int src_lens[2] = {4, 3}, tgt_lens[2] = {3, 2};
  for (int r = 0; r < 2; ++r) {
    for (int j = 0; j < src_lens[r]; ++j) src[r * 5 + j] = token(config.src_vocab);
    src[r * 5 + src_lens[r]] = kEosId;
    tgt_in[r * 4] = kBosId;
    for (int j = 0; j < tgt_lens[r]; ++j) {
      const auto t = token(config.tgt_vocab);
      tgt_in[r * 4 + j + 1] = t;
      tgt_out[r * 4 + j] = t;
    }
    tgt_out[r * 4 + tgt_lens[r]] = kEosId;
    for (int j = 0; j <= tgt_lens[r]; ++j) pad[r * 4 + j] = 0;
  }

  auto loss = [&]() {
    RunContext<double> ctx;
    TensorD logits = model.forward(src, 2, 5, tgt_in, 4, ctx);
    return masked_cross_entropy(logits, tgt_out, pad);
  };
  std::vector<TensorD> params;
  for (auto& [name, t] : model.parameters()) params.push_back(t);
  GradCheckReport<double> report = grad_check_report<double>(loss, params, eps);

  std::cout << "checked " << report.checked_elements << " parameter elements (eps "
            << format_float(eps) << ")\n";
  std::cout << "max relative error: " << format_float(report.max_rel_error) << "\n";
  if (report.max_rel_error >= tol) {
    throw NumericError("gradcheck: max relative error " + format_float(report.max_rel_error) +
                       " exceeds tolerance " + format_float(tol));
  }
  return 0;
}

int cmd_analyze(const CommonFlags& flags, const fs::path& checkpoint, const fs::path& probe) {
  RunSpec spec = spec_from(flags);
  if (spec.src_vocab.empty() || spec.tgt_vocab.empty()) {
    throw ConfigError("analyze: data.src_vocab and data.tgt_vocab files are required");
  }
  Vocab src_vocab = Vocab::load(spec.src_vocab);
  Vocab tgt_vocab = Vocab::load(spec.tgt_vocab);
  spec.model.src_vocab = static_cast<int>(src_vocab.size());
  spec.model.tgt_vocab = static_cast<int>(tgt_vocab.size());
  Seq2Seq<float> model = model_from_checkpoint(spec, checkpoint);

  std::vector<AttentionRecord> records;
  std::size_t skipped = 0;
  int example = 0;
  for (const auto& line : read_lines(probe)) {
    std::vector<std::int32_t> src = src_vocab.encode(line);
    src.push_back(kEosId);
    if (src.size() > static_cast<std::size_t>(spec.model.max_len)) {
      ++skipped;
      continue;
    }
    AttentionTrace trace;
    (void)greedy_decode(model, src, spec.model.max_len, &trace);
    for (auto& rec : trace.records) {
      rec.example = example;
      records.push_back(std::move(rec));
    }
    ++example;
  }
  if (records.empty()) throw DataError("analyze: no usable probe sentences");
  if (skipped > 0) {
    std::cout << "skipped " << skipped << " over-long probe sentences\n";
  }

  fs::create_directories(spec.out_dir);
  const AttentionKind kinds[] = {AttentionKind::EncoderSelf, AttentionKind::DecoderSelf,
                                 AttentionKind::DecoderCross};

  for (auto basis : {HistogramBasis::PerExample, HistogramBasis::MajorityVote}) {
    const fs::path path =
        spec.out_dir /
        (basis == HistogramBasis::PerExample ? "patterns_per_example.csv"
                                             : "patterns_majority.csv");
    std::ofstream out(path, std::ios::binary);
    out << "kind,layer,vertical,diagonal,diagonal_shift_forward,diagonal_shift_backward,"
           "soft_diagonal,heterogeneous\n";
    for (AttentionKind kind : kinds) {
      PatternHistogram hist = tabulate_patterns(records, kind, basis);
      for (const auto& [layer, counts] : hist.counts) {
        out << to_string(kind) << ',' << layer;
        for (auto c : counts) out << ',' << c;
        out << '\n';
      }
    }
  }

  {
    std::ofstream out(spec.out_dir / "norm_correlations.csv", std::ios::binary);
    out << "kind,layer,stream,head,example,correlation\n";
    for (const auto& rec : records) {
      out << to_string(rec.kind) << ',' << rec.layer << ',' << rec.stream << ',' << rec.head
          << ',' << rec.example << ',' << format_float(weighted_norms(rec).correlation) << '\n';
    }
  }

  std::vector<AttentionRecord> first_example;
  for (const auto& rec : records) {
    if (rec.example == 0) first_example.push_back(rec);
  }
  export_heatmaps(first_example, spec.out_dir / "heatmaps");

  PatternHistogram enc =
      tabulate_patterns(records, AttentionKind::EncoderSelf, HistogramBasis::MajorityVote);
  std::cout << "encoder self-attention heads by majority class:\n";
  for (const auto& [layer, counts] : enc.counts) {
    std::cout << "  layer " << layer << ":";
    for (int c = 0; c < kPatternClasses; ++c) {
      std::cout << ' ' << to_string(static_cast<PatternClass>(c)) << '=' << counts[c];
    }
    std::cout << "\n";
  }
  std::cout << "wrote pattern tables, correlations and heatmaps under " << spec.out_dir.string()
            << "\n";
  return 0;
}

int cmd_compare(const CommonFlags& flags, const std::vector<fs::path>& configs) {
  if (configs.empty()) throw ConfigError("compare: at least one --configs file required");

  std::vector<RunSpec> specs;
  for (const auto& path : configs) {
    KeyValues overrides;
    if (flags.seed >= 0) overrides["train.seeds"] = std::to_string(flags.seed);
    if (!flags.out.empty()) overrides["out.dir"] = flags.out;
    specs.push_back(cli::build_runspec(flags.preset, path, overrides));
  }
  ops::set_threads(flags.threads);

  for (const auto& spec : specs) {
    if (spec.train_src != specs[0].train_src || spec.train_tgt != specs[0].train_tgt ||
        spec.test_src != specs[0].test_src || spec.test_tgt != specs[0].test_tgt) {
      throw ConfigError("compare: every configuration must use the same data files");
    }
  }
  if (specs[0].test_src.empty()) {
    throw ConfigError("compare: data.test_src and data.test_tgt are required for the summary");
  }

  // One shared tokenizer pair, one shared seed list; each (model, seed) run
  // then initializes independently from its declared seed.
  RunSpec& base = specs[0];
  PreparedData data = prepare_data(base, true);
  const std::vector<std::uint64_t> seeds = base.train.seeds;
  const fs::path out_root = flags.out.empty() ? base.out_dir : fs::path(flags.out);
  fs::create_directories(out_root);

  std::ofstream merged(out_root / "compare_losses.csv", std::ios::binary);
  merged << "model,step,seed,loss\n";
  std::ofstream summary(out_root / "compare_summary.csv", std::ios::binary);
  summary << "model,mean_bleu4,mean_token_accuracy\n";

  std::cout << "model,mean_bleu4,mean_token_accuracy\n";
  for (auto& spec : specs) {
    spec.model.src_vocab = base.model.src_vocab;
    spec.model.tgt_vocab = base.model.tgt_vocab;
    TrainConfig train = spec.train;
    train.seeds = seeds;
    ExperimentResult result = run_experiment(spec.model, spec.topology, data.train, train,
                                             out_root / spec.model.name);
    std::vector<fs::path> checkpoints;
    for (const auto& run : result.runs) {
      for (const auto& rec : run.steps) {
        merged << spec.model.name << ',' << rec.step << ',' << run.seed << ','
               << format_float(rec.loss) << '\n';
      }
      if (run.status == "ok") checkpoints.push_back(run.checkpoint);
    }
    if (checkpoints.empty()) {
      summary << spec.model.name << ",diverged,diverged\n";
      std::cout << spec.model.name << ",diverged,diverged\n";
      continue;
    }
    EvalReport report = evaluate_checkpoints(spec.model, spec.topology, checkpoints, data.test);
    summary << spec.model.name << ',' << format_float(report.mean_bleu4) << ','
            << format_float(report.mean_token_accuracy) << '\n';
    std::cout << spec.model.name << ',' << format_float(report.mean_bleu4) << ','
              << format_float(report.mean_token_accuracy) << "\n";
  }
  std::cout << "wrote " << (out_root / "compare_losses.csv").string() << " and "
            << (out_root / "compare_summary.csv").string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-stream transformer workbench"};
  app.require_subcommand(1);

  // tokenizer-train
  auto* tok = app.add_subcommand("tokenizer-train", "train a subword vocabulary");
  fs::path tok_input, tok_out;
  int tok_size = 4000;
  tok->add_option("--input", tok_input, "corpus, one sentence per line")->required();
  tok->add_option("--vocab-size", tok_size, "total vocabulary budget");
  tok->add_option("--out", tok_out, "vocabulary file to write")->required();

  // train
  auto* train = app.add_subcommand("train", "train one architecture over its seed list");
  CommonFlags train_flags;
  add_common(train, train_flags);

  // translate
  auto* translate = app.add_subcommand("translate", "greedy-decode a file of sentences");
  CommonFlags translate_flags;
  fs::path tr_ckpt, tr_in, tr_out;
  add_common(translate, translate_flags);
  translate->add_option("--checkpoint", tr_ckpt, "model checkpoint")->required();
  translate->add_option("--input", tr_in, "source sentences")->required();
  translate->add_option("--output", tr_out, "translations to write")->required();

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "BLEU-4 and accuracy over checkpoints");
  CommonFlags eval_flags;
  std::vector<fs::path> eval_ckpts;
  add_common(evaluate, eval_flags);
  evaluate->add_option("--checkpoints", eval_ckpts, "checkpoint files")->required();

  // gradcheck
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient check");
  CommonFlags gc_flags;
  double gc_eps = 1e-5, gc_tol = 1e-5;
  add_common(gradcheck, gc_flags);
  gradcheck->add_option("--eps", gc_eps, "central difference step");
  gradcheck->add_option("--tol", gc_tol, "maximum acceptable relative error");

  // analyze
  auto* analyze = app.add_subcommand("analyze", "attention patterns, norms and heatmaps");
  CommonFlags an_flags;
  fs::path an_ckpt, an_probe;
  add_common(analyze, an_flags);
  analyze->add_option("--checkpoint", an_ckpt, "model checkpoint")->required();
  analyze->add_option("--probe", an_probe, "source sentences to probe")->required();

  // compare
  auto* compare = app.add_subcommand("compare",
                                     "train several architectures on shared data and seeds");
  CommonFlags cmp_flags;
  std::vector<fs::path> cmp_configs;
  add_common(compare, cmp_flags);
  compare->add_option("--configs", cmp_configs, "config file per architecture")->required();

  try {
    app.parse(argc, argv);
    if (tok->parsed()) return cmd_tokenizer_train(tok_input, tok_size, tok_out);
    if (train->parsed()) return cmd_train(train_flags);
    if (translate->parsed()) return cmd_translate(translate_flags, tr_ckpt, tr_in, tr_out);
    if (evaluate->parsed()) return cmd_evaluate(eval_flags, eval_ckpts);
    if (gradcheck->parsed()) return cmd_gradcheck(gc_flags, gc_eps, gc_tol);
    if (analyze->parsed()) return cmd_analyze(an_flags, an_ckpt, an_probe);
    if (compare->parsed()) return cmd_compare(cmp_flags, cmp_configs);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
