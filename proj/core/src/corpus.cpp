#include "mstx/corpus.hpp"

#include <algorithm>
#include <fstream>

#include "mstx/error.hpp"
#include "mstx/rng.hpp"

namespace mstx {

namespace {

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("corpus: cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

}  // namespace

ParallelCorpus ParallelCorpus::load(const std::filesystem::path& src_path,
                                    const std::filesystem::path& tgt_path) {
  ParallelCorpus c;
  c.source = read_lines(src_path);
  c.target = read_lines(tgt_path);
  if (c.source.size() != c.target.size()) {
    throw DataError("corpus: line counts differ: " + src_path.string() + " has " +
                    std::to_string(c.source.size()) + ", " + tgt_path.string() + " has " +
                    std::to_string(c.target.size()));
  }
  return c;
}

TokenizedCorpus encode_corpus(const ParallelCorpus& corpus, const Vocab& src_vocab,
                              const Vocab& tgt_vocab) {
  TokenizedCorpus out;
  out.source.reserve(corpus.size());
  out.target.reserve(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    out.source.push_back(src_vocab.encode(corpus.source[i]));
    out.target.push_back(tgt_vocab.encode(corpus.target[i]));
  }
  return out;
}

BatchPlan make_batches(const TokenizedCorpus& corpus, std::size_t batch_size,
                       std::size_t max_len, std::uint64_t shuffle_seed) {
  if (batch_size < 1) throw ConfigError("batches: batch_size must be >= 1");

  BatchPlan plan;
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    // Room for the trailing EOS on the source and BOS/EOS on the target.
    if (corpus.source[i].size() + 1 > max_len || corpus.target[i].size() + 1 > max_len) {
      ++plan.filtered;
      continue;
    }
    order.push_back(i);
  }

  Rng rng(shuffle_seed);
  rng.shuffle(order);

  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t rows = std::min(batch_size, order.size() - start);
    Batch b;
    b.size = rows;
    for (std::size_t r = 0; r < rows; ++r) {
      const auto& src = corpus.source[order[start + r]];
      const auto& tgt = corpus.target[order[start + r]];
      b.src_len = std::max(b.src_len, src.size() + 1);
      b.tgt_len = std::max(b.tgt_len, tgt.size() + 1);
    }
    b.src.assign(rows * b.src_len, kPadId);
    b.tgt_in.assign(rows * b.tgt_len, kPadId);
    b.tgt_out.assign(rows * b.tgt_len, kPadId);
    b.src_pad.assign(rows * b.src_len, 1);
    b.tgt_pad.assign(rows * b.tgt_len, 1);
    for (std::size_t r = 0; r < rows; ++r) {
      const auto& src = corpus.source[order[start + r]];
      const auto& tgt = corpus.target[order[start + r]];
      for (std::size_t j = 0; j < src.size(); ++j) b.src[r * b.src_len + j] = src[j];
      b.src[r * b.src_len + src.size()] = kEosId;
      for (std::size_t j = 0; j <= src.size(); ++j) b.src_pad[r * b.src_len + j] = 0;

      b.tgt_in[r * b.tgt_len] = kBosId;
      for (std::size_t j = 0; j < tgt.size(); ++j) {
        b.tgt_in[r * b.tgt_len + j + 1] = tgt[j];
        b.tgt_out[r * b.tgt_len + j] = tgt[j];
      }
      b.tgt_out[r * b.tgt_len + tgt.size()] = kEosId;
      for (std::size_t j = 0; j <= tgt.size(); ++j) b.tgt_pad[r * b.tgt_len + j] = 0;
    }
    plan.batches.push_back(std::move(b));
  }
  return plan;
}

}  // namespace mstx
