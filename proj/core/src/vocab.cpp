#include "mstx/vocab.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "mstx/error.hpp"

namespace mstx {

std::vector<std::string> utf8_symbols(std::string_view text) {
  std::vector<std::string> symbols;
  std::size_t i = 0;
  while (i < text.size()) {
    const unsigned char lead = static_cast<unsigned char>(text[i]);
    std::size_t len = 1;
    if (lead >= 0xF0) {
      len = 4;
    } else if (lead >= 0xE0) {
      len = 3;
    } else if (lead >= 0xC0) {
      len = 2;
    }
    if (i + len > text.size()) len = 1;
    for (std::size_t j = 1; j < len; ++j) {
      if ((static_cast<unsigned char>(text[i + j]) & 0xC0) != 0x80) {
        len = 1;  // malformed sequence: fall back to a single byte
        break;
      }
    }
    symbols.emplace_back(text.substr(i, len));
    i += len;
  }
  return symbols;
}

namespace {

bool is_reserved_literal(const std::string& s) {
  for (const char* r : Vocab::kReserved) {
    if (s == r) return true;
  }
  return false;
}

}  // namespace

Vocab Vocab::train_subword(const std::vector<std::string>& lines, std::size_t vocab_size) {
  // Word types with counts; std::map keeps the merge loop deterministic.
  std::map<std::string, std::int64_t> word_counts;
  for (const auto& line : lines) {
    std::size_t pos = 0;
    while (pos < line.size()) {
      if (line[pos] == ' ') {
        ++pos;
        continue;
      }
      std::size_t end = line.find(' ', pos);
      if (end == std::string::npos) end = line.size();
      ++word_counts[line.substr(pos, end - pos)];
      pos = end;
    }
  }
  if (word_counts.empty()) throw DataError("tokenizer: empty corpus");

  std::vector<std::pair<std::vector<std::string>, std::int64_t>> words;
  std::set<std::string> charset;
  charset.insert(" ");
  for (const auto& [word, count] : word_counts) {
    auto symbols = utf8_symbols(word);
    for (const auto& s : symbols) charset.insert(s);
    words.emplace_back(std::move(symbols), count);
  }

  const std::size_t reserved = 4;
  if (vocab_size < reserved + charset.size()) {
    throw ConfigError("tokenizer: vocab size " + std::to_string(vocab_size) +
                      " below reserved + base characters (" +
                      std::to_string(reserved + charset.size()) + ")");
  }

  Vocab v;
  for (const char* r : kReserved) v.tokens_.emplace_back(r);
  for (const auto& c : charset) v.tokens_.push_back(c);

  while (v.tokens_.size() < vocab_size) {
    std::map<std::pair<std::string, std::string>, std::int64_t> pair_counts;
    for (const auto& [symbols, count] : words) {
      for (std::size_t i = 0; i + 1 < symbols.size(); ++i) {
        pair_counts[{symbols[i], symbols[i + 1]}] += count;
      }
    }
    // Most frequent pair; map order makes the lexicographically smallest
    // pair win ties. Merges spelling a reserved literal are skipped.
    std::int64_t best_count = 0;
    const std::pair<std::string, std::string>* best = nullptr;
    for (const auto& [pair, count] : pair_counts) {
      if (count > best_count && !is_reserved_literal(pair.first + pair.second)) {
        best_count = count;
        best = &pair;
      }
    }
    if (best == nullptr || best_count < 2) break;

    const std::string merged = best->first + best->second;
    for (auto& [symbols, count] : words) {
      std::vector<std::string> next;
      next.reserve(symbols.size());
      std::size_t i = 0;
      while (i < symbols.size()) {
        if (i + 1 < symbols.size() && symbols[i] == best->first &&
            symbols[i + 1] == best->second) {
          next.push_back(merged);
          i += 2;
        } else {
          next.push_back(symbols[i]);
          ++i;
        }
      }
      symbols = std::move(next);
    }
    v.tokens_.push_back(merged);
  }

  v.index_tokens();
  return v;
}

void Vocab::index_tokens() {
  lookup_.clear();
  max_token_chars_ = 1;
  for (std::size_t id = 0; id < tokens_.size(); ++id) {
    lookup_.emplace(tokens_[id], static_cast<std::int32_t>(id));  // first occurrence wins
    if (id >= 4) {
      max_token_chars_ = std::max(max_token_chars_, utf8_symbols(tokens_[id]).size());
    }
  }
}

std::vector<std::int32_t> Vocab::encode(std::string_view text) const {
  std::vector<std::int32_t> ids;
  const auto symbols = utf8_symbols(text);
  std::size_t i = 0;
  while (i < symbols.size()) {
    if (symbols[i] == " ") {
      auto it = lookup_.find(" ");
      ids.push_back(it != lookup_.end() ? it->second : kUnkId);
      ++i;
      continue;
    }
    // Word segment end.
    std::size_t word_end = i;
    while (word_end < symbols.size() && symbols[word_end] != " ") ++word_end;
    // Greedy longest match within the word.
    while (i < word_end) {
      const std::size_t longest = std::min(max_token_chars_, word_end - i);
      std::int32_t match = kUnkId;
      std::size_t match_len = 1;
      std::string candidate;
      for (std::size_t len = longest; len >= 1; --len) {
        candidate.clear();
        for (std::size_t j = 0; j < len; ++j) candidate += symbols[i + j];
        auto it = lookup_.find(candidate);
        if (it != lookup_.end() && it->second >= 4) {
          match = it->second;
          match_len = len;
          break;
        }
      }
      ids.push_back(match);
      i += match_len;
    }
  }
  return ids;
}

std::string Vocab::decode(std::span<const std::int32_t> ids) const {
  std::string out;
  for (std::int32_t id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
      throw DataError("vocab: id " + std::to_string(id) + " out of range (size " +
                      std::to_string(tokens_.size()) + ")");
    }
    if (id == kPadId || id == kBosId || id == kEosId) continue;
    out += tokens_[static_cast<std::size_t>(id)];
  }
  return out;
}

const std::string& Vocab::token(std::int32_t id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw DataError("vocab: id " + std::to_string(id) + " out of range (size " +
                    std::to_string(tokens_.size()) + ")");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::string Vocab::serialize() const {
  std::string out = "MSVOCAB 1\n";
  for (const auto& t : tokens_) {
    out += t;
    out += '\n';
  }
  return out;
}

Vocab Vocab::deserialize(std::string_view text) {
  Vocab v;
  std::size_t pos = 0;
  auto next_line = [&](std::string& line) {
    if (pos >= text.size()) return false;
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    line.assign(text.substr(pos, end - pos));
    pos = end + 1;
    return true;
  };
  std::string line;
  if (!next_line(line) || line != "MSVOCAB 1") {
    throw DataError("vocab: missing or unsupported MSVOCAB header");
  }
  while (next_line(line)) v.tokens_.push_back(line);
  if (v.tokens_.size() < 4) throw DataError("vocab: truncated token table");
  for (std::size_t i = 0; i < 4; ++i) {
    if (v.tokens_[i] != kReserved[i]) {
      throw DataError("vocab: reserved token " + std::to_string(i) + " is '" + v.tokens_[i] +
                      "', expected '" + kReserved[i] + "'");
    }
  }
  v.index_tokens();
  return v;
}

void Vocab::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("vocab: cannot write " + path.string());
  out << serialize();
}

Vocab Vocab::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("vocab: cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return deserialize(buf.str());
}

}  // namespace mstx
