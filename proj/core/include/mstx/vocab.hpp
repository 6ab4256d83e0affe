#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mstx/config.hpp"

namespace mstx {

// Subword vocabulary. Training runs greedy byte-pair merges over
// whitespace-pretokenized text (most frequent adjacent pair first, ties
// broken by lexicographic order of the merged pair); encoding is greedy
// longest-match against the finished token table, so a vocabulary loaded
// from its file encodes exactly like the one that trained it.
//
// The space character is itself a base token and never merges across words,
// which makes decode(encode(s)) == s for any text covered by the base
// character set. Ids 0..3 are reserved: <pad>, <bos>, <eos>, <unk>.
class Vocab {
 public:
  static constexpr const char* kReserved[4] = {"<pad>", "<bos>", "<eos>", "<unk>"};

  // vocab_size caps the total table (reserved + characters + merges) and
  // must exceed the corpus's base character count.
  static Vocab train_subword(const std::vector<std::string>& lines, std::size_t vocab_size);

  std::vector<std::int32_t> encode(std::string_view text) const;
  std::string decode(std::span<const std::int32_t> ids) const;

  std::size_t size() const { return tokens_.size(); }
  const std::string& token(std::int32_t id) const;

  // Versioned text format: "MSVOCAB 1" header, then one token per line in
  // id order, reserved tokens first.
  void save(const std::filesystem::path& path) const;
  static Vocab load(const std::filesystem::path& path);
  std::string serialize() const;
  static Vocab deserialize(std::string_view text);

 private:
  void index_tokens();
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::int32_t> lookup_;
  std::size_t max_token_chars_ = 1;
};

// UTF-8 text split into codepoint strings; invalid bytes become single-byte
// symbols.
std::vector<std::string> utf8_symbols(std::string_view text);

}  // namespace mstx
