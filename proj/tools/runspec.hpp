#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "mstx/config.hpp"
#include "mstx/encoder.hpp"
#include "mstx/trainer.hpp"

namespace mstx::cli {

// One experiment description: model size, encoder topology, training
// schedule, data locations and the output directory. Parsed from dotted
// "section.key = value" lines; unknown keys are rejected and relative paths
// resolve against the config file's directory.
struct RunSpec {
  ModelConfig model;
  EncoderTopology topology;
  TrainConfig train;

  std::filesystem::path train_src, train_tgt;
  std::filesystem::path test_src, test_tgt;
  std::filesystem::path src_vocab, tgt_vocab;  // optional; trained when absent
  int src_vocab_size = 4000;
  int tgt_vocab_size = 4000;
  std::filesystem::path out_dir = "out";
};

// Key/value overlay; later appliers win.
using KeyValues = std::map<std::string, std::string>;

// Built-in presets: "tiny", "desk", "paper-4layer", "paper-6layer".
const std::map<std::string, KeyValues>& presets();

KeyValues parse_config_text(const std::string& text, const std::string& origin);
KeyValues parse_config_file(const std::filesystem::path& path);

// Builds a RunSpec by applying the preset (optional), then the config file
// (optional), then explicit overrides.
RunSpec build_runspec(const std::string& preset_name, const std::filesystem::path& config_path,
                      const KeyValues& overrides);

// Serializes a preset as a config file body.
std::string preset_text(const std::string& name);

}  // namespace mstx::cli
