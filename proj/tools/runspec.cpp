#include "runspec.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace mstx::cli {

namespace {

const std::vector<std::string>& known_keys() {
  static const std::vector<std::string> keys{
      "model.name",       "model.d_model",      "model.d_ff",
      "model.heads",      "model.dropout",      "model.max_len",
      "model.tie_output", "encoder.streams",    "encoder.stream_depth",
      "encoder.skip",     "decoder.layers",     "train.epochs",
      "train.warmup_steps", "train.batch_size", "train.seeds",
      "train.max_steps",  "train.checkpoint_every", "data.train_src",
      "data.train_tgt",   "data.test_src",      "data.test_tgt",
      "data.src_vocab",   "data.tgt_vocab",     "data.src_vocab_size",
      "data.tgt_vocab_size", "out.dir",
  };
  return keys;
}

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

int to_int(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config: " + key + " expects an integer, got '" + value + "'");
  }
}

float to_float(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const float v = std::stof(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config: " + key + " expects a number, got '" + value + "'");
  }
}

bool to_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError("config: " + key + " expects true or false, got '" + value + "'");
}

std::vector<std::uint64_t> to_seeds(const std::string& key, const std::string& value) {
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(value);
  std::string part;
  while (std::getline(ss, part, ',')) {
    part = trim(part);
    if (part.empty()) continue;
    try {
      seeds.push_back(std::stoull(part));
    } catch (const std::exception&) {
      throw ConfigError("config: " + key + " expects comma-separated integers, got '" + value +
                        "'");
    }
  }
  if (seeds.empty()) throw ConfigError("config: " + key + " lists no seeds");
  return seeds;
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& value) {
  std::filesystem::path p(value);
  if (p.is_absolute() || base.empty()) return p;
  return base / p;
}

void apply(RunSpec& spec, const KeyValues& kv, const std::filesystem::path& base) {
  for (const auto& [key, value] : kv) {
    if (key == "model.name") spec.model.name = value;
    else if (key == "model.d_model") spec.model.d_model = to_int(key, value);
    else if (key == "model.d_ff") spec.model.d_ff = to_int(key, value);
    else if (key == "model.heads") spec.model.heads = to_int(key, value);
    else if (key == "model.dropout") spec.model.dropout = to_float(key, value);
    else if (key == "model.max_len") spec.model.max_len = to_int(key, value);
    else if (key == "model.tie_output") spec.model.tie_output = to_bool(key, value);
    else if (key == "encoder.streams") spec.topology.streams = to_int(key, value);
    else if (key == "encoder.stream_depth") spec.topology.stream_depth = to_int(key, value);
    else if (key == "encoder.skip") spec.topology.skip = to_bool(key, value);
    else if (key == "decoder.layers") spec.model.decoder_layers = to_int(key, value);
    else if (key == "train.epochs") spec.train.epochs = to_int(key, value);
    else if (key == "train.warmup_steps") spec.train.warmup_steps = to_int(key, value);
    else if (key == "train.batch_size") spec.train.batch_size = to_int(key, value);
    else if (key == "train.seeds") spec.train.seeds = to_seeds(key, value);
    else if (key == "train.max_steps") spec.train.max_steps = to_int(key, value);
    else if (key == "train.checkpoint_every") spec.train.checkpoint_every = to_int(key, value);
    else if (key == "data.train_src") spec.train_src = resolve(base, value);
    else if (key == "data.train_tgt") spec.train_tgt = resolve(base, value);
    else if (key == "data.test_src") spec.test_src = resolve(base, value);
    else if (key == "data.test_tgt") spec.test_tgt = resolve(base, value);
    else if (key == "data.src_vocab") spec.src_vocab = resolve(base, value);
    else if (key == "data.tgt_vocab") spec.tgt_vocab = resolve(base, value);
    else if (key == "data.src_vocab_size") spec.src_vocab_size = to_int(key, value);
    else if (key == "data.tgt_vocab_size") spec.tgt_vocab_size = to_int(key, value);
    else if (key == "out.dir") spec.out_dir = resolve(base, value);
    else throw ConfigError("config: unknown key '" + key + "'");
  }
}

}  // namespace

const std::map<std::string, KeyValues>& presets() {
  static const std::map<std::string, KeyValues> table{
      {"tiny",
       {
           {"model.name", "tiny"},
           {"model.d_model", "8"},
           {"model.d_ff", "16"},
           {"model.heads", "2"},
           {"model.dropout", "0"},
           {"model.max_len", "16"},
           {"encoder.streams", "2"},
           {"encoder.stream_depth", "1"},
           {"encoder.skip", "true"},
           {"decoder.layers", "2"},
           {"train.epochs", "1"},
           {"train.warmup_steps", "50"},
           {"train.batch_size", "8"},
           {"train.seeds", "1"},
           {"data.src_vocab_size", "12"},
           {"data.tgt_vocab_size", "12"},
       }},
      {"desk",
       {
           {"model.name", "desk"},
           {"model.d_model", "64"},
           {"model.d_ff", "256"},
           {"model.heads", "4"},
           {"model.dropout", "0.1"},
           {"model.max_len", "64"},
           {"encoder.streams", "2"},
           {"encoder.stream_depth", "1"},
           {"encoder.skip", "true"},
           {"decoder.layers", "0"},
           {"train.epochs", "20"},
           {"train.warmup_steps", "400"},
           {"train.batch_size", "64"},
           {"train.seeds", "1,2,3"},
           {"data.src_vocab_size", "4000"},
           {"data.tgt_vocab_size", "4000"},
       }},
      {"paper-4layer",
       {
           {"model.name", "paper-4layer"},
           {"model.d_model", "128"},
           {"model.d_ff", "512"},
           {"model.heads", "8"},
           {"model.dropout", "0.1"},
           {"model.max_len", "128"},
           {"encoder.streams", "1"},
           {"encoder.stream_depth", "2"},
           {"encoder.skip", "false"},
           {"decoder.layers", "0"},
           {"train.epochs", "20"},
           {"train.warmup_steps", "4000"},
           {"train.batch_size", "64"},
           {"train.seeds", "1,2,3"},
           {"data.src_vocab_size", "32000"},
           {"data.tgt_vocab_size", "32000"},
       }},
      {"paper-6layer",
       {
           {"model.name", "paper-6layer"},
           {"model.d_model", "512"},
           {"model.d_ff", "2048"},
           {"model.heads", "8"},
           {"model.dropout", "0.1"},
           {"model.max_len", "128"},
           {"encoder.streams", "1"},
           {"encoder.stream_depth", "4"},
           {"encoder.skip", "false"},
           {"decoder.layers", "0"},
           {"train.epochs", "10"},
           {"train.warmup_steps", "32000"},
           {"train.batch_size", "64"},
           {"train.seeds", "1,2,3"},
           {"data.src_vocab_size", "32000"},
           {"data.tgt_vocab_size", "32000"},
       }},
  };
  return table;
}

KeyValues parse_config_text(const std::string& text, const std::string& origin) {
  KeyValues kv;
  std::stringstream ss(text);
  std::string line;
  int number = 0;
  while (std::getline(ss, line)) {
    ++number;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config: " + origin + ":" + std::to_string(number) +
                        ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (std::find(known_keys().begin(), known_keys().end(), key) == known_keys().end()) {
      throw ConfigError("config: " + origin + ":" + std::to_string(number) +
                        ": unknown key '" + key + "'");
    }
    kv[key] = value;
  }
  return kv;
}

KeyValues parse_config_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str(), path.filename().string());
}

RunSpec build_runspec(const std::string& preset_name, const std::filesystem::path& config_path,
                      const KeyValues& overrides) {
  RunSpec spec;
  if (!preset_name.empty()) {
    auto it = presets().find(preset_name);
    if (it == presets().end()) {
      std::string names;
      for (const auto& [name, kv] : presets()) names += (names.empty() ? "" : ", ") + name;
      throw ConfigError("config: unknown preset '" + preset_name + "' (available: " + names +
                        ")");
    }
    apply(spec, it->second, {});
  }
  if (!config_path.empty()) {
    apply(spec, parse_config_file(config_path), config_path.parent_path());
  }
  apply(spec, overrides, {});
  spec.model.validate();
  spec.topology.validate();
  return spec;
}

std::string preset_text(const std::string& name) {
  auto it = presets().find(name);
  if (it == presets().end()) throw ConfigError("unknown preset " + name);
  std::string out;
  for (const auto& [key, value] : it->second) {
    out += key + " = " + value + "\n";
  }
  return out;
}

}  // namespace mstx::cli
