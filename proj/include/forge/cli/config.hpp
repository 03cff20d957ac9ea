#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "forge/data/clients.hpp"
#include "forge/model/config.hpp"
#include "json.hpp"

namespace forge::cli {

struct TrainSection {
  int base_steps = 150;  // text-only LM stage before the audio phases; 0 skips it
  double base_lr = 3e-3;
  int pretrain_steps = 150;
  int sft_steps = 150;
  double lr = 3e-3;
  int batch_size = 8;
  double weight_decay = 0.0;
  double grad_clip_norm = 1.0;
  int checkpoint_every = 0;
  std::uint64_t seed = 0;
};

struct MixSection {
  std::uint64_t seed = 0;
  std::size_t corpus_size = 140;  // synthetic training examples (round-robin over 7 tasks)
  std::size_t eval_size = 70;
  std::vector<std::string> langs{"en", "th"};
  std::size_t instruction_pairs = 24;  // Type2 speech instructions added to the mix
  double planted_fraction = 0.25;      // share of those that are code/math and must be filtered
  std::map<std::string, double> prompt_lang_ratio;  // empty: prompt in the response language
};

struct EvalSection {
  std::string wer_unit = "auto";
  bool bleu_smooth = true;
  int max_new = 96;
  std::size_t complexif_size = 8;
};

struct Config {
  model::ModelConfig model;
  TrainSection train;
  MixSection mix;
  EvalSection eval;
  data::ClientsConfig clients;
};

nlohmann::ordered_json to_json(const Config& c);
// Keys missing from j keep their defaults; unknown keys and mistyped values
// throw ConfigError naming the dotted key.
Config config_from_json(const nlohmann::json& j);
Config load_config(const std::filesystem::path& path);
// "section.key=value"; value is read as JSON when it parses, else as a string.
void apply_override(Config& c, const std::string& assignment);
// One seed drives model init, batching and corpus/mix sampling.
void set_seed(Config& c, std::uint64_t seed);

}  // namespace forge::cli
