#include "forge/cli/config.hpp"

#include <fstream>

#include "forge/error.hpp"

namespace forge::cli {

using nlohmann::json;
using nlohmann::ordered_json;

ordered_json to_json(const Config& c) {
  const auto& m = c.model;
  ordered_json j;
  j["model"] = {{"n_mels", m.n_mels},
                {"max_mel_frames", m.max_mel_frames},
                {"d_s", m.d_s},
                {"speech_layers", m.speech_layers},
                {"speech_heads", m.speech_heads},
                {"d_b", m.d_b},
                {"event_layers", m.event_layers},
                {"event_heads", m.event_heads},
                {"d_q", m.d_q},
                {"num_queries", m.num_queries},
                {"adapter_layers", m.adapter_layers},
                {"adapter_heads", m.adapter_heads},
                {"window_frames", m.window_frames},
                {"adapter_window_pos", m.adapter_window_pos},
                {"d_llm", m.d_llm},
                {"lm_layers", m.lm_layers},
                {"lm_heads", m.lm_heads},
                {"context", m.context},
                {"mlp_ratio", m.mlp_ratio},
                {"positional", model::to_string(m.positional)},
                {"lora_r", m.lora_r},
                {"lora_alpha", m.lora_alpha},
                {"seed", m.seed}};
  const auto& t = c.train;
  j["train"] = {{"base_steps", t.base_steps},         {"base_lr", t.base_lr},
                {"pretrain_steps", t.pretrain_steps}, {"sft_steps", t.sft_steps},
                {"lr", t.lr},                         {"batch_size", t.batch_size},
                {"weight_decay", t.weight_decay},     {"grad_clip_norm", t.grad_clip_norm},
                {"checkpoint_every", t.checkpoint_every}, {"seed", t.seed}};
  const auto& x = c.mix;
  j["mix"] = {{"seed", x.seed},
              {"corpus_size", x.corpus_size},
              {"eval_size", x.eval_size},
              {"langs", x.langs},
              {"instruction_pairs", x.instruction_pairs},
              {"planted_fraction", x.planted_fraction},
              {"prompt_lang_ratio", x.prompt_lang_ratio}};
  j["eval"] = {{"wer_unit", c.eval.wer_unit},
               {"bleu_smooth", c.eval.bleu_smooth},
               {"max_new", c.eval.max_new},
               {"complexif_size", c.eval.complexif_size}};
  const auto& k = c.clients;
  j["clients"] = {{"textgen", k.textgen},
                  {"tts", k.tts},
                  {"translate", k.translate},
                  {"caption", k.caption},
                  {"qagen", k.qagen},
                  {"judge", k.judge},
                  {"refusal_rate", k.refusal_rate},
                  {"timeout_seconds", k.http.timeout_seconds},
                  {"retries", k.http.retries}};
  return j;
}

namespace {

// Every key of `user` must exist in `defaults` (maps excepted).
void check_keys(const json& user, const json& defaults, const std::string& where) {
  if (!user.is_object()) throw ConfigError("config " + (where.empty() ? "root" : where) + " must be an object");
  for (auto it = user.begin(); it != user.end(); ++it) {
    const std::string key = where.empty() ? it.key() : where + "." + it.key();
    if (!defaults.contains(it.key())) throw ConfigError("unknown config key '" + key + "'");
    const auto& d = defaults[it.key()];
    if (d.is_object() && key != "mix.prompt_lang_ratio") check_keys(it.value(), d, key);
  }
}

template <class T>
void read(const json& j, const char* section, const char* key, T& out) {
  try {
    out = j.at(section).at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("config key '") + section + "." + key + "' has the wrong type");
  }
}

}  // namespace

Config config_from_json(const json& user) {
  const Config defaults;
  const json base = json::parse(to_json(defaults).dump());
  check_keys(user, base, "");
  json j = base;
  j.merge_patch(user);
  if (user.contains("mix") && user["mix"].contains("prompt_lang_ratio")) j["mix"]["prompt_lang_ratio"] = user["mix"]["prompt_lang_ratio"];

  Config c;
  auto& m = c.model;
  read(j, "model", "n_mels", m.n_mels);
  read(j, "model", "max_mel_frames", m.max_mel_frames);
  read(j, "model", "d_s", m.d_s);
  read(j, "model", "speech_layers", m.speech_layers);
  read(j, "model", "speech_heads", m.speech_heads);
  read(j, "model", "d_b", m.d_b);
  read(j, "model", "event_layers", m.event_layers);
  read(j, "model", "event_heads", m.event_heads);
  read(j, "model", "d_q", m.d_q);
  read(j, "model", "num_queries", m.num_queries);
  read(j, "model", "adapter_layers", m.adapter_layers);
  read(j, "model", "adapter_heads", m.adapter_heads);
  read(j, "model", "window_frames", m.window_frames);
  read(j, "model", "adapter_window_pos", m.adapter_window_pos);
  read(j, "model", "d_llm", m.d_llm);
  read(j, "model", "lm_layers", m.lm_layers);
  read(j, "model", "lm_heads", m.lm_heads);
  read(j, "model", "context", m.context);
  read(j, "model", "mlp_ratio", m.mlp_ratio);
  std::string pos;
  read(j, "model", "positional", pos);
  m.positional = model::positional_from_string(pos);
  read(j, "model", "lora_r", m.lora_r);
  read(j, "model", "lora_alpha", m.lora_alpha);
  read(j, "model", "seed", m.seed);
  m.validate();

  auto& t = c.train;
  read(j, "train", "base_steps", t.base_steps);
  read(j, "train", "base_lr", t.base_lr);
  read(j, "train", "pretrain_steps", t.pretrain_steps);
  read(j, "train", "sft_steps", t.sft_steps);
  read(j, "train", "lr", t.lr);
  read(j, "train", "batch_size", t.batch_size);
  read(j, "train", "weight_decay", t.weight_decay);
  read(j, "train", "grad_clip_norm", t.grad_clip_norm);
  read(j, "train", "checkpoint_every", t.checkpoint_every);
  read(j, "train", "seed", t.seed);
  if (t.base_steps < 0 || t.pretrain_steps < 0 || t.sft_steps < 0) throw ConfigError("train step counts must be >= 0");
  if (t.batch_size <= 0) throw ConfigError("train.batch_size must be positive");

  auto& x = c.mix;
  read(j, "mix", "seed", x.seed);
  read(j, "mix", "corpus_size", x.corpus_size);
  read(j, "mix", "eval_size", x.eval_size);
  read(j, "mix", "langs", x.langs);
  read(j, "mix", "instruction_pairs", x.instruction_pairs);
  read(j, "mix", "planted_fraction", x.planted_fraction);
  read(j, "mix", "prompt_lang_ratio", x.prompt_lang_ratio);

  read(j, "eval", "wer_unit", c.eval.wer_unit);
  read(j, "eval", "bleu_smooth", c.eval.bleu_smooth);
  read(j, "eval", "max_new", c.eval.max_new);
  read(j, "eval", "complexif_size", c.eval.complexif_size);
  if (c.eval.max_new < 0) throw ConfigError("eval.max_new must be >= 0");

  auto& k = c.clients;
  read(j, "clients", "textgen", k.textgen);
  read(j, "clients", "tts", k.tts);
  read(j, "clients", "translate", k.translate);
  read(j, "clients", "caption", k.caption);
  read(j, "clients", "qagen", k.qagen);
  read(j, "clients", "judge", k.judge);
  read(j, "clients", "refusal_rate", k.refusal_rate);
  read(j, "clients", "timeout_seconds", k.http.timeout_seconds);
  read(j, "clients", "retries", k.http.retries);
  return c;
}

Config load_config(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(f);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

void apply_override(Config& c, const std::string& assignment) {
  const auto eq = assignment.find('=');
  const auto dot = assignment.find('.');
  if (eq == std::string::npos || dot == std::string::npos || dot > eq) {
    throw ConfigError("override must look like section.key=value, got '" + assignment + "'");
  }
  const std::string section = assignment.substr(0, dot);
  const std::string key = assignment.substr(dot + 1, eq - dot - 1);
  const std::string raw = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::parse_error&) {
    value = raw;
  }
  json doc = json::parse(to_json(c).dump());
  json patch;
  patch[section][key] = value;
  check_keys(patch, doc, "");
  doc[section][key] = value;
  c = config_from_json(doc);
}

void set_seed(Config& c, std::uint64_t seed) {
  c.model.seed = seed;
  c.train.seed = seed;
  c.mix.seed = seed;
}

}  // namespace forge::cli
