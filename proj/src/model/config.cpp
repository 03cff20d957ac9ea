#include "forge/model/config.hpp"

#include "forge/error.hpp"

namespace forge::model {

void ModelConfig::validate() const {
  auto positive = [](int v, const char* key) {
    if (v <= 0) throw ConfigError(std::string("model.") + key + " must be positive, got " + std::to_string(v));
  };
  positive(n_mels, "n_mels");
  positive(max_mel_frames, "max_mel_frames");
  positive(d_s, "d_s");
  positive(d_b, "d_b");
  positive(d_q, "d_q");
  positive(d_llm, "d_llm");
  positive(num_queries, "num_queries");
  positive(window_frames, "window_frames");
  positive(context, "context");
  positive(mlp_ratio, "mlp_ratio");
  positive(lora_r, "lora_r");
  positive(speech_heads, "speech_heads");
  positive(event_heads, "event_heads");
  positive(adapter_heads, "adapter_heads");
  positive(lm_heads, "lm_heads");
  auto divisible = [](int d, int h, const char* key) {
    if (d % h != 0) {
      throw ConfigError(std::string("model.") + key + " width " + std::to_string(d) +
                        " not divisible by " + std::to_string(h) + " heads");
    }
  };
  divisible(d_s, speech_heads, "d_s");
  divisible(d_b, event_heads, "d_b");
  divisible(d_q, adapter_heads, "d_q");
  divisible(d_llm, lm_heads, "d_llm");
  if (speech_layers < 0 || event_layers < 0 || adapter_layers < 0 || lm_layers < 0) {
    throw ConfigError("model: layer counts must be non-negative");
  }
}

std::string to_string(PositionalKind kind) {
  return kind == PositionalKind::Learned ? "learned" : "sinusoidal";
}

PositionalKind positional_from_string(const std::string& s) {
  if (s == "learned") return PositionalKind::Learned;
  if (s == "sinusoidal") return PositionalKind::Sinusoidal;
  throw ConfigError("model.positional must be 'learned' or 'sinusoidal', got '" + s + "'");
}

}  // namespace forge::model
