#pragma once

#include <cstdint>
#include <string>

namespace forge::model {

enum class PositionalKind { Learned, Sinusoidal };

struct ModelConfig {
  int n_mels = 80;
  int max_mel_frames = 3000;

  // speech branch (conv subsampling x4, then bidirectional blocks)
  int d_s = 64;
  int speech_layers = 2;
  int speech_heads = 4;

  // audio-event branch (per-frame projection, then blocks)
  int d_b = 32;
  int event_layers = 2;
  int event_heads = 4;

  // window-level Q-Former
  int d_q = 64;
  int num_queries = 1;
  int adapter_layers = 2;
  int adapter_heads = 4;
  int window_frames = 17;
  bool adapter_window_pos = true;

  // decoder LM
  int d_llm = 64;
  int lm_layers = 4;
  int lm_heads = 4;
  int context = 512;

  int mlp_ratio = 4;
  PositionalKind positional = PositionalKind::Learned;

  int lora_r = 8;
  float lora_alpha = 32.0f;

  std::uint64_t seed = 0;

  int d_fused() const { return d_s + d_b; }
  // Validates divisibility and positivity; throws ConfigError.
  void validate() const;
};

std::string to_string(PositionalKind kind);
PositionalKind positional_from_string(const std::string& s);

}  // namespace forge::model
