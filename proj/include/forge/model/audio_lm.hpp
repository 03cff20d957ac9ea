#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "forge/audio/mel.hpp"
#include "forge/model/config.hpp"
#include "forge/model/layers.hpp"

namespace forge::model {

// Byte-level vocabulary: 0..255 are raw bytes.
inline constexpr std::int64_t kBos = 256;
inline constexpr std::int64_t kEos = 257;
inline constexpr std::int64_t kPad = 258;
inline constexpr std::int64_t kVocab = 259;
inline constexpr std::int64_t kIgnoreIndex = -100;

std::int64_t speech_frames(std::int64_t mel_frames);  // ceil(ceil(T/2)/2)
std::int64_t adapter_tokens(std::int64_t fused_frames, int window, int queries);

struct SpeechEncoder {
  Linear conv1, conv2;  // kernel 3, stride 2, pad 1, over frames
  Tensor pos;           // [max_frames/4 x d_s], learned or fixed
  bool learned_pos = true;
  std::vector<Block> layers;
  LayerNorm ln_post;

  Tensor forward(const Tensor& mel) const;
  void collect(const std::string& prefix, ParameterList& out) const;
};

struct AudioEventEncoder {
  Linear frame_proj;
  Tensor pos;
  bool learned_pos = true;
  std::vector<Block> layers;
  LayerNorm ln_post;

  Tensor forward(const Tensor& mel) const;
  void collect(const std::string& prefix, ParameterList& out) const;
};

struct QFormerLayer {
  LayerNorm ln_self, ln_cross, ln_kv, ln_mlp;
  Attention self_attn;
  Attention cross_attn;  // queries (d_q) -> fused frames (d_s + d_b)
  Mlp mlp;
};

// Learned queries cross-attend to one window of fused frames at a time; the
// same weights serve every window.
struct WindowQFormer {
  Tensor query_embed;  // [K x d_q]
  Tensor window_pos;   // [W x d_fused], present when positions are enabled
  std::vector<QFormerLayer> layers;
  LayerNorm ln_out;
  Linear out_proj;     // d_q -> d_llm
  int window_frames = 17;

  // fused [T_e x d_fused] -> [ceil(T_e / W) * K x d_llm]
  Tensor forward(const Tensor& fused) const;
  void collect(const std::string& prefix, ParameterList& out) const;
};

enum class LoraTarget { Query, Value };

struct DecoderLM {
  Tensor tok_embed;  // [259 x d_llm], tied output head
  Tensor pos;        // [context x d_llm]
  bool learned_pos = true;
  std::vector<Block> layers;
  LayerNorm ln_f;
  int context = 512;

  // inputs [T x d_llm] -> logits [T x 259], causal
  Tensor forward_embeddings(const Tensor& inputs) const;
  Tensor embed_tokens(std::span<const std::int64_t> ids) const;
  void collect(const std::string& prefix, ParameterList& out) const;
};

struct GenerateResult {
  std::vector<std::uint8_t> bytes;
  bool valid_utf8 = true;
  bool hit_eos = false;

  std::string text() const { return {bytes.begin(), bytes.end()}; }
  std::string lossy_text() const;
};

struct GenerateOptions {
  int max_new = 256;
  float temperature = 0.0f;
  std::uint64_t seed = 0;
};

bool is_valid_utf8(std::span<const std::uint8_t> bytes);
// Ill-formed bytes become U+FFFD, one per byte.
std::string lossy_utf8(std::span<const std::uint8_t> bytes);
std::vector<std::int64_t> to_ids(std::string_view text);

class AudioLM {
 public:
  explicit AudioLM(ModelConfig config);

  const ModelConfig& config() const { return config_; }

  // mel [T x n_mels] -> fused [T_e x (d_s + d_b)]
  Tensor encode(const Tensor& mel) const;
  Tensor encode(const audio::MelSpectrogram& mel) const { return encode(mel.to_tensor()); }
  std::vector<Tensor> encode_batch(std::span<const audio::MelSpectrogram> mels) const;
  Tensor adapt(const Tensor& fused) const;

  // [BOS] + audio + prompt + response (+ EOS when append_eos); audio may be
  // undefined for a text-only forward. Returns logits for every position.
  Tensor lm_forward(const Tensor& audio_tokens, std::span<const std::int64_t> prompt,
                    std::span<const std::int64_t> response, bool append_eos = false) const;

  GenerateResult generate(const Tensor& audio_tokens, std::span<const std::int64_t> prompt,
                          const GenerateOptions& options = {}) const;

  void attach_lora(int r, float alpha, const std::set<LoraTarget>& targets);
  void attach_lora() { attach_lora(config_.lora_r, config_.lora_alpha, {LoraTarget::Query, LoraTarget::Value}); }
  bool lora_attached() const { return lora_attached_; }
  float lora_scale() const { return lora_scale_; }
  // Folds every LoRA delta into its base weight and detaches LoRA.
  void merge_lora();

  // Every parameter, named by owning submodule: speech_encoder.*,
  // event_encoder.*, adapter.*, lm.*, lora.*
  ParameterList parameters() const;

  SpeechEncoder& speech_encoder() { return speech_; }
  AudioEventEncoder& event_encoder() { return event_; }
  WindowQFormer& adapter() { return adapter_; }
  DecoderLM& lm() { return lm_; }
  const DecoderLM& lm() const { return lm_; }

 private:
  ModelConfig config_;
  Rng lora_rng_;
  SpeechEncoder speech_;
  AudioEventEncoder event_;
  WindowQFormer adapter_;
  DecoderLM lm_;
  bool lora_attached_ = false;
  float lora_scale_ = 0.0f;
};

}  // namespace forge::model
