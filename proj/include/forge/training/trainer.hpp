#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "forge/model/audio_lm.hpp"
#include "forge/numerics/optim.hpp"
#include "forge/numerics/rng.hpp"

namespace forge::training {

// Base is the text-only LM stage that stands in for a pretrained LLM; the
// two audio phases follow it. Values are the checkpoint phase byte.
enum class Phase : std::uint8_t { Pretrain = 0, Sft = 1, Base = 2 };

std::string to_string(Phase phase);
Phase phase_from_string(const std::string& s);

// Parameter names optimized in a phase. Throws ConfigError when the LoRA
// state does not match the phase (attached iff Sft).
std::set<std::string> trainable_params(const model::AudioLM& m, Phase phase);
// Sets requires_grad on every parameter to match trainable_params.
void apply_phase(model::AudioLM& m, Phase phase);

struct TrainItem {
  std::string id;
  Tensor features;  // fused encoder output (constant); undefined for text-only items
  std::optional<std::string> prompt;
  std::string response;
};

struct TrainConfig {
  Phase phase = Phase::Pretrain;
  std::uint64_t seed = 0;
  int steps = 100;
  int batch_size = 8;
  float lr = 1e-3f;
  float weight_decay = 0.0f;
  float grad_clip_norm = 1.0f;
  int checkpoint_every = 0;  // 0: final checkpoint only
};

struct StepReport {
  std::int64_t step = 0;
  double loss = 0.0;
  double grad_norm = 0.0;
  std::int64_t tokens = 0;
};

// Mean cross-entropy over every scored target in the batch.
Tensor batch_loss(const model::AudioLM& m, std::span<const TrainItem* const> batch, Phase phase);

class Trainer {
 public:
  // Applies the phase freeze to the model and builds a fresh optimizer over
  // the trainable set.
  Trainer(model::AudioLM& m, TrainConfig config);

  StepReport train_step(std::span<const TrainItem* const> batch);
  // Next batch from a seeded per-epoch shuffle of items.
  std::vector<const TrainItem*> next_batch(std::span<const TrainItem> items);

  model::AudioLM& model() { return model_; }
  AdamW& optimizer() { return optimizer_; }
  Rng& rng() { return rng_; }
  std::int64_t step() const { return step_; }
  void set_step(std::int64_t s) { step_ = s; }
  const TrainConfig& config() const { return config_; }

 private:
  model::AudioLM& model_;
  TrainConfig config_;
  AdamW optimizer_;
  Rng rng_;
  std::int64_t step_ = 0;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

struct RunOptions {
  std::filesystem::path out_dir;  // metrics and checkpoints; empty disables both
  std::function<void(const StepReport&)> on_step;
};

struct RunResult {
  std::vector<StepReport> reports;
  std::filesystem::path checkpoint;
};

// Runs config.steps steps, appending one JSON line per step to
// <out_dir>/<phase>_metrics.jsonl and writing <out_dir>/<phase>.ckpt at the end.
RunResult run_phase(model::AudioLM& m, std::span<const TrainItem> items, const TrainConfig& config,
                    const RunOptions& options = {});

// Text-only items for the Base stage: every response, and prompt + response
// where a prompt exists.
std::vector<TrainItem> text_items(std::span<const TrainItem> items);

}  // namespace forge::training
