#pragma once

// Eight synthetic ASR pairs rendered by the mock TTS, trained through the
// base, pretrain and sft stages.

#include <chrono>
#include <string>
#include <vector>

#include "forge/audio/mel.hpp"
#include "forge/data/tts.hpp"
#include "forge/model/audio_lm.hpp"
#include "forge/training/trainer.hpp"

namespace forge::testing {

inline const std::vector<std::string>& overfit_transcripts() {
  static const std::vector<std::string> t{
      "the red bird sings", "a small dog runs home", "my sister reads books", "the old man walks slowly",
      "we eat rice today",  "the cat sleeps",        "rain falls at night",   "a child plays outside"};
  return t;
}

inline std::vector<training::TrainItem> overfit_items(const model::AudioLM& m) {
  NoGradGuard ng;
  std::vector<training::TrainItem> items;
  int i = 0;
  for (const auto& text : overfit_transcripts()) {
    auto mel = audio::log_mel(data::mock_tts(text));
    items.push_back({"fx" + std::to_string(i++), m.encode(mel).detach(), std::string("Transcribe this audio"), text});
  }
  return items;
}

struct OverfitRun {
  int base_steps = 300;
  float base_lr = 3e-3f;
  int pretrain_steps = 300;
  int sft_steps = 300;
  float lr = 3e-3f;
  std::uint64_t seed = 1;
};

struct OverfitResult {
  std::vector<double> pretrain_losses, sft_losses;
  double final_loss = 0.0;
  std::vector<std::string> decoded;
  int exact = 0;
  double seconds = 0.0;
};

inline OverfitResult run_overfit(model::AudioLM& m, const OverfitRun& run) {
  const auto t0 = std::chrono::steady_clock::now();
  OverfitResult res;
  auto items = overfit_items(m);
  auto text = training::text_items(items);
  training::TrainConfig cfg;
  cfg.seed = run.seed;
  cfg.batch_size = 8;
  if (run.base_steps > 0) {
    cfg.phase = training::Phase::Base;
    cfg.steps = run.base_steps;
    cfg.lr = run.base_lr;
    cfg.batch_size = 16;
    training::run_phase(m, text, cfg);
    cfg.batch_size = 8;
  }
  cfg.phase = training::Phase::Pretrain;
  cfg.steps = run.pretrain_steps;
  cfg.lr = run.lr;
  for (const auto& r : training::run_phase(m, items, cfg).reports) res.pretrain_losses.push_back(r.loss);
  m.attach_lora();
  cfg.phase = training::Phase::Sft;
  cfg.steps = run.sft_steps;
  for (const auto& r : training::run_phase(m, items, cfg).reports) res.sft_losses.push_back(r.loss);

  std::vector<const training::TrainItem*> all;
  for (const auto& it : items) all.push_back(&it);
  {
    NoGradGuard ng;
    res.final_loss = training::batch_loss(m, all, training::Phase::Sft).item();
    for (const auto& it : items) {
      auto audio = m.adapt(it.features);
      auto prompt = model::to_ids(*it.prompt);
      model::GenerateOptions opt;
      opt.max_new = 64;
      auto g = m.generate(audio, prompt, opt);
      res.decoded.push_back(g.text());
      if (g.hit_eos && g.text() == it.response) ++res.exact;
    }
  }
  res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

}  // namespace forge::testing
