#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "forge/audio/mel.hpp"
#include "forge/data/manifest.hpp"
#include "forge/eval/harness.hpp"
#include "forge/model/audio_lm.hpp"
#include "forge/training/checkpoint.hpp"
#include "forge/training/trainer.hpp"

namespace forge::cli {

// WAV -> log-mel with the model's mel count, trimmed to max_mel_frames.
audio::MelSpectrogram load_mel(const std::filesystem::path& wav, const model::ModelConfig& config);

// id -> mel tensor [T x n_mels]; stored as a tensor file (one record per id).
using FeatureCache = std::map<std::string, Tensor>;
FeatureCache compute_features(const data::Manifest& manifest, const model::ModelConfig& config);
void write_features(const std::filesystem::path& path, const FeatureCache& cache);
FeatureCache read_features(const std::filesystem::path& path);

// Encodes every entry once (encoders are frozen in every phase).
std::vector<training::TrainItem> train_items(const model::AudioLM& m, const data::Manifest& manifest,
                                             const FeatureCache* cache = nullptr);

struct LoadedModel {
  std::unique_ptr<model::AudioLM> model;
  training::LoadReport report;
};
// Attaches LoRA first when the checkpoint comes from the sft phase.
LoadedModel load_model(const std::filesystem::path& checkpoint, const model::ModelConfig& config);

std::string respond(const model::AudioLM& m, const std::filesystem::path& wav, const std::string& prompt, int max_new);
eval::Responder model_responder(const model::AudioLM& m, int max_new);
// POST {"kind": "respond", "text": prompt, "params": {"audio_b64": wav}}
eval::Responder endpoint_responder(const std::string& url, const data::HttpOptions& http);

}  // namespace forge::cli
