#include "forge/cli/runtime.hpp"

#include <fstream>
#include <iterator>

#include "forge/audio/wav.hpp"
#include "forge/data/clients.hpp"
#include "forge/error.hpp"

namespace forge::cli {

audio::MelSpectrogram load_mel(const std::filesystem::path& wav, const model::ModelConfig& config) {
  auto w = audio::read_wav(wav.string(), audio::DecodeOptions{true});
  audio::MelConfig mc;
  mc.n_mels = config.n_mels;
  const auto max_samples = static_cast<std::size_t>(config.max_mel_frames - 1) * mc.hop + mc.n_fft;
  if (w.samples.size() > max_samples) w.samples.resize(max_samples);
  if (w.samples.size() < static_cast<std::size_t>(mc.n_fft) + 3 * mc.hop) {
    w.samples.resize(static_cast<std::size_t>(mc.n_fft) + 3 * mc.hop, 0.0f);
  }
  return audio::log_mel(w, mc);
}

FeatureCache compute_features(const data::Manifest& manifest, const model::ModelConfig& config) {
  FeatureCache out;
  for (const auto& e : manifest.entries) out[e.id] = load_mel(manifest.audio_file(e), config).to_tensor();
  return out;
}

void write_features(const std::filesystem::path& path, const FeatureCache& cache) {
  training::TensorFile f;
  for (const auto& [id, t] : cache) {
    training::TensorRecord r;
    r.name = id;
    r.dims = t.shape();
    r.f32.assign(t.data().begin(), t.data().end());
    f.tensors.push_back(std::move(r));
  }
  training::write_tensor_file(path, f);
}

FeatureCache read_features(const std::filesystem::path& path) {
  FeatureCache out;
  for (const auto& r : training::read_tensor_file(path).tensors) {
    if (r.dims.size() != 2 || r.dtype != 0) throw FormatError("feature file " + path.string() + ": record " + r.name + " is not a 2-D f32 tensor");
    out[r.name] = Tensor::from(r.dims, r.f32);
  }
  return out;
}

std::vector<training::TrainItem> train_items(const model::AudioLM& m, const data::Manifest& manifest,
                                             const FeatureCache* cache) {
  NoGradGuard ng;
  std::vector<training::TrainItem> items;
  items.reserve(manifest.entries.size());
  for (const auto& e : manifest.entries) {
    Tensor mel;
    if (cache) {
      auto it = cache->find(e.id);
      if (it == cache->end()) throw ConfigError("feature cache has no entry for '" + e.id + "'");
      mel = it->second;
    } else {
      mel = load_mel(manifest.audio_file(e), m.config()).to_tensor();
    }
    items.push_back({e.id, m.encode(mel).detach(), e.prompt, e.response});
  }
  return items;
}

LoadedModel load_model(const std::filesystem::path& checkpoint, const model::ModelConfig& config) {
  const auto file = training::read_tensor_file(checkpoint);
  LoadedModel out;
  out.model = std::make_unique<model::AudioLM>(config);
  if (file.phase == static_cast<std::uint8_t>(training::Phase::Sft)) out.model->attach_lora();
  out.report = training::apply_checkpoint(file, *out.model);
  return out;
}

std::string respond(const model::AudioLM& m, const std::filesystem::path& wav, const std::string& prompt, int max_new) {
  NoGradGuard ng;
  const auto mel = load_mel(wav, m.config());
  const auto audio_tokens = m.adapt(m.encode(mel));
  const auto ids = model::to_ids(prompt);
  model::GenerateOptions opt;
  opt.max_new = max_new;
  const auto g = m.generate(audio_tokens, ids, opt);
  return g.lossy_text();
}

eval::Responder model_responder(const model::AudioLM& m, int max_new) {
  return [&m, max_new](const eval::EvalItem& it) { return respond(m, it.audio_file, it.prompt, max_new); };
}

eval::Responder endpoint_responder(const std::string& url, const data::HttpOptions& http) {
  auto transport = std::make_shared<data::HttpTransport>(url, http);
  return [transport](const eval::EvalItem& it) {
    std::ifstream f(it.audio_file, std::ios::binary);
    if (!f) throw Error("cannot open " + it.audio_file.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return transport->call({"respond", it.prompt, {{"audio_b64", data::base64_encode(bytes)}}}).text;
  };
}

}  // namespace forge::cli
