#include "forge/audio/mel.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numbers>

#include "forge/error.hpp"
#include "forge/numerics/kernels.hpp"

namespace forge::audio {
namespace {

// Real DFT basis for n_fft samples, laid out as [n_fft x 2*bins] with
// interleaved (cos, -sin) columns and the Hann window folded in, so a block
// of frames becomes one gemm.
struct DftPlan {
  int n_fft = 0;
  int bins = 0;
  std::vector<float> basis;
};

const DftPlan& dft_plan(int n_fft) {
  static std::mutex mu;
  static std::vector<DftPlan> plans;
  std::lock_guard lock(mu);
  for (const auto& p : plans) {
    if (p.n_fft == n_fft) return p;
  }
  DftPlan plan;
  plan.n_fft = n_fft;
  plan.bins = n_fft / 2 + 1;
  plan.basis.resize(static_cast<std::size_t>(n_fft) * 2 * plan.bins);
  for (int n = 0; n < n_fft; ++n) {
    // periodic Hann
    const double window = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * n / n_fft);
    for (int k = 0; k < plan.bins; ++k) {
      // reduce the angle index first so large n*k stays exact
      const auto idx = static_cast<long long>(n) * k % n_fft;
      const double angle = 2.0 * std::numbers::pi * static_cast<double>(idx) / n_fft;
      const std::size_t base = static_cast<std::size_t>(n) * 2 * plan.bins + 2 * static_cast<std::size_t>(k);
      plan.basis[base] = static_cast<float>(window * std::cos(angle));
      plan.basis[base + 1] = static_cast<float>(-window * std::sin(angle));
    }
  }
  plans.push_back(std::move(plan));
  return plans.back();
}

}  // namespace

Tensor MelSpectrogram::to_tensor() const {
  return Tensor::from({frames, n_mels}, values);
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

std::vector<float> mel_filterbank(const MelConfig& config, int sample_rate) {
  const int bins = config.n_fft / 2 + 1;
  const double mel_lo = hz_to_mel(config.f_min);
  const double mel_hi = hz_to_mel(config.f_max);
  std::vector<double> edges(static_cast<std::size_t>(config.n_mels) + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    const double mel = mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) /
                                    static_cast<double>(config.n_mels + 1);
    edges[i] = mel_to_hz(mel);
  }
  std::vector<float> fb(static_cast<std::size_t>(config.n_mels) * bins, 0.0f);
  for (int m = 0; m < config.n_mels; ++m) {
    const double left = edges[static_cast<std::size_t>(m)];
    const double center = edges[static_cast<std::size_t>(m) + 1];
    const double right = edges[static_cast<std::size_t>(m) + 2];
    for (int k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * sample_rate / config.n_fft;
      double w = 0.0;
      if (f > left && f <= center) w = (f - left) / (center - left);
      else if (f > center && f < right) w = (right - f) / (right - center);
      fb[static_cast<std::size_t>(m) * bins + k] = static_cast<float>(w);
    }
  }
  return fb;
}

std::int64_t frame_count(std::size_t n_samples, const MelConfig& config) {
  if (n_samples < static_cast<std::size_t>(config.n_fft)) return 0;
  return 1 + static_cast<std::int64_t>((n_samples - config.n_fft) / config.hop);
}

MelSpectrogram log_mel(const Waveform& w, const MelConfig& config) {
  if (w.sample_rate != kSampleRate) {
    throw FormatError("log_mel: expected 16000 Hz audio, got " + std::to_string(w.sample_rate));
  }
  const std::int64_t frames = frame_count(w.samples.size(), config);
  if (frames <= 0) {
    throw Error("log_mel: " + std::to_string(w.samples.size()) +
                " samples is shorter than one " + std::to_string(config.n_fft) + "-sample frame");
  }
  const auto& plan = dft_plan(config.n_fft);
  const auto& kt = kernels::active();
  const std::size_t n_fft = static_cast<std::size_t>(config.n_fft);
  const std::size_t bins = static_cast<std::size_t>(plan.bins);
  const std::size_t t_count = static_cast<std::size_t>(frames);

  std::vector<float> framed(t_count * n_fft);
  for (std::size_t t = 0; t < t_count; ++t) {
    std::copy_n(w.samples.data() + t * static_cast<std::size_t>(config.hop), n_fft,
                framed.data() + t * n_fft);
  }
  std::vector<float> spec(t_count * 2 * bins, 0.0f);
  kt.gemm_nn(t_count, 2 * bins, n_fft, framed.data(), plan.basis.data(), spec.data());

  std::vector<float> power(t_count * bins);
  for (std::size_t i = 0; i < t_count * bins; ++i) {
    const float re = spec[2 * i], im = spec[2 * i + 1];
    power[i] = re * re + im * im;
  }

  const auto fb = mel_filterbank(config);
  MelSpectrogram out;
  out.frames = frames;
  out.n_mels = config.n_mels;
  out.hop_seconds = static_cast<double>(config.hop) / kSampleRate;
  out.values.assign(t_count * static_cast<std::size_t>(config.n_mels), 0.0f);
  kt.gemm_nt(t_count, static_cast<std::size_t>(config.n_mels), bins, power.data(), fb.data(),
             out.values.data());

  float mx = -std::numeric_limits<float>::infinity();
  for (auto& v : out.values) {
    v = static_cast<float>(std::log10(std::max(static_cast<double>(v), config.power_floor)));
    mx = std::max(mx, v);
  }
  const float lo = mx - static_cast<float>(config.dynamic_range);
  for (auto& v : out.values) v = (std::max(v, lo) + 4.0f) / 4.0f;
  return out;
}

}  // namespace forge::audio
