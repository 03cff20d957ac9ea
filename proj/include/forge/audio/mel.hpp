#pragma once

#include <cstdint>
#include <vector>

#include "forge/audio/wav.hpp"
#include "forge/numerics/tensor.hpp"

namespace forge::audio {

struct MelConfig {
  int n_fft = 400;
  int hop = 160;
  int n_mels = 80;
  double f_min = 0.0;
  double f_max = 8000.0;
  double power_floor = 1e-10;   // clamp before log10
  double dynamic_range = 8.0;   // log10 units kept below the utterance max
};

struct MelSpectrogram {
  std::int64_t frames = 0;
  int n_mels = 80;
  std::vector<float> values;  // frames x n_mels, row-major
  double hop_seconds = 0.010;

  float at(std::int64_t t, int m) const { return values[static_cast<std::size_t>(t * n_mels + m)]; }
  Tensor to_tensor() const;
};

double hz_to_mel(double hz);  // HTK: 2595 * log10(1 + hz / 700)
double mel_to_hz(double mel);

// Triangular HTK filterbank over the rfft bins: n_mels x (n_fft/2 + 1).
std::vector<float> mel_filterbank(const MelConfig& config, int sample_rate = kSampleRate);

std::int64_t frame_count(std::size_t n_samples, const MelConfig& config = {});

// Hann-windowed STFT without centering, power spectrum, mel projection,
// log10 with floor, clamp to (max - dynamic_range), then (x + 4) / 4.
MelSpectrogram log_mel(const Waveform& w, const MelConfig& config = {});

}  // namespace forge::audio
