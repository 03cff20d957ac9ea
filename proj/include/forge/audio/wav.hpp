#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace forge::audio {

inline constexpr int kSampleRate = 16000;

struct Waveform {
  std::vector<float> samples;  // mono, nominally in [-1, 1]
  int sample_rate = kSampleRate;

  double seconds() const { return static_cast<double>(samples.size()) / sample_rate; }
};

struct DecodeOptions {
  // When false, anything other than 16 kHz is rejected.
  bool resample = false;
};

// RIFF/WAVE with PCM16 or IEEE float32 samples, mono or stereo (averaged).
// Throws FormatError naming the byte offset of the problem.
Waveform decode_wav(std::span<const std::uint8_t> bytes, const DecodeOptions& options = {});
Waveform read_wav(const std::string& path, const DecodeOptions& options = {});

enum class SampleFormat { Pcm16, Float32 };

std::vector<std::uint8_t> encode_wav(const Waveform& w, SampleFormat format = SampleFormat::Pcm16,
                                     int channels = 1);
void write_wav(const std::string& path, const Waveform& w,
               SampleFormat format = SampleFormat::Pcm16);

// Linear interpolation to a new rate.
Waveform resample_linear(const Waveform& w, int target_rate);

struct PadTrimResult {
  Waveform waveform;
  bool truncated = false;
};

// Zero-pads to or truncates at exactly max_seconds of audio.
PadTrimResult pad_or_trim(const Waveform& w, double max_seconds = 30.0);

}  // namespace forge::audio
