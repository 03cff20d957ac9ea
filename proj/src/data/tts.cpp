#include "forge/data/tts.hpp"

#include <cmath>
#include <numbers>

#include "forge/error.hpp"

namespace forge::data {

audio::Waveform mock_tts(std::string_view text, std::string_view voice) {
  double base;
  if (voice == "male" || voice.empty()) base = kMockToneBaseHz;
  else if (voice == "female") base = kMockFemaleBaseHz;
  else throw ClientError("mock tts: unknown voice '" + std::string(voice) + "'");
  audio::Waveform w;
  w.sample_rate = audio::kSampleRate;
  w.samples.reserve(text.size() * kMockSamplesPerByte);
  double phase = 0.0;
  for (char ch : text) {
    const double hz = base + 4.0 * static_cast<std::uint8_t>(ch);
    const double step = 2.0 * std::numbers::pi * hz / audio::kSampleRate;
    for (int i = 0; i < kMockSamplesPerByte; ++i) {
      w.samples.push_back(static_cast<float>(0.5 * std::sin(phase)));
      phase += step;
      if (phase > 2.0 * std::numbers::pi) phase -= 2.0 * std::numbers::pi;
    }
  }
  return w;
}

}  // namespace forge::data
