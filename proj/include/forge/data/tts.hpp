#pragma once

#include <string_view>

#include "forge/audio/wav.hpp"

namespace forge::data {

// Deterministic stand-in for a TTS engine: one 40 ms sine segment per UTF-8
// byte at base_hz + 4 * byte Hz, 16 kHz, amplitude 0.5, phase-continuous.
// The base is 200 Hz; the "female" voice raises it to 320 Hz.
inline constexpr double kMockToneBaseHz = 200.0;
inline constexpr double kMockFemaleBaseHz = 320.0;
inline constexpr int kMockSamplesPerByte = 640;

audio::Waveform mock_tts(std::string_view text, std::string_view voice = "male");

}  // namespace forge::data
