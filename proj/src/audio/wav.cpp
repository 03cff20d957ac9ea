#include "forge/audio/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "forge/error.hpp"

namespace forge::audio {
namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

  void need(std::size_t n, const char* what) const {
    if (remaining() < n) {
      throw FormatError(std::string("wav: truncated ") + what + " at offset " +
                        std::to_string(pos_));
    }
  }

  std::string tag() {
    need(4, "chunk tag");
    std::string t(reinterpret_cast<const char*>(bytes_.data() + pos_), 4);
    pos_ += 4;
    return t;
  }

  std::uint32_t u32() {
    need(4, "u32 field");
    const auto* p = bytes_.data() + pos_;
    pos_ += 4;
    return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 |
           std::uint32_t(p[3]) << 24;
  }

  std::uint16_t u16() {
    need(2, "u16 field");
    const auto* p = bytes_.data() + pos_;
    pos_ += 2;
    return static_cast<std::uint16_t>(p[0] | p[1] << 8);
  }

  std::span<const std::uint8_t> take(std::size_t n, const char* what) {
    need(n, what);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

  void skip(std::size_t n, const char* what) { take(n, what); }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

}  // namespace

Waveform decode_wav(std::span<const std::uint8_t> bytes, const DecodeOptions& options) {
  Reader r(bytes);
  if (r.tag() != "RIFF") throw FormatError("wav: missing RIFF magic at offset 0");
  r.u32();  // riff size; not trusted
  if (r.tag() != "WAVE") throw FormatError("wav: missing WAVE form type at offset 8");

  bool have_fmt = false;
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  while (true) {
    if (r.remaining() == 0) throw FormatError("wav: no data chunk before end of file at offset " +
                                              std::to_string(r.offset()));
    const std::size_t chunk_at = r.offset();
    const std::string id = r.tag();
    const std::uint32_t size = r.u32();
    if (id == "fmt ") {
      if (size < 16) throw FormatError("wav: fmt chunk too small at offset " + std::to_string(chunk_at));
      format = r.u16();
      channels = r.u16();
      rate = r.u32();
      r.u32();  // byte rate
      r.u16();  // block align
      bits = r.u16();
      std::size_t rest = size - 16;
      if (format == kFormatExtensible && rest >= 10) {
        r.u16();  // cbSize
        r.u16();  // valid bits
        r.u32();  // channel mask
        format = r.u16();  // first two bytes of the subformat GUID
        rest -= 10;
      }
      r.skip(rest + (size & 1u), "fmt chunk");
      have_fmt = true;
      continue;
    }
    if (id != "data") {
      r.skip(size + (size & 1u), "chunk body");
      continue;
    }
    if (!have_fmt) throw FormatError("wav: data chunk before fmt chunk at offset " + std::to_string(chunk_at));
    if (channels != 1 && channels != 2) {
      throw FormatError("wav: unsupported channel count " + std::to_string(channels));
    }
    const bool pcm16 = format == kFormatPcm && bits == 16;
    const bool f32 = format == kFormatFloat && bits == 32;
    if (!pcm16 && !f32) {
      throw FormatError("wav: unsupported codec (format " + std::to_string(format) + ", " +
                        std::to_string(bits) + " bits)");
    }
    const std::size_t frame_bytes = std::size_t(bits / 8) * channels;
    if (size % frame_bytes != 0) {
      throw FormatError("wav: data size " + std::to_string(size) + " not a multiple of frame size at offset " +
                        std::to_string(chunk_at));
    }
    const auto payload = r.take(size, "data chunk");
    const std::size_t frames = size / frame_bytes;
    Waveform w;
    w.sample_rate = static_cast<int>(rate);
    w.samples.resize(frames);
    for (std::size_t i = 0; i < frames; ++i) {
      double acc = 0.0;
      for (std::size_t c = 0; c < channels; ++c) {
        const std::uint8_t* p = payload.data() + i * frame_bytes + c * (bits / 8);
        if (pcm16) {
          const auto v = static_cast<std::int16_t>(std::uint16_t(p[0]) | std::uint16_t(p[1]) << 8);
          acc += static_cast<double>(v) / 32768.0;
        } else {
          float v;
          std::uint32_t u = std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 |
                            std::uint32_t(p[2]) << 16 | std::uint32_t(p[3]) << 24;
          std::memcpy(&v, &u, 4);
          if (!std::isfinite(v)) {
            throw FormatError("wav: non-finite sample at offset " +
                              std::to_string(chunk_at + 8 + i * frame_bytes));
          }
          acc += v;
        }
      }
      w.samples[i] = static_cast<float>(acc / channels);
    }
    if (w.sample_rate != kSampleRate) {
      if (!options.resample) {
        throw FormatError("wav: sample rate " + std::to_string(w.sample_rate) +
                          " Hz, expected 16000 (enable resampling to convert)");
      }
      w = resample_linear(w, kSampleRate);
    }
    return w;
  }
}

Waveform read_wav(const std::string& path, const DecodeOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_wav(bytes, options);
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  }
}

std::vector<std::uint8_t> encode_wav(const Waveform& w, SampleFormat format, int channels) {
  const std::uint16_t bits = format == SampleFormat::Pcm16 ? 16 : 32;
  const std::uint16_t fmt_code = format == SampleFormat::Pcm16 ? kFormatPcm : kFormatFloat;
  const auto ch = static_cast<std::uint16_t>(channels);
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(w.samples.size() * ch * (bits / 8));
  std::vector<std::uint8_t> out;
  out.reserve(44 + data_bytes);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  put_u32(out, 36 + data_bytes);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  put_u32(out, 16);
  put_u16(out, fmt_code);
  put_u16(out, ch);
  put_u32(out, static_cast<std::uint32_t>(w.sample_rate));
  put_u32(out, static_cast<std::uint32_t>(w.sample_rate) * ch * (bits / 8));
  put_u16(out, static_cast<std::uint16_t>(ch * (bits / 8)));
  put_u16(out, bits);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  put_u32(out, data_bytes);
  for (float s : w.samples) {
    for (int c = 0; c < channels; ++c) {
      if (format == SampleFormat::Pcm16) {
        const float clamped = std::clamp(s, -1.0f, 1.0f);
        const long q = std::lround(static_cast<double>(clamped) * 32767.0);
        put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
      } else {
        std::uint32_t u;
        std::memcpy(&u, &s, 4);
        put_u32(out, u);
      }
    }
  }
  return out;
}

void write_wav(const std::string& path, const Waveform& w, SampleFormat format) {
  const auto bytes = encode_wav(w, format);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Waveform resample_linear(const Waveform& w, int target_rate) {
  if (w.sample_rate == target_rate || w.samples.empty()) {
    Waveform copy = w;
    copy.sample_rate = target_rate;
    return copy;
  }
  const double ratio = static_cast<double>(w.sample_rate) / target_rate;
  const auto n_out = static_cast<std::size_t>(
      std::floor(static_cast<double>(w.samples.size() - 1) / ratio)) + 1;
  Waveform out;
  out.sample_rate = target_rate;
  out.samples.resize(n_out);
  for (std::size_t i = 0; i < n_out; ++i) {
    const double pos = static_cast<double>(i) * ratio;
    const auto j = static_cast<std::size_t>(pos);
    const double frac = pos - static_cast<double>(j);
    const float a = w.samples[j];
    const float b = j + 1 < w.samples.size() ? w.samples[j + 1] : a;
    out.samples[i] = static_cast<float>(a + (b - a) * frac);
  }
  return out;
}

PadTrimResult pad_or_trim(const Waveform& w, double max_seconds) {
  const auto target = static_cast<std::size_t>(std::llround(max_seconds * w.sample_rate));
  PadTrimResult r;
  r.waveform.sample_rate = w.sample_rate;
  r.truncated = w.samples.size() > target;
  r.waveform.samples.assign(w.samples.begin(),
                            w.samples.begin() + static_cast<std::ptrdiff_t>(std::min(target, w.samples.size())));
  r.waveform.samples.resize(target, 0.0f);
  return r;
}

}  // namespace forge::audio
