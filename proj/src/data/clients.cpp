#include "forge/data/clients.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "forge/audio/wav.hpp"
#include "forge/data/tts.hpp"
#include "forge/error.hpp"
#include "httplib.h"

namespace forge::data {

using nlohmann::json;

json to_json(const WireRequest& r) { return json{{"kind", r.kind}, {"text", r.text}, {"params", r.params}}; }

WireResponse response_from_json(const json& j) {
  if (!j.is_object() || !j.contains("ok") || !j["ok"].is_boolean()) {
    throw ClientError("malformed client response: missing boolean 'ok'");
  }
  WireResponse r;
  r.ok = j["ok"].get<bool>();
  if (j.contains("text")) {
    if (!j["text"].is_string()) throw ClientError("malformed client response: 'text' is not a string");
    r.text = j["text"].get<std::string>();
  }
  if (j.contains("audio_b64")) {
    if (!j["audio_b64"].is_string()) throw ClientError("malformed client response: 'audio_b64' is not a string");
    r.audio = base64_decode(j["audio_b64"].get<std::string>());
  }
  if (j.contains("error") && j["error"].is_string()) r.error = j["error"].get<std::string>();
  return r;
}

namespace {

constexpr char kB64[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

int b64_value(char c) {
  if (c >= 'A' && c <= 'Z') return c - 'A';
  if (c >= 'a' && c <= 'z') return c - 'a' + 26;
  if (c >= '0' && c <= '9') return c - '0' + 52;
  if (c == '+') return 62;
  if (c == '/') return 63;
  return -1;
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<std::uint8_t>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

bool is_ascii(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](char c) { return static_cast<unsigned char>(c) < 0x80; });
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
    out += kB64[(v >> 18) & 63];
    out += kB64[(v >> 12) & 63];
    out += kB64[(v >> 6) & 63];
    out += kB64[v & 63];
  }
  if (i + 1 == bytes.size()) {
    const std::uint32_t v = bytes[i] << 16;
    out += kB64[(v >> 18) & 63];
    out += kB64[(v >> 12) & 63];
    out += "==";
  } else if (i + 2 == bytes.size()) {
    const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8);
    out += kB64[(v >> 18) & 63];
    out += kB64[(v >> 12) & 63];
    out += kB64[(v >> 6) & 63];
    out += '=';
  }
  return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
  std::vector<std::uint8_t> out;
  std::uint32_t acc = 0;
  int bits = 0;
  std::size_t pad = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (c == '\n' || c == '\r' || c == ' ') continue;
    if (c == '=') {
      ++pad;
      continue;
    }
    if (pad > 0) throw ClientError("base64: data after padding at offset " + std::to_string(i));
    const int v = b64_value(c);
    if (v < 0) throw ClientError("base64: invalid character at offset " + std::to_string(i));
    acc = (acc << 6) | static_cast<std::uint32_t>(v);
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out.push_back(static_cast<std::uint8_t>((acc >> bits) & 0xFF));
    }
  }
  if (pad > 2) throw ClientError("base64: too much padding");
  return out;
}

HttpTransport::HttpTransport(std::string url, HttpOptions options) : url_(std::move(url)), options_(options) {
  const std::string scheme = "http://";
  if (!url_.starts_with(scheme)) throw ConfigError("client endpoint must be an http:// URL or 'mock', got '" + url_ + "'");
  std::string rest = url_.substr(scheme.size());
  const auto slash = rest.find('/');
  path_ = slash == std::string::npos ? "/" : rest.substr(slash);
  std::string hostport = rest.substr(0, slash);
  const auto colon = hostport.rfind(':');
  if (colon != std::string::npos) {
    host_ = hostport.substr(0, colon);
    try {
      port_ = std::stoi(hostport.substr(colon + 1));
    } catch (const std::exception&) {
      throw ConfigError("bad port in endpoint '" + url_ + "'");
    }
  } else {
    host_ = hostport;
  }
  if (host_.empty()) throw ConfigError("no host in endpoint '" + url_ + "'");
}

WireResponse HttpTransport::call(const WireRequest& request) const {
  httplib::Client cli(host_, port_);
  const auto secs = static_cast<time_t>(options_.timeout_seconds);
  const auto usecs = static_cast<time_t>((options_.timeout_seconds - static_cast<double>(secs)) * 1e6);
  cli.set_connection_timeout(secs, usecs);
  cli.set_read_timeout(secs, usecs);
  cli.set_write_timeout(secs, usecs);
  const std::string body = to_json(request).dump();
  std::string last_error;
  for (int attempt = 0; attempt <= options_.retries; ++attempt) {
    auto res = cli.Post(path_, body, "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200) throw ClientError(request.kind + " @ " + url_ + ": HTTP " + std::to_string(res->status));
    json j;
    try {
      j = json::parse(res->body);
    } catch (const json::parse_error&) {
      throw ClientError(request.kind + " @ " + url_ + ": response is not JSON");
    }
    WireResponse r = response_from_json(j);
    if (!r.ok) throw ClientError(request.kind + " @ " + url_ + ": server reported failure" + (r.error.empty() ? "" : ": " + r.error));
    return r;
  }
  throw ClientError(request.kind + " @ " + url_ + ": " + last_error + " after " + std::to_string(options_.retries + 1) +
                    " attempts");
}

bool MockTextGen::would_refuse(const std::string& prompt) const {
  if (refusal_rate_ <= 0.0) return false;
  return static_cast<double>(fnv1a(prompt) % 10000) < refusal_rate_ * 10000.0;
}

std::string MockTextGen::generate(const std::string& prompt) {
  if (would_refuse(prompt)) return kRefusal;
  std::string body = trim(prompt);
  if (body.empty()) throw ClientError("mock textgen: empty prompt");
  if (!is_ascii(body)) return "คำตอบ: " + body;
  while (!body.empty() && (body.back() == '?' || body.back() == '.' || body.back() == '!')) body.pop_back();
  if (!body.empty()) body[0] = static_cast<char>(std::tolower(static_cast<unsigned char>(body[0])));
  if (prompt.find('?') != std::string::npos) return "Here is the answer: " + body + ".";
  return "Sure. " + body + ".";
}

std::vector<std::uint8_t> MockTts::synthesize(const std::string& text, const std::string& voice) {
  if (text.empty()) throw ClientError("mock tts: empty text");
  return audio::encode_wav(mock_tts(text, voice), audio::SampleFormat::Pcm16, 1);
}

std::string MockTranslate::translate(const std::string& text, const std::string& source_lang,
                                     const std::string& target_lang) {
  if (trim(text).empty()) throw ClientError("mock translate: empty text");
  const std::string back = "[" + source_lang + "] ";
  if (text.starts_with(back)) return text.substr(back.size());
  return "[" + target_lang + "] " + text;
}

std::string MockCaptionAugment::augment(const std::string& caption) {
  if (mode_ == Mode::Identity) return caption;
  std::string base = trim(caption);
  if (!base.empty() && base.back() != '.') base += '.';
  return base + " The recording is clear, with no other sounds in the background.";
}

std::string HttpTextGen::generate(const std::string& prompt) { return t_.call({kind_, prompt, json::object()}).text; }

std::vector<std::uint8_t> HttpTts::synthesize(const std::string& text, const std::string& voice) {
  auto r = t_.call({"tts", text, json{{"voice", voice}}});
  if (r.audio.empty()) throw ClientError("tts @ " + t_.url() + ": response has no audio_b64");
  return r.audio;
}

std::string HttpTranslate::translate(const std::string& text, const std::string& source_lang,
                                     const std::string& target_lang) {
  return t_.call({"translate", text, json{{"source_lang", source_lang}, {"target_lang", target_lang}}}).text;
}

std::string HttpCaptionAugment::augment(const std::string& caption) {
  return t_.call({"caption_augment", caption, json::object()}).text;
}

std::string HttpQaGen::generate_qa(const std::string& request_prompt) {
  return t_.call({"qagen", request_prompt, json::object()}).text;
}

}  // namespace forge::data
