#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace forge::data {

// Wire contract shared by every remote client:
//   POST {"kind": ..., "text": ..., "params": {...}}
//   ->   {"ok": bool, "text": ...} or {"ok": bool, "audio_b64": ...}
struct WireRequest {
  std::string kind;
  std::string text;
  nlohmann::json params = nlohmann::json::object();
};

struct WireResponse {
  bool ok = false;
  std::string text;
  std::vector<std::uint8_t> audio;
  std::string error;
};

nlohmann::json to_json(const WireRequest& r);
WireResponse response_from_json(const nlohmann::json& j);

std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(std::string_view text);

struct HttpOptions {
  double timeout_seconds = 30.0;
  int retries = 2;  // extra attempts after the first on transport errors
};

// POSTs a WireRequest to an http:// URL. Throws ClientError after the last
// failed attempt or when the server answers ok=false.
class HttpTransport {
 public:
  HttpTransport(std::string url, HttpOptions options = {});
  WireResponse call(const WireRequest& request) const;
  const std::string& url() const { return url_; }

 private:
  std::string url_;
  std::string host_;
  int port_ = 80;
  std::string path_;
  HttpOptions options_;
};

// One request/response method per client kind.
class TextGenClient {
 public:
  virtual ~TextGenClient() = default;
  virtual std::string generate(const std::string& prompt) = 0;
};

class TtsClient {
 public:
  virtual ~TtsClient() = default;
  // WAV file bytes (16 kHz mono)
  virtual std::vector<std::uint8_t> synthesize(const std::string& text, const std::string& voice) = 0;
};

class TranslateClient {
 public:
  virtual ~TranslateClient() = default;
  virtual std::string translate(const std::string& text, const std::string& source_lang,
                                const std::string& target_lang) = 0;
};

class CaptionAugmentClient {
 public:
  virtual ~CaptionAugmentClient() = default;
  virtual std::string augment(const std::string& caption) = 0;
};

class QaGenClient {
 public:
  virtual ~QaGenClient() = default;
  // Raw client output; generate_qa_pairs parses and validates it.
  virtual std::string generate_qa(const std::string& request_prompt) = 0;
};

// Deterministic in-repo mocks: pure functions of the request.

// Answers instructions with a templated reply. A hash of the text decides
// whether to answer with a canned refusal instead (refusal_rate of inputs).
class MockTextGen : public TextGenClient {
 public:
  explicit MockTextGen(double refusal_rate = 0.0) : refusal_rate_(refusal_rate) {}
  std::string generate(const std::string& prompt) override;
  bool would_refuse(const std::string& prompt) const;
  static constexpr const char* kRefusal = "I'm sorry, as an AI assistant I cannot help with that.";

 private:
  double refusal_rate_;
};

class MockTts : public TtsClient {
 public:
  std::vector<std::uint8_t> synthesize(const std::string& text, const std::string& voice) override;
};

// Tagged passthrough: "[th] text" for en->th; translating back strips the tag.
class MockTranslate : public TranslateClient {
 public:
  std::string translate(const std::string& text, const std::string& source_lang,
                        const std::string& target_lang) override;
};

class MockCaptionAugment : public CaptionAugmentClient {
 public:
  enum class Mode { Identity, Elongate };
  explicit MockCaptionAugment(Mode mode = Mode::Elongate) : mode_(mode) {}
  std::string augment(const std::string& caption) override;

 private:
  Mode mode_;
};

// Builds QA JSON from simple sentence patterns; rules beside generate_qa.
class MockQaGen : public QaGenClient {
 public:
  std::string generate_qa(const std::string& request_prompt) override;
};

class HttpTextGen : public TextGenClient {
 public:
  HttpTextGen(std::string url, HttpOptions o = {}, std::string kind = "textgen")
      : t_(std::move(url), o), kind_(std::move(kind)) {}
  std::string generate(const std::string& prompt) override;

 private:
  HttpTransport t_;
  std::string kind_;
};

class HttpTts : public TtsClient {
 public:
  explicit HttpTts(std::string url, HttpOptions o = {}) : t_(std::move(url), o) {}
  std::vector<std::uint8_t> synthesize(const std::string& text, const std::string& voice) override;

 private:
  HttpTransport t_;
};

class HttpTranslate : public TranslateClient {
 public:
  explicit HttpTranslate(std::string url, HttpOptions o = {}) : t_(std::move(url), o) {}
  std::string translate(const std::string& text, const std::string& source_lang,
                        const std::string& target_lang) override;

 private:
  HttpTransport t_;
};

class HttpCaptionAugment : public CaptionAugmentClient {
 public:
  explicit HttpCaptionAugment(std::string url, HttpOptions o = {}) : t_(std::move(url), o) {}
  std::string augment(const std::string& caption) override;

 private:
  HttpTransport t_;
};

class HttpQaGen : public QaGenClient {
 public:
  explicit HttpQaGen(std::string url, HttpOptions o = {}) : t_(std::move(url), o) {}
  std::string generate_qa(const std::string& request_prompt) override;

 private:
  HttpTransport t_;
};

// Endpoint per client: "mock" or an http:// URL.
struct ClientsConfig {
  std::string textgen = "mock";
  std::string tts = "mock";
  std::string translate = "mock";
  std::string caption = "mock";
  std::string qagen = "mock";
  std::string judge = "mock";
  double refusal_rate = 0.0;  // mock textgen only
  HttpOptions http;
};

struct Clients {
  std::unique_ptr<TextGenClient> textgen;
  std::unique_ptr<TtsClient> tts;
  std::unique_ptr<TranslateClient> translate;
  std::unique_ptr<CaptionAugmentClient> caption;
  std::unique_ptr<QaGenClient> qagen;
  std::unique_ptr<TextGenClient> judge;
};

// mode_override is FORGE_CLIENT_MODE: "" keeps the config, "mock" forces
// every client to its mock, "live" requires every endpoint to be a URL.
Clients make_clients(const ClientsConfig& config, const std::string& mode_override = "");

}  // namespace forge::data
