#include "forge/data/clients.hpp"
#include "forge/error.hpp"
#include "forge/eval/judge.hpp"

namespace forge::data {

Clients make_clients(const ClientsConfig& config, const std::string& mode_override) {
  if (!mode_override.empty() && mode_override != "mock" && mode_override != "live") {
    throw ConfigError("FORGE_CLIENT_MODE must be mock or live, got '" + mode_override + "'");
  }
  const bool force_mock = mode_override == "mock";
  auto endpoint = [&](const std::string& name, const std::string& value) -> std::string {
    if (force_mock) return "mock";
    if (mode_override == "live" && value == "mock") {
      throw ConfigError("FORGE_CLIENT_MODE=live but clients." + name + " is 'mock'");
    }
    return value;
  };
  Clients c;
  const auto textgen = endpoint("textgen", config.textgen);
  c.textgen = textgen == "mock" ? std::unique_ptr<TextGenClient>(std::make_unique<MockTextGen>(config.refusal_rate))
                                : std::make_unique<HttpTextGen>(textgen, config.http);
  const auto tts = endpoint("tts", config.tts);
  c.tts = tts == "mock" ? std::unique_ptr<TtsClient>(std::make_unique<MockTts>()) : std::make_unique<HttpTts>(tts, config.http);
  const auto tr = endpoint("translate", config.translate);
  c.translate = tr == "mock" ? std::unique_ptr<TranslateClient>(std::make_unique<MockTranslate>())
                             : std::make_unique<HttpTranslate>(tr, config.http);
  const auto cap = endpoint("caption", config.caption);
  c.caption = cap == "mock" ? std::unique_ptr<CaptionAugmentClient>(std::make_unique<MockCaptionAugment>())
                            : std::make_unique<HttpCaptionAugment>(cap, config.http);
  const auto qa = endpoint("qagen", config.qagen);
  c.qagen = qa == "mock" ? std::unique_ptr<QaGenClient>(std::make_unique<MockQaGen>())
                         : std::make_unique<HttpQaGen>(qa, config.http);
  const auto judge = endpoint("judge", config.judge);
  c.judge = judge == "mock" ? std::unique_ptr<TextGenClient>(std::make_unique<eval::MockJudge>())
                            : std::make_unique<HttpTextGen>(judge, config.http, "judge");
  return c;
}

}  // namespace forge::data
