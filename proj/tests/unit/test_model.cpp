#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <chrono>
#include <cmath>

#include "../support/gradcheck.hpp"
#include "forge/error.hpp"
#include "forge/model/audio_lm.hpp"

using namespace forge;
using namespace forge::model;
using forge::testing::random_tensor;

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.n_mels = 8;
  c.max_mel_frames = 64;
  c.d_s = 8;
  c.speech_layers = 1;
  c.speech_heads = 2;
  c.d_b = 4;
  c.event_layers = 1;
  c.event_heads = 2;
  c.d_q = 8;
  c.num_queries = 2;
  c.adapter_layers = 1;
  c.adapter_heads = 2;
  c.window_frames = 3;
  c.d_llm = 8;
  c.lm_layers = 1;
  c.lm_heads = 2;
  c.context = 48;
  c.mlp_ratio = 2;
  c.seed = 7;
  return c;
}

std::vector<float> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

double max_abs_diff(const Tensor& a, const Tensor& b) {
  REQUIRE(a.shape() == b.shape());
  double m = 0.0;
  for (std::size_t i = 0; i < a.data().size(); ++i)
    m = std::max(m, static_cast<double>(std::abs(a.data()[i] - b.data()[i])));
  return m;
}

void randomize_lora_b(AudioLM& m, Rng& rng) {
  for (auto& p : m.parameters()) {
    if (p.name.starts_with("lora.") && p.name.ends_with(".B")) {
      for (auto& x : p.tensor.mutable_data()) x = static_cast<float>(rng.normal() * 0.5);
    }
  }
}

}  // namespace

TEST_CASE("encode geometry with defaults") {
  AudioLM m(ModelConfig{});
  NoGradGuard ng;
  Rng rng(1);
  Tensor mel = random_tensor(rng, {98, 80}, false);
  Tensor fused = m.encode(mel);
  CHECK(fused.dim(0) == 25);
  CHECK(fused.dim(1) == 96);
  CHECK(speech_frames(98) == 25);
  Tensor tokens = m.adapt(fused);
  CHECK(tokens.dim(0) == 2);
  CHECK(tokens.dim(1) == 64);
}

TEST_CASE("speech frame count matches the subsampling law") {
  AudioLM m(tiny_config());
  NoGradGuard ng;
  Rng rng(2);
  for (int t = 4; t <= 40; ++t) {
    Tensor fused = m.encode(random_tensor(rng, {t, 8}, false));
    const int expect = ((t + 1) / 2 + 1) / 2;
    CHECK(fused.dim(0) == expect);
    CHECK(speech_frames(t) == expect);
  }
}

TEST_CASE("encode rejects short or misshaped input") {
  AudioLM m(tiny_config());
  CHECK_THROWS_AS(m.encode(Tensor::zeros({3, 8})), DimensionError);
  CHECK_THROWS_AS(m.encode(Tensor::zeros({10, 7})), DimensionError);
  CHECK_THROWS_AS(m.adapt(Tensor::zeros({5, 11})), DimensionError);
}

TEST_CASE("zero mel gives finite features") {
  AudioLM m(ModelConfig{});
  NoGradGuard ng;
  Tensor fused = m.encode(Tensor::zeros({98, 80}));
  for (float v : fused.data()) REQUIRE(std::isfinite(v));
  for (float v : m.adapt(fused).data()) REQUIRE(std::isfinite(v));
}

TEST_CASE("duplicated batch entries encode identically") {
  AudioLM m(tiny_config());
  NoGradGuard ng;
  audio::MelSpectrogram mel;
  mel.frames = 20;
  mel.n_mels = 8;
  Rng rng(3);
  for (int i = 0; i < 160; ++i) mel.values.push_back(static_cast<float>(rng.normal()));
  std::vector<audio::MelSpectrogram> batch{mel, mel};
  auto out = m.encode_batch(batch);
  REQUIRE(out.size() == 2);
  CHECK(values(out[0]) == values(out[1]));
}

TEST_CASE("event rows are aligned by nearest index") {
  // With a single speech frame the event row must be the middle input frame.
  ModelConfig c = tiny_config();
  AudioLM m(c);
  NoGradGuard ng;
  Rng rng(4);
  Tensor mel = random_tensor(rng, {4, 8}, false);
  Tensor fused = m.encode(mel);
  REQUIRE(fused.dim(0) == 1);
  Tensor event = m.event_encoder().forward(mel);
  for (int k = 0; k < c.d_b; ++k) CHECK(fused.at(0, c.d_s + k) == event.at(2, k));
}

TEST_CASE("adapter token count law") {
  CHECK(adapter_tokens(25, 17, 1) == 2);
  CHECK(adapter_tokens(100, 25, 2) == 8);
  NoGradGuard ng;
  Rng rng(5);
  for (int w : {1, 5, 17, 25}) {
    for (int k : {1, 2, 4}) {
      ModelConfig c = tiny_config();
      c.window_frames = w;
      c.num_queries = k;
      AudioLM m(c);
      for (int te = 1; te <= 60; ++te) {
        Tensor out = m.adapt(random_tensor(rng, {te, c.d_fused()}, false));
        const int expect = (te + w - 1) / w * k;
        REQUIRE(out.dim(0) == expect);
        REQUIRE(out.dim(1) == c.d_llm);
        REQUIRE(adapter_tokens(te, w, k) == expect);
      }
    }
  }
}

TEST_CASE("permuting frames within a window only touches that window") {
  ModelConfig c = tiny_config();
  c.adapter_window_pos = false;
  c.window_frames = 5;
  AudioLM m(c);
  NoGradGuard ng;
  Rng rng(6);
  Tensor fused = random_tensor(rng, {13, c.d_fused()}, false);
  std::vector<float> permuted = values(fused);
  // reverse rows 5..9 (the second window)
  const int d = c.d_fused();
  for (int i = 0; i < 2; ++i)
    for (int k = 0; k < d; ++k) std::swap(permuted[(5 + i) * d + k], permuted[(9 - i) * d + k]);
  Tensor a = m.adapt(fused);
  Tensor b = m.adapt(Tensor::from({13, d}, permuted));
  CHECK(max_abs_diff(a, b) < 1e-5);

  // With window positions the same permutation is visible.
  ModelConfig cp = c;
  cp.adapter_window_pos = true;
  AudioLM mp(cp);
  Tensor ap = mp.adapt(fused);
  Tensor bp = mp.adapt(Tensor::from({13, d}, permuted));
  const auto k = cp.num_queries;
  double other = 0.0, mid = 0.0;
  for (int r = 0; r < ap.dim(0); ++r)
    for (int j = 0; j < cp.d_llm; ++j) {
      const double diff = std::abs(ap.at(r, j) - bp.at(r, j));
      if (r / k == 1) mid = std::max(mid, diff);
      else other = std::max(other, diff);
    }
  CHECK(other == 0.0);
  CHECK(mid > 1e-6);
}

TEST_CASE("lm is causal") {
  AudioLM m(tiny_config());
  NoGradGuard ng;
  Rng rng(7);
  Tensor audio = random_tensor(rng, {4, 8}, false);
  auto prompt = to_ids("hi");
  auto r1 = to_ids("abcd");
  auto r2 = to_ids("abcz");
  Tensor l1 = m.lm_forward(audio, prompt, r1);
  Tensor l2 = m.lm_forward(audio, prompt, r2);
  REQUIRE(l1.dim(0) == 1 + 4 + 2 + 4);
  double past = 0.0;
  for (std::int64_t i = 0; i + 1 < l1.dim(0); ++i)
    for (std::int64_t v = 0; v < kVocab; ++v) past = std::max(past, static_cast<double>(std::abs(l1.at(i, v) - l2.at(i, v))));
  CHECK(past < 1e-6);
  double last = 0.0;
  for (std::int64_t v = 0; v < kVocab; ++v)
    last = std::max(last, static_cast<double>(std::abs(l1.at(l1.dim(0) - 1, v) - l2.at(l1.dim(0) - 1, v))));
  CHECK(last > 0.0);
}

TEST_CASE("sequence layout") {
  AudioLM m(tiny_config());
  NoGradGuard ng;
  Rng rng(8);
  Tensor audio = random_tensor(rng, {3, 8}, false);
  auto resp = to_ids("ok");
  // null prompt: [BOS] + audio + response
  CHECK(m.lm_forward(audio, {}, resp).dim(0) == 1 + 3 + 2);
  CHECK(m.lm_forward(audio, {}, resp, true).dim(0) == 1 + 3 + 2 + 1);

  // no audio tokens is a plain text forward
  auto text = to_ids("hello");
  Tensor a = m.lm_forward(Tensor(), {}, text);
  std::vector<std::int64_t> ids{kBos};
  ids.insert(ids.end(), text.begin(), text.end());
  Tensor b = m.lm().forward_embeddings(m.lm().embed_tokens(ids));
  CHECK(values(a) == values(b));

  // audio rows sit between BOS and the text
  std::vector<Tensor> rows{m.lm().embed_tokens(std::vector<std::int64_t>{kBos}), audio,
                           m.lm().embed_tokens(resp)};
  Tensor manual = m.lm().forward_embeddings(concat(rows, 0));
  CHECK(values(manual) == values(m.lm_forward(audio, {}, resp)));
}

TEST_CASE("context overflow names lengths") {
  AudioLM m(tiny_config());
  NoGradGuard ng;
  Tensor audio = Tensor::zeros({10, 8});
  std::vector<std::int64_t> prompt(30, 'a'), resp(10, 'b');
  try {
    m.lm_forward(audio, prompt, resp);
    FAIL("expected overflow");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("51") != std::string::npos);
    CHECK(msg.find("48") != std::string::npos);
  }
}

TEST_CASE("lora constants and attach no-op") {
  AudioLM m(tiny_config());
  NoGradGuard ng;
  Rng rng(9);
  Tensor audio = random_tensor(rng, {3, 8}, false);
  auto prompt = to_ids("q?");
  auto resp = to_ids("answer");
  Tensor before = m.lm_forward(audio, prompt, resp);
  m.attach_lora(8, 32.0f, {LoraTarget::Query, LoraTarget::Value});
  CHECK(m.lora_scale() == 4.0f);
  Tensor after = m.lm_forward(audio, prompt, resp);
  CHECK(values(before) == values(after));
  CHECK_THROWS_AS(m.attach_lora(), Error);

  std::size_t lora_params = 0;
  for (const auto& p : m.parameters()) {
    if (!p.name.starts_with("lora.")) continue;
    ++lora_params;
    if (p.name.ends_with(".B")) {
      for (float v : p.tensor.data()) REQUIRE(v == 0.0f);
    }
  }
  CHECK(lora_params == 4 * tiny_config().lm_layers);
}

TEST_CASE("lora merge matches delta path") {
  ModelConfig c = tiny_config();
  AudioLM m(c);
  m.attach_lora();
  Rng rng(10);
  randomize_lora_b(m, rng);
  NoGradGuard ng;
  Tensor audio = random_tensor(rng, {3, 8}, false);
  auto prompt = to_ids("say");
  auto resp = to_ids("something");
  Tensor unmerged = m.lm_forward(audio, prompt, resp);
  GenerateOptions opt;
  opt.max_new = 12;
  auto g1 = m.generate(audio, prompt, opt);

  m.merge_lora();
  CHECK_FALSE(m.lora_attached());
  for (const auto& p : m.parameters()) CHECK_FALSE(p.name.starts_with("lora."));
  Tensor merged = m.lm_forward(audio, prompt, resp);
  CHECK(max_abs_diff(merged, unmerged) < 1e-5);
  auto g2 = m.generate(audio, prompt, opt);
  CHECK(g1.bytes == g2.bytes);
  CHECK(g1.hit_eos == g2.hit_eos);
}

TEST_CASE("generate") {
  AudioLM m(tiny_config());
  Rng rng(11);
  Tensor audio = random_tensor(rng, {2, 8}, false);
  auto prompt = to_ids("p");
  GenerateOptions opt;
  opt.max_new = 10;
  auto a = m.generate(audio, prompt, opt);
  auto b = m.generate(audio, prompt, opt);
  CHECK(a.bytes == b.bytes);
  CHECK(a.bytes.size() <= 10);

  opt.max_new = 0;
  auto empty = m.generate(audio, prompt, opt);
  CHECK(empty.bytes.empty());
  CHECK_FALSE(empty.hit_eos);

  opt.max_new = 10;
  opt.temperature = 1.0f;
  opt.seed = 3;
  auto s1 = m.generate(audio, prompt, opt);
  auto s2 = m.generate(audio, prompt, opt);
  CHECK(s1.bytes == s2.bytes);

  // budget is capped by the context window
  opt.temperature = 0.0f;
  opt.max_new = 1000;
  std::vector<std::int64_t> long_prompt(40, 'x');
  auto capped = m.generate(audio, long_prompt, opt);
  CHECK(capped.bytes.size() <= static_cast<std::size_t>(48 - 1 - 2 - 40));
}

TEST_CASE("utf8 validation") {
  const std::string thai = "\xe0\xb8\xaa\xe0\xb8\xa7\xe0\xb8\xb1\xe0\xb8\xaa\xe0\xb8\x94\xe0\xb8\xb5";
  std::vector<std::uint8_t> ok(thai.begin(), thai.end());
  CHECK(is_valid_utf8(ok));
  std::vector<std::uint8_t> cut(ok.begin(), ok.end() - 1);
  CHECK_FALSE(is_valid_utf8(cut));
  CHECK_FALSE(is_valid_utf8(std::vector<std::uint8_t>{0xC0, 0x80}));  // overlong
  CHECK_FALSE(is_valid_utf8(std::vector<std::uint8_t>{0xED, 0xA0, 0x80}));  // surrogate
  CHECK(is_valid_utf8(std::vector<std::uint8_t>{}));
  CHECK(lossy_utf8(ok) == thai);
  const std::string fixed = lossy_utf8(cut);
  CHECK(fixed == thai.substr(0, thai.size() - 3) + "\xEF\xBF\xBD\xEF\xBF\xBD");
  std::vector<std::uint8_t> fixed_bytes(fixed.begin(), fixed.end());
  CHECK(is_valid_utf8(fixed_bytes));
  CHECK(lossy_utf8(std::vector<std::uint8_t>{'a', 0x89, 'b'}) == "a\xEF\xBF\xBD" "b");
}

TEST_CASE("parameter naming") {
  AudioLM m(tiny_config());
  m.attach_lora();
  std::set<std::string> seen;
  for (const auto& p : m.parameters()) {
    CHECK(seen.insert(p.name).second);
    const bool known = p.name.starts_with("speech_encoder.") || p.name.starts_with("event_encoder.") ||
                       p.name.starts_with("adapter.") || p.name.starts_with("lm.") ||
                       p.name.starts_with("lora.");
    CHECK(known);
  }
  CHECK(seen.count("adapter.query_embed") == 1);
  CHECK(seen.count("lm.tok_embed") == 1);
  CHECK(seen.count("lora.lm.layers.0.attn.q.A") == 1);
  CHECK(seen.count("lora.lm.layers.0.attn.v.B") == 1);
}

TEST_CASE("sinusoidal positions are constants") {
  ModelConfig c = tiny_config();
  c.positional = PositionalKind::Sinusoidal;
  AudioLM m(c);
  for (const auto& p : m.parameters()) CHECK_FALSE(p.name.ends_with(".pos"));
  NoGradGuard ng;
  Tensor fused = m.encode(Tensor::zeros({12, 8}));
  for (float v : fused.data()) CHECK(std::isfinite(v));
}

TEST_CASE("config validation") {
  ModelConfig c;
  c.d_llm = 66;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = ModelConfig{};
  c.window_frames = 0;
  CHECK_THROWS_AS(AudioLM{c}, ConfigError);
  CHECK(positional_from_string("sinusoidal") == PositionalKind::Sinusoidal);
  CHECK_THROWS_AS(positional_from_string("rope"), ConfigError);
}

TEST_CASE("full model gradient check") {
  const auto t0 = std::chrono::steady_clock::now();
  ModelConfig c = tiny_config();
  AudioLM m(c);
  m.attach_lora();
  Rng rng(12);
  randomize_lora_b(m, rng);
  Tensor mel = random_tensor(rng, {14, c.n_mels}, false);
  auto prompt = to_ids("ab");
  auto resp = to_ids("xyz");
  const std::int64_t n_audio = adapter_tokens(speech_frames(14), c.window_frames, c.num_queries);
  const auto total = 1 + n_audio + 2 + 3 + 1;
  std::vector<std::int64_t> targets(static_cast<std::size_t>(total), kIgnoreIndex);
  const std::int64_t first = 1 + n_audio + 2 - 1;
  for (int i = 0; i < 3; ++i) targets[static_cast<std::size_t>(first + i)] = resp[i];
  targets[static_cast<std::size_t>(first + 3)] = kEos;

  auto loss_fn = [&]() {
    Tensor tokens = m.adapt(m.encode(mel));
    return cross_entropy(m.lm_forward(tokens, prompt, resp, true), targets, kIgnoreIndex);
  };
  auto res = forge::testing::check_loss(loss_fn, m.parameters(), 1e-3, 1.0, 24);
  INFO(res.worst);
  CHECK(res.checked > 500);
  CHECK(res.max_rel_err < 1e-2);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  CHECK(secs < 60.0);
}
