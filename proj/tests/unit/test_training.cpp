#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>

#include "../support/gradcheck.hpp"
#include "forge/error.hpp"
#include "forge/training/checkpoint.hpp"
#include "forge/training/sequence.hpp"
#include "forge/training/trainer.hpp"

using namespace forge;
using namespace forge::training;
using forge::model::AudioLM;
using forge::model::kEos;
using forge::model::kIgnoreIndex;
using forge::testing::random_tensor;

namespace {

model::ModelConfig tiny_config(std::uint64_t seed = 3) {
  model::ModelConfig c;
  c.n_mels = 8;
  c.max_mel_frames = 64;
  c.d_s = 8;
  c.speech_layers = 1;
  c.speech_heads = 2;
  c.d_b = 4;
  c.event_layers = 1;
  c.event_heads = 2;
  c.d_q = 8;
  c.num_queries = 1;
  c.adapter_layers = 1;
  c.adapter_heads = 2;
  c.window_frames = 4;
  c.d_llm = 16;
  c.lm_layers = 1;
  c.lm_heads = 2;
  c.context = 64;
  c.mlp_ratio = 2;
  c.seed = seed;
  return c;
}

std::vector<TrainItem> make_items(const AudioLM& m, int n, std::uint64_t seed = 5) {
  NoGradGuard ng;
  Rng rng(seed);
  const char* responses[] = {"ok", "yes", "no way", "hello", "abc", "xyz!"};
  std::vector<TrainItem> items;
  for (int i = 0; i < n; ++i) {
    Tensor mel = random_tensor(rng, {12 + 2 * i, 8}, false);
    std::optional<std::string> prompt;
    if (i % 3 != 2) prompt = "say";
    items.push_back({"ex" + std::to_string(i), m.encode(mel).detach(), prompt, responses[i % 6]});
  }
  return items;
}

std::map<std::string, std::vector<float>> snapshot(const AudioLM& m) {
  std::map<std::string, std::vector<float>> s;
  for (const auto& p : m.parameters()) s[p.name] = {p.tensor.data().begin(), p.tensor.data().end()};
  return s;
}

std::set<std::string> changed(const std::map<std::string, std::vector<float>>& before, const AudioLM& m) {
  std::set<std::string> out;
  for (const auto& p : m.parameters()) {
    auto it = before.find(p.name);
    if (it == before.end()) continue;  // created after the snapshot
    std::vector<float> now(p.tensor.data().begin(), p.tensor.data().end());
    if (std::memcmp(now.data(), it->second.data(), now.size() * sizeof(float)) != 0) out.insert(p.name);
  }
  return out;
}

std::vector<std::uint8_t> file_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::filesystem::path temp_dir(const std::string& name) {
  auto d = std::filesystem::temp_directory_path() / ("forge_test_training_" + name);
  std::filesystem::remove_all(d);
  std::filesystem::create_directories(d);
  return d;
}

Tensor forward_all(const AudioLM& m, const TrainItem& item) {
  NoGradGuard ng;
  auto prompt = model::to_ids(item.prompt.value_or(""));
  return m.lm_forward(m.adapt(item.features), prompt, model::to_ids(item.response), true);
}

}  // namespace

TEST_CASE("sequence layout enumerates positions") {
  auto plan = build_sequence(2, std::string_view("hi"), "ok", 512);
  CHECK(plan.length() == 8);
  CHECK(plan.scored() == 3);
  // positions: BOS a1 a2 h i o k EOS
  const std::vector<std::int64_t> expect{kIgnoreIndex, kIgnoreIndex, kIgnoreIndex, kIgnoreIndex, 'o', 'k', kEos,
                                         kIgnoreIndex};
  CHECK(plan.targets == expect);

  auto speechif = build_sequence(2, std::nullopt, "ok", 512);
  CHECK(speechif.prompt.empty());
  CHECK(speechif.length() == 6);
  CHECK(speechif.scored() == 3);

  auto empty = build_sequence(3, std::string_view("p"), "", 512);
  CHECK(empty.scored() == 1);
  CHECK(empty.targets[static_cast<std::size_t>(empty.length() - 2)] == kEos);

  auto text = build_sequence(0, std::string_view("ab"), "c", 512, true);
  const std::vector<std::int64_t> text_expect{'a', 'b', 'c', kEos, kIgnoreIndex};
  CHECK(text.targets == text_expect);

  // 1 + 500 + 5 + 5 + 1 fills the context exactly
  CHECK(build_sequence(500, std::string_view("hello"), "world", 512).length() == 512);
  CHECK_THROWS_AS(build_sequence(501, std::string_view("hello"), "world", 512), DimensionError);
}

TEST_CASE("trainable sets per phase") {
  AudioLM m(tiny_config());
  auto pre = trainable_params(m, Phase::Pretrain);
  CHECK_FALSE(pre.empty());
  for (const auto& n : pre) CHECK(n.starts_with("adapter."));
  std::size_t adapter_total = 0;
  for (const auto& p : m.parameters()) adapter_total += p.name.starts_with("adapter.");
  CHECK(pre.size() == adapter_total);

  CHECK_THROWS_AS(trainable_params(m, Phase::Sft), ConfigError);
  m.attach_lora();
  CHECK_THROWS_AS(trainable_params(m, Phase::Pretrain), ConfigError);
  auto sft = trainable_params(m, Phase::Sft);
  std::size_t lora = 0;
  for (const auto& n : sft) {
    CHECK((n.starts_with("adapter.") || n.starts_with("lora.")));
    lora += n.starts_with("lora.");
    CHECK_FALSE(n.starts_with("speech_encoder."));
  }
  CHECK(lora == 4);
  CHECK(sft.size() == adapter_total + lora);
}

TEST_CASE("masked positions get exactly zero logit gradient") {
  AudioLM m(tiny_config());
  auto items = make_items(m, 1);
  Tensor audio;
  {
    NoGradGuard ng;
    audio = m.adapt(items[0].features);
  }
  auto plan = build_sequence(audio.dim(0), std::string_view(*items[0].prompt), items[0].response, 64);
  Tensor logits = m.lm_forward(audio, plan.prompt, plan.response, true).detach().clone_leaf(true);
  backward(cross_entropy(logits, plan.targets, kIgnoreIndex));
  for (std::int64_t i = 0; i < plan.length(); ++i) {
    double row = 0.0;
    for (std::int64_t v = 0; v < model::kVocab; ++v) row += std::abs(logits.grad()[static_cast<std::size_t>(i * model::kVocab + v)]);
    if (plan.targets[static_cast<std::size_t>(i)] == kIgnoreIndex) CHECK(row == 0.0);
    else CHECK(row > 0.0);
  }
}

TEST_CASE("first-step loss is near uniform") {
  AudioLM m(model::ModelConfig{});
  Rng rng(17);
  std::vector<TrainItem> items;
  {
    NoGradGuard ng;
    for (int i = 0; i < 4; ++i) {
      std::string resp;
      for (int k = 0; k < 24; ++k) resp.push_back(static_cast<char>(rng.below(256)));
      items.push_back({"u" + std::to_string(i), m.encode(random_tensor(rng, {40, 80}, false)).detach(), std::nullopt, resp});
    }
  }
  TrainConfig cfg;
  cfg.steps = 1;
  cfg.batch_size = 4;
  Trainer t(m, cfg);
  auto r = t.train_step(t.next_batch(items));
  CHECK(std::abs(r.loss - std::log(259.0)) < 0.7);
  CHECK(r.step == 1);
  CHECK(r.tokens == 4 * 25);
}

TEST_CASE("identical runs give bitwise identical parameters") {
  AudioLM a(tiny_config()), b(tiny_config());
  auto ia = make_items(a, 4), ib = make_items(b, 4);
  TrainConfig cfg;
  cfg.steps = 5;
  cfg.batch_size = 2;
  cfg.seed = 9;
  run_phase(a, ia, cfg);
  run_phase(b, ib, cfg);
  auto sa = snapshot(a), sb = snapshot(b);
  CHECK(sa == sb);
}

TEST_CASE("phase freeze law") {
  AudioLM m(tiny_config());
  auto items = make_items(m, 4);
  auto before = snapshot(m);
  TrainConfig cfg;
  cfg.steps = 20;
  cfg.batch_size = 2;
  cfg.lr = 1e-2f;
  run_phase(m, items, cfg);
  auto moved = changed(before, m);
  CHECK_FALSE(moved.empty());
  for (const auto& n : moved) CHECK(n.starts_with("adapter."));

  m.attach_lora();
  before = snapshot(m);
  cfg.phase = Phase::Sft;
  run_phase(m, items, cfg);
  moved = changed(before, m);
  bool any_lora = false;
  for (const auto& n : moved) {
    CHECK((n.starts_with("adapter.") || n.starts_with("lora.")));
    any_lora |= n.starts_with("lora.");
  }
  CHECK(any_lora);

  // base stage touches only the LM
  AudioLM base(tiny_config());
  auto text = text_items(make_items(base, 3));
  CHECK(text.size() == 5);
  before = snapshot(base);
  cfg.phase = Phase::Base;
  run_phase(base, text, cfg);
  moved = changed(before, base);
  CHECK_FALSE(moved.empty());
  for (const auto& n : moved) CHECK(n.starts_with("lm."));
}

TEST_CASE("training reduces loss") {
  AudioLM m(tiny_config());
  auto items = make_items(m, 3);
  std::vector<const TrainItem*> all;
  for (auto& i : items) all.push_back(&i);
  TrainConfig cfg;
  cfg.phase = Phase::Base;
  cfg.steps = 60;
  cfg.batch_size = 6;
  cfg.lr = 1e-2f;
  auto text = text_items(items);
  auto res = run_phase(m, text, cfg);
  CHECK(res.reports.back().loss < res.reports.front().loss * 0.7);
  for (const auto& r : res.reports) CHECK(r.grad_norm >= 0.0);
}

TEST_CASE("non-finite values abort the step") {
  AudioLM m(tiny_config());
  auto items = make_items(m, 2);
  m.adapter().out_proj.weight.mutable_data()[0] = std::numeric_limits<float>::quiet_NaN();
  TrainConfig cfg;
  cfg.steps = 1;
  Trainer t(m, cfg);
  auto before = snapshot(m);
  CHECK_THROWS_AS(t.train_step(t.next_batch(items)), Error);
  CHECK(t.step() == 0);
  auto after = snapshot(m);
  // NaN != NaN, so compare bytes
  for (const auto& [name, v] : before)
    CHECK(std::memcmp(v.data(), after[name].data(), v.size() * sizeof(float)) == 0);
}

TEST_CASE("invalid train config") {
  AudioLM m(tiny_config());
  TrainConfig cfg;
  cfg.steps = 0;
  CHECK_THROWS_AS(Trainer(m, cfg), ConfigError);
  CHECK(phase_from_string("sft") == Phase::Sft);
  CHECK_THROWS_AS(phase_from_string("finetune"), ConfigError);
}

TEST_CASE("checkpoint round trip") {
  auto dir = temp_dir("roundtrip");
  AudioLM m(tiny_config());
  auto items = make_items(m, 3);
  TrainConfig cfg;
  cfg.steps = 3;
  cfg.batch_size = 3;
  RunOptions opt;
  opt.out_dir = dir;
  auto res = run_phase(m, items, cfg, opt);
  REQUIRE(std::filesystem::exists(res.checkpoint));
  CHECK_FALSE(std::filesystem::exists(dir / "pretrain.ckpt.tmp"));

  // metrics log: one JSON line per step
  std::ifstream log(dir / "pretrain_metrics.jsonl");
  int lines = 0;
  for (std::string line; std::getline(log, line);) {
    ++lines;
    CHECK(line.find("\"loss\"") != std::string::npos);
  }
  CHECK(lines == 3);

  AudioLM other(tiny_config(99));
  auto report = load_checkpoint(res.checkpoint, other);
  CHECK(report.warnings.empty());
  CHECK(report.state.step == 3);
  CHECK(report.state.phase == Phase::Pretrain);
  for (const auto& it : items) {
    auto a = forward_all(m, it), b = forward_all(other, it);
    CHECK(std::memcmp(a.data().data(), b.data().data(), a.data().size() * sizeof(float)) == 0);
  }

  // save -> load -> save is byte-identical
  TrainConfig cfg2 = cfg;
  Trainer t(other, cfg2);
  auto r2 = load_checkpoint(res.checkpoint, other, &t.optimizer());
  CHECK(r2.optimizer_restored);
  save_checkpoint(dir / "again.ckpt", other, &t.optimizer(), r2.state);
  CHECK(file_bytes(res.checkpoint) == file_bytes(dir / "again.ckpt"));
}

TEST_CASE("resume from checkpoint matches uninterrupted training") {
  auto dir = temp_dir("resume");
  TrainConfig cfg;
  cfg.steps = 4;
  cfg.batch_size = 3;  // whole epoch per batch, so shuffle state is just the rng
  cfg.seed = 11;

  AudioLM straight(tiny_config());
  auto items = make_items(straight, 3);
  run_phase(straight, items, cfg);

  AudioLM first(tiny_config());
  cfg.steps = 2;
  RunOptions opt;
  opt.out_dir = dir;
  auto half = run_phase(first, items, cfg, opt);

  AudioLM resumed(tiny_config(42));
  cfg.steps = 2;
  Trainer t(resumed, cfg);
  auto rep = load_checkpoint(half.checkpoint, resumed, &t.optimizer());
  REQUIRE(rep.optimizer_restored);
  t.rng().set_state(rep.state.rng);
  t.set_step(static_cast<std::int64_t>(rep.state.step));
  for (int i = 0; i < 2; ++i) t.train_step(t.next_batch(items));
  CHECK(t.step() == 4);
  CHECK(snapshot(resumed) == snapshot(straight));
}

TEST_CASE("corrupted checkpoints are rejected") {
  auto dir = temp_dir("corrupt");
  AudioLM m(tiny_config());
  save_checkpoint(dir / "m.ckpt", m, nullptr, {});
  auto bytes = file_bytes(dir / "m.ckpt");

  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  try {
    decode_tensor_file(bad_magic);
    FAIL("expected magic error");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("magic") != std::string::npos);
  }

  auto bad_version = bytes;
  bad_version[4] = 7;
  CHECK_THROWS_AS(decode_tensor_file(bad_version), FormatError);

  auto truncated = bytes;
  truncated.resize(bytes.size() - 10);
  CHECK_THROWS_AS(decode_tensor_file(truncated), FormatError);

  auto trailing = bytes;
  trailing.push_back(0);
  CHECK_THROWS_AS(decode_tensor_file(trailing), FormatError);

  // shape table mismatch: same names, different widths
  model::ModelConfig wide = tiny_config();
  wide.d_llm = 32;
  AudioLM other(wide);
  try {
    load_checkpoint(dir / "m.ckpt", other);
    FAIL("expected shape error");
  } catch (const FormatError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("model expects") != std::string::npos);
  }

  // a tampered dimension field no longer matches the payload
  TensorFile f = decode_tensor_file(bytes);
  f.tensors[0].dims[0] += 1;
  CHECK_THROWS_AS(encode_tensor_file(f), FormatError);
}

TEST_CASE("pretrain checkpoint loads into sft") {
  auto dir = temp_dir("phases");
  AudioLM pre(tiny_config());
  auto items = make_items(pre, 3);
  TrainConfig cfg;
  cfg.steps = 3;
  RunOptions opt;
  opt.out_dir = dir;
  auto res = run_phase(pre, items, cfg, opt);

  AudioLM sft(tiny_config(77));
  sft.attach_lora();
  auto lora_before = snapshot(sft);
  auto report = load_checkpoint(res.checkpoint, sft);
  CHECK(report.warnings.size() == 4);
  for (const auto& w : report.warnings) CHECK(w.find("lora.") != std::string::npos);
  auto after = snapshot(sft);
  auto src = snapshot(pre);
  for (const auto& [name, v] : src) CHECK(after[name] == v);
  for (const auto& [name, v] : lora_before)
    if (name.starts_with("lora.")) CHECK(after[name] == v);

  // an sft checkpoint needs LoRA on the receiving model
  cfg.phase = Phase::Sft;
  opt.out_dir = dir / "sft";
  auto sres = run_phase(sft, items, cfg, opt);
  AudioLM plain(tiny_config());
  try {
    load_checkpoint(sres.checkpoint, plain);
    FAIL("expected lora error");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("attach LoRA") != std::string::npos);
  }
}
