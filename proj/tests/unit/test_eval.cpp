#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>

#include "forge/data/clients.hpp"
#include "forge/data/synth.hpp"
#include "forge/error.hpp"
#include "forge/eval/complexif.hpp"
#include "forge/eval/harness.hpp"
#include "forge/eval/judge.hpp"
#include "forge/eval/metrics.hpp"
#include "forge/numerics/rng.hpp"
#include "json.hpp"

using namespace forge;
using namespace forge::eval;
namespace fs = std::filesystem;

namespace {

nlohmann::json golden() {
  std::ifstream f(std::string(FORGE_TEST_DIR) + "/golden/metrics_golden.json");
  REQUIRE(f.good());
  return nlohmann::json::parse(f);
}

Tokens toks(const nlohmann::json& j) { return j.get<Tokens>(); }

// plain recursion over (i, j), memo only for speed
std::int64_t edit_oracle(const Tokens& h, const Tokens& r) {
  std::map<std::pair<std::size_t, std::size_t>, std::int64_t> memo;
  std::function<std::int64_t(std::size_t, std::size_t)> go = [&](std::size_t i, std::size_t j) -> std::int64_t {
    if (i == h.size()) return static_cast<std::int64_t>(r.size() - j);
    if (j == r.size()) return static_cast<std::int64_t>(h.size() - i);
    auto key = std::make_pair(i, j);
    if (auto it = memo.find(key); it != memo.end()) return it->second;
    const auto v = std::min({go(i + 1, j) + 1, go(i, j + 1) + 1, go(i + 1, j + 1) + (h[i] == r[j] ? 0 : 1)});
    return memo[key] = v;
  };
  return go(0, 0);
}

// every injective partial matching between equal tokens; min chunks among maximum ones
std::pair<std::int64_t, std::int64_t> meteor_oracle(const Tokens& h, const Tokens& r) {
  std::int64_t best_m = 0, best_c = 0;
  std::vector<std::pair<std::size_t, std::size_t>> acc;
  std::vector<bool> used(r.size(), false);
  std::function<void(std::size_t)> rec = [&](std::size_t i) {
    if (i == h.size()) {
      const auto m = static_cast<std::int64_t>(acc.size());
      std::int64_t c = 0;
      for (std::size_t k = 0; k < acc.size(); ++k)
        if (k == 0 || acc[k].first != acc[k - 1].first + 1 || acc[k].second != acc[k - 1].second + 1) ++c;
      if (m > best_m || (m == best_m && c < best_c)) {
        best_m = m;
        best_c = c;
      }
      return;
    }
    rec(i + 1);
    for (std::size_t j = 0; j < r.size(); ++j) {
      if (used[j] || r[j] != h[i]) continue;
      used[j] = true;
      acc.emplace_back(i, j);
      rec(i + 1);
      acc.pop_back();
      used[j] = false;
    }
  };
  rec(0);
  return {best_m, best_c};
}

Tokens random_tokens(Rng& rng, std::size_t lo, std::size_t hi) {
  static const char* vocab[] = {"a", "b", "c", "d"};
  Tokens t(lo + rng.below(hi - lo + 1));
  for (auto& s : t) s = vocab[rng.below(4)];
  return t;
}

}  // namespace

TEST_CASE("wer examples and oracle") {
  CHECK(wer({"a", "b", "c"}, {"a", "b", "c"}) == Rational{0, 3});
  CHECK(wer({"a", "b", "c"}, {"a", "x", "c"}) == Rational{1, 3});
  CHECK_THROWS(wer({"a"}, {}));
  Rng rng(11);
  for (int k = 0; k < 300; ++k) {
    auto h = random_tokens(rng, 0, 6), r = random_tokens(rng, 1, 6);
    CHECK(edit_distance(h, r) == edit_oracle(h, r));
    // edit counts are symmetric even though rates are not
    CHECK(edit_distance(h, r) == edit_distance(r, h));
  }
  CHECK(corpus_wer({{"a"}, {"b", "c"}}, {{"x"}, {"b", "c", "d"}}) == Rational{2, 4});
}

TEST_CASE("wer tokenization") {
  CHECK(split_words("  the  cat\tsat ") == Tokens{"the", "cat", "sat"});
  CHECK(split_chars("แมว ดำ").size() == 5);
  CHECK(wer_tokens("แมวดำ", "th").size() == 5);
  CHECK(wer_tokens("แมวดำ", "th", WerUnit::Word).size() == 1);
  CHECK(wer_tokens("a b", "en").size() == 2);
  CHECK(wer_tokens("a b", "en", WerUnit::Char).size() == 2);
  CHECK_THROWS_AS(wer_unit_from_string("syllable"), ConfigError);
}

TEST_CASE("golden: wer") {
  auto g = golden()["wer"];
  REQUIRE(g.size() == 20);
  for (const auto& c : g) {
    const auto w = wer(toks(c["hyp"]), toks(c["ref"]));
    CHECK(w.num == c["edits"].get<std::int64_t>());
    CHECK(w.den == c["ref_len"].get<std::int64_t>());
  }
}

TEST_CASE("bleu examples") {
  CHECK(bleu({{"a", "b", "c", "d", "e"}}, {{"a", "b", "c", "d", "e"}}) == doctest::Approx(1.0));
  CHECK(bleu({{"x", "y"}}, {{"a", "b"}}) == 0.0);
  // p1 = p2 = p3 = 1, brevity penalty exp(1 - 4/3)
  const double expect = std::exp(1.0 - 4.0 / 3.0);
  CHECK(std::abs(bleu({{"the", "cat", "sat"}}, {{"the", "cat", "sat", "down"}}) - expect) < 1e-12);
  CHECK(std::abs(expect - 0.7165) < 1e-4);
  CHECK_THROWS(bleu({}, {}));
  // appending a perfect pair never lowers the score
  Rng rng(5);
  for (int k = 0; k < 50; ++k) {
    std::vector<Tokens> h{random_tokens(rng, 1, 8)}, r{random_tokens(rng, 1, 8)};
    const double before = bleu(h, r);
    auto p = random_tokens(rng, 1, 8);
    h.push_back(p);
    r.push_back(p);
    CHECK(bleu(h, r) >= before - 1e-12);
    CHECK(bleu(h, h) == doctest::Approx(1.0));
  }
}

TEST_CASE("golden: bleu") {
  auto g = golden()["bleu"];
  REQUIRE(g.size() == 20);
  bool saw_anchor = false;
  for (const auto& c : g) {
    std::vector<Tokens> h, r;
    for (const auto& x : c["hyps"]) h.push_back(toks(x));
    for (const auto& x : c["refs"]) r.push_back(toks(x));
    CHECK(std::abs(bleu(h, r, true) - c["smoothed"].get<double>()) < 1e-9);
    CHECK(std::abs(bleu(h, r, false) - c["strict"].get<double>()) < 1e-9);
    saw_anchor |= std::abs(c["smoothed"].get<double>() - 0.7165313105737893) < 1e-12;
  }
  CHECK(saw_anchor);
}

TEST_CASE("meteor examples and oracle") {
  auto same = meteor_exact({"a", "b", "c", "d", "e"}, {"a", "b", "c", "d", "e"});
  CHECK(same.matches == 5);
  CHECK(same.chunks == 1);
  CHECK(same.score == doctest::Approx(1.0 - 0.5 * std::pow(1.0 / 5.0, 3.0)));
  CHECK(same.score == doctest::Approx(0.996));
  CHECK(meteor_exact({"a"}, {"b"}).score == 0.0);
  auto empty = meteor_exact({}, {"a"});
  CHECK(empty.degenerate);
  CHECK(empty.score == 0.0);
  Rng rng(8);
  for (int k = 0; k < 300; ++k) {
    auto h = random_tokens(rng, 1, 8), r = random_tokens(rng, 1, 8);
    const auto [m, c] = meteor_oracle(h, r);
    const auto d = meteor_exact(h, r);
    CHECK(d.matches == m);
    CHECK(d.chunks == c);
  }
}

TEST_CASE("golden: meteor") {
  auto g = golden()["meteor"];
  REQUIRE(g.size() == 20);
  for (const auto& c : g) {
    const auto d = meteor_exact(toks(c["hyp"]), toks(c["ref"]));
    CHECK(d.matches == c["matches"].get<std::int64_t>());
    CHECK(d.chunks == c["chunks"].get<std::int64_t>());
    CHECK(std::abs(d.score - c["score"].get<double>()) < 1e-9);
  }
}

TEST_CASE("token f1 examples") {
  CHECK(token_f1("Paris", "Paris") == 1.0);
  CHECK(token_f1("Paris France", "Paris") == doctest::Approx(2.0 / 3.0));
  CHECK(token_f1("a a", "a") == doctest::Approx(2.0 / 3.0));
  CHECK(token_f1("", "") == 1.0);
  CHECK(token_f1("", "x") == 0.0);
  CHECK(token_f1("The Cat!", "the cat") == 1.0);
  CHECK(normalize_answer("  Hello,   World! ") == "hello world");
  CHECK(normalize_answer("สีแดง.") == "สีแดง");
}

TEST_CASE("golden: token f1") {
  auto g = golden()["token_f1"];
  REQUIRE(g.size() == 20);
  for (const auto& c : g) {
    const double v = token_f1(c["pred"].get<std::string>(), c["ref"].get<std::string>());
    CHECK(std::abs(v - c["f1"].get<double>()) < 1e-9);
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("gender accuracy rule order") {
  CHECK(gender_accuracy({"The speaker is female."}, {"female"}) == 1.0);
  CHECK(gender_accuracy({"Male voice"}, {"female"}) == 0.0);
  CHECK(gender_accuracy({"The speaker sounds feMALE"}, {"male"}) == 0.0);
  CHECK(gender_label("no idea") == std::nullopt);
  CHECK(gender_label("ผู้หญิง") == std::optional<std::string>("female"));
  CHECK(gender_accuracy({"female", "male", "?", "MALE"}, {"female", "male", "male", "male"}) == doctest::Approx(0.75));
}

TEST_CASE("judge rating parser") {
  CHECK(parse_rating("Explanation... Rating: [[7.5]]") == 7.5);
  CHECK(parse_rating("[[3]] ... final [[9.0]]") == 9.0);
  CHECK_THROWS_AS(parse_rating("[[11]]"), JudgeError);
  CHECK_THROWS_AS(parse_rating("[[0.5]]"), JudgeError);
  CHECK_THROWS_AS(parse_rating("Rating: 8"), JudgeError);
  CHECK_THROWS_AS(parse_rating(""), JudgeError);
  CHECK(parse_rating("[[1.0]]") == 1.0);
  CHECK(parse_rating("[[10.0]]") == 10.0);
  for (double x = 1.0; x <= 10.0; x += 0.5) CHECK(parse_rating(format_rating(x)) == x);
  CHECK(format_rating(5.5) == "[[5.5]]");
}

TEST_CASE("judge prompt rendering and mock judge") {
  auto p = render_judge_prompt(JudgeAspect::Single, "What is {x}?", "Paris is {the} answer");
  CHECK(p.find("What is {x}?") != std::string::npos);
  CHECK(p.find("Paris is {the} answer") != std::string::npos);
  CHECK(p.find("1.0 to 10.0") != std::string::npos);
  auto f = render_judge_prompt(JudgeAspect::Format, "q", "r", "XML");
  CHECK(f.find("The required format is: XML.") != std::string::npos);

  MockJudge judge;
  const auto good = judge_score("Name a red fruit", "An apple is a red fruit that grows on trees.", judge);
  const auto refusal = judge_score("Name a red fruit", "I'm sorry, as an AI assistant I cannot help with that.", judge);
  const auto blank = judge_score("Name a red fruit", "", judge);
  CHECK(good.score > refusal.score);
  CHECK(refusal.score > blank.score);
  CHECK(good.raw.find("[[") != std::string::npos);
  CHECK(judge_score("q", "a", judge).score == judge_score("q", "a", judge).score);
}

TEST_CASE("format conformance") {
  CHECK(conforms(R"({"transcription": "hi", "translation": "สวัสดี"})", OutputFormat::Json));
  CHECK(conforms("```json\n{\"a\": 1}\n```", OutputFormat::Json));
  CHECK_FALSE(conforms(R"({"transcription": "hi", "translation": )", OutputFormat::Json));
  CHECK_FALSE(conforms("42", OutputFormat::Json));
  CHECK(conforms("<response><a>x</a><b/></response>", OutputFormat::Xml));
  CHECK(conforms("<?xml version=\"1.0\"?>\n<r a=\"1\">t</r>", OutputFormat::Xml));
  CHECK_FALSE(conforms("<a><b></a></b>", OutputFormat::Xml));
  CHECK_FALSE(conforms("<a></a><b></b>", OutputFormat::Xml));
  CHECK_FALSE(conforms("plain text", OutputFormat::Xml));
  CHECK(conforms("## transcription\nhi\n## translation\nx", OutputFormat::Markdown));
  CHECK(conforms("- one\n- two", OutputFormat::Markdown));
  CHECK_FALSE(conforms("just words", OutputFormat::Markdown));
}

TEST_CASE("complexif dual-aspect judging") {
  MockJudge judge;
  const std::string q = "First transcribe the audio, then translate the transcript. Answer only with a JSON object.";
  auto good = complexif_judge(q, OutputFormat::Json, R"({"transcription": "the cat", "translation": "แมว"})", judge);
  auto bad = complexif_judge(q, OutputFormat::Json, R"({"transcription": "the cat", "translation": "แมว")", judge);
  REQUIRE(good.format.score);
  REQUIRE(bad.format.score);
  CHECK(*good.format.score == 10.0);
  CHECK(*bad.format.score == 1.0);
  CHECK(*good.format.score > *bad.format.score);
  REQUIRE(good.quality.score);
  REQUIRE(bad.quality.score);

  // a judge that answers the format prompt without a rating fails only that aspect
  struct HalfBroken : data::TextGenClient {
    std::string generate(const std::string& prompt) override {
      if (prompt.find("FORMAT") != std::string::npos) return "I refuse to rate.";
      return "Fine. Rating: [[6.0]]";
    }
  } half;
  auto v = complexif_judge(q, OutputFormat::Json, "{}", half);
  CHECK(v.quality.score == std::optional<double>(6.0));
  CHECK_FALSE(v.format.score.has_value());
  CHECK_FALSE(v.format.error.empty());
}

TEST_CASE("complexif set construction") {
  auto dir = fs::temp_directory_path() / "forge_test_eval_cpx";
  fs::remove_all(dir);
  data::synth_asr_corpus(3, 40, dir / "asr");
  auto base = data::read_manifest(dir / "asr" / "manifest.jsonl", true);
  data::MockTranslate tr;
  auto a = build_complexif_set({base}, 21, tr, dir);
  auto b = build_complexif_set({base}, 21, tr, dir);
  REQUIRE(a.size() == 40);
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto& it = a[i];
    CHECK(it.prompt == b[i].prompt);
    CHECK(it.subtasks.size() >= 2);
    CHECK(it.subtasks.size() <= 3);
    CHECK(it.subtasks.front() == "transcribe");
    CHECK(it.references.front() == base.entries[i].response);
    int named = 0;
    for (const char* f : {"JSON", "XML", "Markdown"}) named += it.prompt.find(f) != std::string::npos;
    CHECK(named == 1);
    CHECK(fs::exists(dir / it.audio_path));
  }
  // some fixed seed yields "transcribe, then translate" with a JSON answer
  bool found = false;
  for (std::uint64_t seed = 0; seed < 20 && !found; ++seed) {
    for (const auto& it : build_complexif_set({base}, seed, tr, dir)) {
      if (it.subtasks == std::vector<std::string>{"transcribe", "translate"} && it.format == OutputFormat::Json) {
        found = true;
        CHECK(it.prompt.find("First transcribe the audio, and finally translate") == 0);
        CHECK(it.prompt.find("JSON") != std::string::npos);
        CHECK(it.references[1] == "[th] " + it.references[0]);
        break;
      }
    }
  }
  CHECK(found);
  write_complexif(dir / "cpx.jsonl", a);
  auto back = read_complexif(dir / "cpx.jsonl");
  REQUIRE(back.size() == a.size());
  CHECK(back[3].prompt == a[3].prompt);
  CHECK(back[3].references == a[3].references);
}

TEST_CASE("run_eval aggregates and logs") {
  auto dir = fs::temp_directory_path() / "forge_test_eval_run";
  fs::remove_all(dir);
  data::SynthOptions o;
  o.seed = 2;
  o.n = 42;
  data::synth_corpus(o, dir / "corpus");
  auto m = data::read_manifest(dir / "corpus" / "manifest.jsonl", true);
  MockJudge judge;
  EvalOptions opt;
  opt.judge = &judge;

  std::set<std::string> seen;
  for (auto task : kAllTasks) {
    if (task == EvalTask::ComplexIf) continue;
    auto items = select_items(task, m);
    CHECK(items.size() == (task == EvalTask::Translation ? 12u : 6u));
    for (const auto& it : items) {
      CHECK(seen.insert(it.id).second);
      if (task != EvalTask::SpeechIf) CHECK_FALSE(it.prompt.empty());
    }
    // an oracle responder scores perfectly on the reference-based metrics
    auto rep = run_eval(task, items, [](const EvalItem& it) { return it.reference; }, opt);
    CHECK(rep.n == items.size());
    CHECK(rep.failed == 0);
    CHECK(recompute_value(rep, opt) == rep.value);
    switch (rep.metric) {
      case Metric::Wer: CHECK(rep.value == 0.0); break;
      case Metric::Bleu:
      case Metric::Meteor:
      case Metric::F1: CHECK(rep.value > 0.95); break;
      case Metric::Accuracy: CHECK(rep.value == 1.0); break;
      default: CHECK(rep.value >= 1.0); break;
    }
  }

  // failures are counted and left out
  auto items = select_items(EvalTask::Asr, m);
  int k = 0;
  auto rep = run_eval(EvalTask::Asr, items,
                      [&](const EvalItem& it) -> std::string {
                        if (k++ % 3 == 0) throw Error("model crashed");
                        return it.reference + " extra";
                      },
                      opt);
  CHECK(rep.failed == 2);
  CHECK(rep.n == 4);
  std::int64_t edits = 0, len = 0;
  for (const auto& ex : rep.examples) {
    if (!ex.value) continue;
    edits += ex.detail["edits"].get<std::int64_t>();
    len += ex.detail["ref_len"].get<std::int64_t>();
  }
  CHECK(rep.value == static_cast<double>(edits) / static_cast<double>(len));
  write_report(rep, dir / "eval");
  std::ifstream f(dir / "eval" / "asr_examples.jsonl");
  std::string line;
  int lines = 0;
  while (std::getline(f, line)) {
    auto j = nlohmann::json::parse(line);
    for (const char* key : {"id", "task", "metric", "value", "response"}) CHECK(j.contains(key));
    ++lines;
  }
  CHECK(lines == 6);
  CHECK(fs::exists(dir / "eval" / "asr_summary.json"));

  CHECK_THROWS_AS(run_eval(EvalTask::SpeechIf, select_items(EvalTask::SpeechIf, m),
                           [](const EvalItem&) { return std::string("x"); }, EvalOptions{}),
                  ConfigError);
  CHECK_THROWS(run_eval(EvalTask::Asr, items, [](const EvalItem&) -> std::string { throw Error("no"); }, opt));
}
