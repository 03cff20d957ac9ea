#include "forge/cli/app.hpp"

#include <chrono>
#include <cstdlib>
#include <iostream>

#include "CLI11.hpp"
#include "forge/cli/runtime.hpp"
#include "forge/data/filters.hpp"
#include "forge/data/mix.hpp"
#include "forge/data/pipelines.hpp"
#include "forge/data/synth.hpp"
#include "forge/error.hpp"
#include "forge/eval/complexif.hpp"
#include "forge/eval/harness.hpp"
#include "forge/training/checkpoint.hpp"

namespace forge::cli {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

void Log::attach(const fs::path& file) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  file_ = std::make_unique<std::ofstream>(file, std::ios::app);
}

void Log::event(const std::string& name, ordered_json fields) {
  ordered_json j{{"event", name}};
  for (auto it = fields.begin(); it != fields.end(); ++it) j[it.key()] = it.value();
  const std::string line = j.dump();
  if (!quiet_) std::cerr << line << '\n';
  if (file_) *file_ << line << '\n' << std::flush;
}

void echo_config(const Config& config, const fs::path& out) {
  fs::create_directories(out);
  std::ofstream f(out / "config.json", std::ios::binary);
  if (!f) throw Error("cannot write " + (out / "config.json").string());
  f << to_json(config).dump(2) << '\n';
}

namespace {

struct Timer {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); }
};

std::string client_mode() {
  const char* v = std::getenv("FORGE_CLIENT_MODE");
  return v ? v : "";
}

training::TrainConfig train_config(const Config& c, training::Phase phase) {
  training::TrainConfig t;
  t.phase = phase;
  t.seed = c.train.seed;
  t.batch_size = c.train.batch_size;
  t.weight_decay = static_cast<float>(c.train.weight_decay);
  t.grad_clip_norm = static_cast<float>(c.train.grad_clip_norm);
  t.checkpoint_every = c.train.checkpoint_every;
  t.lr = static_cast<float>(phase == training::Phase::Base ? c.train.base_lr : c.train.lr);
  t.steps = phase == training::Phase::Base       ? c.train.base_steps
            : phase == training::Phase::Pretrain ? c.train.pretrain_steps
                                                 : c.train.sft_steps;
  return t;
}

ordered_json stage_json(const training::RunResult& r) {
  ordered_json j{{"steps", r.reports.size()}};
  if (!r.reports.empty()) {
    j["first_loss"] = r.reports.front().loss;
    j["final_loss"] = r.reports.back().loss;
  }
  return j;
}

training::RunResult run_stage(model::AudioLM& m, std::span<const training::TrainItem> items, const Config& c,
                              training::Phase phase, const fs::path& out, Log& log) {
  auto tc = train_config(c, phase);
  if (tc.steps == 0) return {};
  if (items.empty()) throw ConfigError("no training items for the " + training::to_string(phase) + " stage");
  Timer t;
  training::RunOptions ro;
  ro.out_dir = out;
  const int every = std::max(1, tc.steps / 10);
  ro.on_step = [&](const training::StepReport& r) {
    if (r.step % every == 0 || r.step == tc.steps) {
      log.event("train_step", {{"phase", training::to_string(phase)}, {"step", r.step}, {"loss", r.loss},
                               {"grad_norm", r.grad_norm}, {"tokens", r.tokens}});
    }
  };
  auto res = training::run_phase(m, items, tc, ro);
  auto j = stage_json(res);
  j["phase"] = training::to_string(phase);
  j["items"] = items.size();
  j["checkpoint"] = res.checkpoint.generic_string();
  j["seconds"] = t.seconds();
  log.event("stage_done", j);
  return res;
}

void write_json(const fs::path& path, const ordered_json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write " + path.string());
  f << j.dump(2) << '\n';
}

std::vector<data::ManifestEntry> subset(const data::Manifest& m, const std::function<bool(const data::ManifestEntry&)>& keep) {
  std::vector<data::ManifestEntry> out;
  for (const auto& e : m.entries)
    if (keep(e)) out.push_back(e);
  return out;
}

// The table's scales: error/overlap rates in percent, judge scores as is.
double table_scale(eval::Metric m, double v) {
  return m == eval::Metric::Judge || m == eval::Metric::JudgeDual ? v : 100.0 * v;
}

// Paths in reports are written relative to the run directory so that two runs
// of the same seed produce identical summaries wherever they live.
void relativize_paths(ordered_json& j, const fs::path& base) {
  if (j.is_object()) {
    for (auto it = j.begin(); it != j.end(); ++it) {
      if (it.key() == "manifest" && it.value().is_string()) {
        it.value() = fs::path(it.value().get<std::string>()).lexically_relative(base).generic_string();
      } else {
        relativize_paths(it.value(), base);
      }
    }
  } else if (j.is_array()) {
    for (auto& v : j) relativize_paths(v, base);
  }
}

}  // namespace

ordered_json run_pipeline(const Config& c, const fs::path& out, Log& log) {
  Timer total;
  echo_config(c, out);
  auto clients = data::make_clients(c.clients, client_mode());
  ordered_json data_report;

  // corpora: disjoint id prefixes and seeds for train and eval
  std::uint64_t s = c.mix.seed;
  const std::uint64_t eval_seed = Rng::splitmix64(s);
  data::SynthOptions so;
  so.seed = c.mix.seed;
  so.n = c.mix.corpus_size;
  so.langs = c.mix.langs;
  so.id_prefix = "tr";
  data::synth_corpus(so, out / "corpus" / "train");
  so.seed = eval_seed;
  so.n = c.mix.eval_size;
  so.id_prefix = "ev";
  data::synth_corpus(so, out / "corpus" / "eval");
  log.event("corpus", {{"train", c.mix.corpus_size}, {"eval", c.mix.eval_size}});

  // speechif type1 from the training asr transcripts, type2 from instruction pairs
  const auto train_corpus = data::read_manifest(out / "corpus" / "train" / "manifest.jsonl", true);
  data::Manifest asr{train_corpus.dir, subset(train_corpus, [](const auto& e) { return e.task == data::Task::Asr; })};
  auto sif1 = data::speechif_type1(asr, *clients.textgen, data::RefusalFilter::defaults(), out / "data" / "sif1");
  data::write_manifest(out / "data" / "sif1" / "manifest.jsonl", sif1.entries);
  data_report["speechif_type1"] = sif1.report.to_json();
  log.event("speechif_type1", sif1.report.to_json());

  auto pairs = data::synth_instruction_pairs(c.mix.seed, c.mix.instruction_pairs, c.mix.planted_fraction);
  data::write_instruction_pairs(out / "data" / "instructions.jsonl", pairs);
  auto sif2 = data::speechif_type2(pairs, *clients.tts, data::UnsuitableFilter::defaults(), out / "data" / "sif2");
  data::write_manifest(out / "data" / "sif2" / "manifest.jsonl", sif2.entries);
  data_report["speechif_type2"] = sif2.report.to_json();
  log.event("speechif_type2", sif2.report.to_json());

  data::MixtureSpec train_spec;
  train_spec.seed = c.mix.seed;
  train_spec.sources.push_back({out / "corpus" / "train" / "manifest.jsonl", train_corpus.entries.size(), c.mix.prompt_lang_ratio});
  if (!sif1.entries.empty()) train_spec.sources.push_back({out / "data" / "sif1" / "manifest.jsonl", sif1.entries.size(), {}});
  if (!sif2.entries.empty()) train_spec.sources.push_back({out / "data" / "sif2" / "manifest.jsonl", sif2.entries.size(), {}});
  const auto train_report = data::mix(train_spec, out / "data" / "train_mix.jsonl");
  data::MixtureSpec eval_spec;
  eval_spec.seed = eval_seed;
  eval_spec.sources.push_back({out / "corpus" / "eval" / "manifest.jsonl", c.mix.eval_size, {}});
  const auto eval_report = data::mix(eval_spec, out / "data" / "eval_mix.jsonl");
  data_report["train_mix"] = train_report.to_json();
  data_report["eval_mix"] = eval_report.to_json();
  log.event("mix", {{"train", train_report.total}, {"eval", eval_report.total}});

  // training: base LM on text, adapter on asr+caption, adapter+LoRA on the full mix
  Timer tt;
  model::AudioLM m(c.model);
  const auto train_mix = data::read_manifest(out / "data" / "train_mix.jsonl", true);
  const auto items = train_items(m, train_mix);
  std::vector<training::TrainItem> pretrain_items;
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto t = train_mix.entries[i].task;
    if (t == data::Task::Asr || t == data::Task::Caption) pretrain_items.push_back(items[i]);
  }
  log.event("features", {{"items", items.size()}, {"pretrain_items", pretrain_items.size()}, {"seconds", tt.seconds()}});
  ordered_json training_report;
  const auto text = training::text_items(items);
  training_report["base"] = stage_json(run_stage(m, text, c, training::Phase::Base, out / "train", log));
  training_report["pretrain"] = stage_json(run_stage(m, pretrain_items, c, training::Phase::Pretrain, out / "train", log));
  m.attach_lora();
  training_report["sft"] = stage_json(run_stage(m, items, c, training::Phase::Sft, out / "train", log));

  // evaluation
  const auto eval_mix = data::read_manifest(out / "data" / "eval_mix.jsonl", true);
  eval::EvalOptions eo;
  eo.wer_unit = eval::wer_unit_from_string(c.eval.wer_unit);
  eo.bleu_smooth = c.eval.bleu_smooth;
  eo.judge = clients.judge.get();
  eo.seed = c.mix.seed;
  const auto responder = model_responder(m, c.eval.max_new);

  ordered_json table, counts, notes = ordered_json::array();
  auto run_column = [&](eval::EvalTask task, const std::string& group, const std::string& column,
                        const std::vector<eval::EvalItem>& items) {
    if (items.empty()) {
      table[group][column] = nullptr;
      counts[group][column] = 0;
      return;
    }
    Timer et;
    auto rep = eval::run_eval(task, items, responder, eo);
    eval::write_report(rep, out / "eval", eval::to_string(task) + "_" + column);
    table[group][column] = table_scale(rep.metric, rep.value);
    counts[group][column] = rep.n;
    log.event("eval", {{"task", eval::to_string(task)}, {"column", column}, {"value", rep.value}, {"n", rep.n},
                       {"failed", rep.failed}, {"seconds", et.seconds()}});
  };
  auto by_lang = [](const std::vector<eval::EvalItem>& all, const std::string& lang) {
    std::vector<eval::EvalItem> out;
    for (const auto& it : all)
      if (it.lang == lang) out.push_back(it);
    return out;
  };

  const auto asr_items = eval::select_items(eval::EvalTask::Asr, eval_mix);
  run_column(eval::EvalTask::Asr, "ASR (WER)", "En", by_lang(asr_items, "en"));
  run_column(eval::EvalTask::Asr, "ASR (WER)", "Th", by_lang(asr_items, "th"));
  const auto tr_items = eval::select_items(eval::EvalTask::Translation, eval_mix);
  run_column(eval::EvalTask::Translation, "Translation (BLEU)", "Th2En", by_lang(tr_items, "en"));
  run_column(eval::EvalTask::Translation, "Translation (BLEU)", "En2Th", by_lang(tr_items, "th"));
  table["Translation (BLEU)"]["X2Th"] = nullptr;
  counts["Translation (BLEU)"]["X2Th"] = 0;
  notes.push_back("Translation X2Th is empty: the synthetic corpus has no source language besides English and Thai");
  const auto gender_items = eval::select_items(eval::EvalTask::Gender, eval_mix);
  run_column(eval::EvalTask::Gender, "Gender (Acc)", "En", by_lang(gender_items, "en"));
  run_column(eval::EvalTask::Gender, "Gender (Acc)", "Th", by_lang(gender_items, "th"));
  const auto qa_items = eval::select_items(eval::EvalTask::SpokenQa, eval_mix);
  run_column(eval::EvalTask::SpokenQa, "SpQA (F1)", "En", by_lang(qa_items, "en"));
  run_column(eval::EvalTask::SpokenQa, "SpQA (F1)", "Th", by_lang(qa_items, "th"));
  // captioning has no column in the reference table; reported beside it
  const auto cap_items = eval::select_items(eval::EvalTask::AudioCaption, eval_mix);
  run_column(eval::EvalTask::AudioCaption, "Caption (METEOR)", "En", by_lang(cap_items, "en"));
  run_column(eval::EvalTask::AudioCaption, "Caption (METEOR)", "Th", by_lang(cap_items, "th"));
  const auto sif_items = eval::select_items(eval::EvalTask::SpeechIf, eval_mix);
  run_column(eval::EvalTask::SpeechIf, "SpeechIF (Judge)", "En", by_lang(sif_items, "en"));
  run_column(eval::EvalTask::SpeechIf, "SpeechIF (Judge)", "Th", by_lang(sif_items, "th"));

  // ComplexIF over English asr clips of the eval corpus
  const auto eval_corpus = data::read_manifest(out / "corpus" / "eval" / "manifest.jsonl", true);
  data::Manifest en_asr{eval_corpus.dir, subset(eval_corpus, [](const auto& e) {
                          return e.task == data::Task::Asr && e.lang == "en";
                        })};
  const auto cpx = eval::build_complexif_set({en_asr}, eval_seed, *clients.translate, out / "eval", c.eval.complexif_size);
  eval::write_complexif(out / "eval" / "complexif.jsonl", cpx);
  if (cpx.empty()) {
    table["CpxIF (Judge)"] = {{"Qual", nullptr}, {"Format", nullptr}};
    counts["CpxIF (Judge)"] = {{"Qual", 0}, {"Format", 0}};
  } else {
    Timer et;
    auto rep = eval::run_eval(eval::EvalTask::ComplexIf, eval::complexif_eval_items(cpx, out / "eval"), responder, eo);
    eval::write_report(rep, out / "eval", "complexif");
    table["CpxIF (Judge)"] = {{"Qual", rep.aggregate["quality"]}, {"Format", rep.aggregate["format"]}};
    counts["CpxIF (Judge)"] = {{"Qual", rep.aggregate["quality_n"]}, {"Format", rep.aggregate["format_n"]}};
    log.event("eval", {{"task", "complexif"}, {"quality", rep.aggregate["quality"]}, {"format", rep.aggregate["format"]},
                       {"n", rep.n}, {"failed", rep.failed}, {"seconds", et.seconds()}});
  }

  ordered_json summary;
  summary["seed"] = c.mix.seed;
  summary["scales"] = "WER, BLEU, accuracy and F1 in percent; judge scores on 1-10";
  ordered_json additional, additional_n;
  additional["Caption (METEOR)"] = table["Caption (METEOR)"];
  additional_n["Caption (METEOR)"] = counts["Caption (METEOR)"];
  table.erase("Caption (METEOR)");
  counts.erase("Caption (METEOR)");
  summary["table"] = table;
  summary["n"] = counts;
  summary["additional"] = additional;
  summary["additional_n"] = additional_n;
  summary["training"] = training_report;
  relativize_paths(data_report, out);
  summary["data"] = data_report;
  summary["notes"] = notes;
  write_json(out / "summary.json", summary);
  log.event("pipeline_done", {{"summary", (out / "summary.json").generic_string()}, {"seconds", total.seconds()}});
  return summary;
}

namespace {

struct Common {
  std::string config_file;
  std::vector<std::string> sets;
  bool quiet = false;
};

// defaults <- config file (or the checkpoint's echoed config) <- --set
Config resolve(const Common& common, const fs::path& checkpoint = {}) {
  Config c;
  if (!common.config_file.empty()) {
    c = load_config(common.config_file);
  } else if (!checkpoint.empty() && fs::exists(checkpoint.parent_path() / "config.json")) {
    c = load_config(checkpoint.parent_path() / "config.json");
  }
  for (const auto& s : common.sets) apply_override(c, s);
  return c;
}

void require_file(const std::string& path, const std::string& what) {
  if (path.empty()) throw ConfigError(what + " is required");
  if (!fs::exists(path)) throw ConfigError(what + " '" + path + "' does not exist");
}

void write_manifest_with_report(const fs::path& out, const std::string& name, const data::GenResult& r, Log& log) {
  data::write_manifest(out / (name + ".jsonl"), r.entries);
  auto rep = r.report.to_json();
  rep["log"] = r.report.log;
  write_json(out / (name + "_report.json"), ordered_json::parse(rep.dump()));
  log.event(name, r.report.to_json());
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"forge: audio language model toolkit (data, training, evaluation)"};
  app.require_subcommand(1);
  Common common;
  app.add_option("--config", common.config_file, "JSON config file (model, train, mix, eval, clients sections)");
  app.add_option("--set", common.sets, "Override one config key: section.key=value (repeatable)");
  app.add_flag("--quiet", common.quiet, "Do not echo log lines to stderr");

  std::string out, manifest, model_path, endpoint, task, mode = "extractive", direction, spec, pairs, audio, prompt,
                                                         features, init, langs = "en,th", kind = "mixed", lang;
  std::uint64_t seed = 0;
  bool seed_given = false;
  int n = 70, type = 1, max_new = -1, steps = -1, base_steps = -1;
  double planted = 0.25;

  auto add_seed = [&](CLI::App* sc) {
    sc->add_option("--seed", seed, "Seed for model init, batching and sampling")->each([&](const std::string&) { seed_given = true; });
  };

  auto* synth = app.add_subcommand("synth-corpus", "Generate a synthetic corpus with mock TTS audio");
  synth->add_option("--out", out, "Output directory")->required();
  synth->add_option("--n", n, "Number of examples");
  synth->add_option("--langs", langs, "Comma-separated languages (en, th)");
  synth->add_option("--kind", kind, "mixed (7 tasks), asr, or instructions")->check(CLI::IsMember({"mixed", "asr", "instructions"}));
  synth->add_option("--planted", planted, "Share of planted code/math instructions (kind=instructions)");
  add_seed(synth);

  auto* mix = app.add_subcommand("mix", "Sample and mix manifests per a mixture spec");
  mix->add_option("--spec", spec, "Mixture spec JSON")->required();
  mix->add_option("--out", out, "Output directory")->required();
  add_seed(mix);

  auto* sif = app.add_subcommand("speechif", "Build speech instruction-following data");
  sif->add_option("--type", type, "1: from ASR transcripts, 2: from instruction pairs")->check(CLI::IsMember({1, 2}));
  sif->add_option("--manifest", manifest, "ASR manifest (type 1)");
  sif->add_option("--pairs", pairs, "Instruction pair JSONL (type 2)");
  sif->add_option("--out", out, "Output directory")->required();

  auto* qa = app.add_subcommand("qa-gen", "Generate spoken QA entries from ASR transcripts");
  qa->add_option("--manifest", manifest, "ASR manifest")->required();
  qa->add_option("--mode", mode, "extractive or mcq")->check(CLI::IsMember({"extractive", "mcq"}));
  qa->add_option("--out", out, "Output directory")->required();

  auto* aug = app.add_subcommand("augment-captions", "Replace captions with detailed versions");
  aug->add_option("--manifest", manifest, "Caption manifest")->required();
  aug->add_option("--out", out, "Output directory")->required();

  auto* trp = app.add_subcommand("translate-pairs", "Derive translation entries from ASR transcripts");
  trp->add_option("--manifest", manifest, "ASR manifest")->required();
  trp->add_option("--direction", direction, "x2th or th2x")->required()->check(CLI::IsMember({"x2th", "th2x"}));
  trp->add_option("--out", out, "Output directory")->required();
  add_seed(trp);

  auto* feat = app.add_subcommand("features", "Compute log-mel features for a manifest");
  feat->add_option("--manifest", manifest, "Manifest")->required();
  feat->add_option("--out", out, "Output directory")->required();

  auto* pre = app.add_subcommand("pretrain", "Base LM stage (unless --init) then adapter-only training");
  pre->add_option("--manifest", manifest, "Training manifest")->required();
  pre->add_option("--out", out, "Output directory")->required();
  pre->add_option("--features", features, "Feature file from `forge features`");
  pre->add_option("--init", init, "Start from this checkpoint and skip the base stage");
  pre->add_option("--steps", steps, "Pretrain steps (train.pretrain_steps)");
  pre->add_option("--base-steps", base_steps, "Base LM steps (train.base_steps)");
  add_seed(pre);

  auto* sft = app.add_subcommand("sft", "Adapter + LoRA fine-tuning from a pretrain checkpoint");
  sft->add_option("--manifest", manifest, "Training manifest")->required();
  sft->add_option("--init", init, "Pretrain checkpoint")->required();
  sft->add_option("--out", out, "Output directory")->required();
  sft->add_option("--features", features, "Feature file from `forge features`");
  sft->add_option("--steps", steps, "SFT steps (train.sft_steps)");
  add_seed(sft);

  auto* gen = app.add_subcommand("generate", "Respond to one audio file");
  gen->add_option("--model", model_path, "Checkpoint")->required();
  gen->add_option("--audio", audio, "WAV file")->required();
  gen->add_option("--prompt", prompt, "Text prompt (omit for spoken instructions)");
  gen->add_option("--max-new", max_new, "Maximum new bytes (eval.max_new)");

  auto* ev = app.add_subcommand("eval", "Score a model or endpoint on one task");
  ev->add_option("--task", task, "asr, translation, caption, gender, spoken_qa, speechif or complexif")->required();
  ev->add_option("--manifest", manifest, "Manifest (a complexif JSONL for task complexif)");
  ev->add_option("--model", model_path, "Checkpoint");
  ev->add_option("--endpoint", endpoint, "http:// endpoint speaking the client wire contract");
  ev->add_option("--lang", lang, "Only entries whose response language matches");
  ev->add_option("--out", out, "Output directory")->required();
  ev->add_option("--max-new", max_new, "Maximum new bytes (eval.max_new)");

  auto* pipe = app.add_subcommand("pipeline", "End-to-end demo on synthetic data");
  pipe->add_option("--out", out, "Output directory")->required();
  add_seed(pipe);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  Log log(common.quiet);
  try {
    auto* sc = app.get_subcommands().front();
    const std::string name = sc->get_name();
    if (!out.empty()) {
      fs::create_directories(out);
      log.attach(fs::path(out) / "log.jsonl");
    }
    log.event("start", {{"command", name}});

    if (name == "synth-corpus") {
      Config c = resolve(common);
      if (seed_given) set_seed(c, seed);
      echo_config(c, out);
      if (kind == "instructions") {
        auto p = data::synth_instruction_pairs(c.mix.seed, static_cast<std::size_t>(n), planted);
        data::write_instruction_pairs(fs::path(out) / "instructions.jsonl", p);
        log.event("synth_done", {{"kind", kind}, {"n", p.size()}});
      } else if (kind == "asr") {
        auto e = data::synth_asr_corpus(c.mix.seed, static_cast<std::size_t>(n), out);
        log.event("synth_done", {{"kind", kind}, {"n", e.size()}});
      } else {
        data::SynthOptions so;
        so.seed = c.mix.seed;
        so.n = static_cast<std::size_t>(n);
        so.langs.clear();
        std::stringstream ss(langs);
        for (std::string l; std::getline(ss, l, ',');)
          if (!l.empty()) so.langs.push_back(l);
        auto e = data::synth_corpus(so, out);
        log.event("synth_done", {{"kind", kind}, {"n", e.size()}});
      }
    } else if (name == "mix") {
      require_file(spec, "--spec");
      std::ifstream f(spec);
      json j;
      try {
        j = json::parse(f);
      } catch (const json::parse_error& e) {
        throw ConfigError("mixture spec " + spec + ": " + e.what());
      }
      auto ms = data::MixtureSpec::from_json(j, fs::path(spec).parent_path());
      if (seed_given) ms.seed = seed;
      auto rep = data::mix(ms, fs::path(out) / "mix.jsonl");
      write_json(fs::path(out) / "mix_report.json", rep.to_json());
      log.event("mix_done", rep.to_json());
    } else if (name == "speechif") {
      Config c = resolve(common);
      echo_config(c, out);
      auto clients = data::make_clients(c.clients, client_mode());
      if (type == 1) {
        require_file(manifest, "--manifest");
        auto m = data::read_manifest(manifest, true);
        write_manifest_with_report(out, "speechif", data::speechif_type1(m, *clients.textgen, data::RefusalFilter::defaults(), out), log);
      } else {
        require_file(pairs, "--pairs");
        auto p = data::read_instruction_pairs(pairs);
        write_manifest_with_report(out, "speechif", data::speechif_type2(p, *clients.tts, data::UnsuitableFilter::defaults(), out), log);
      }
    } else if (name == "qa-gen") {
      require_file(manifest, "--manifest");
      Config c = resolve(common);
      echo_config(c, out);
      auto clients = data::make_clients(c.clients, client_mode());
      auto m = data::read_manifest(manifest, true);
      write_manifest_with_report(out, "qa", data::qa_manifest(m, data::qa_mode_from_string(mode), *clients.qagen, out), log);
    } else if (name == "augment-captions") {
      require_file(manifest, "--manifest");
      Config c = resolve(common);
      echo_config(c, out);
      auto clients = data::make_clients(c.clients, client_mode());
      auto m = data::read_manifest(manifest, true);
      write_manifest_with_report(out, "captions", data::augment_captions(m, *clients.caption, out), log);
    } else if (name == "translate-pairs") {
      require_file(manifest, "--manifest");
      Config c = resolve(common);
      if (seed_given) set_seed(c, seed);
      echo_config(c, out);
      auto clients = data::make_clients(c.clients, client_mode());
      auto m = data::read_manifest(manifest, true);
      Rng rng(c.mix.seed);
      write_manifest_with_report(out, "translate",
                                 data::derive_translation_pairs(m, data::direction_from_string(direction), *clients.translate, rng, out),
                                 log);
    } else if (name == "features") {
      require_file(manifest, "--manifest");
      Config c = resolve(common);
      echo_config(c, out);
      auto m = data::read_manifest(manifest, true);
      auto cache = compute_features(m, c.model);
      write_features(fs::path(out) / "features.afrg", cache);
      log.event("features_done", {{"items", cache.size()}});
    } else if (name == "pretrain" || name == "sft") {
      require_file(manifest, "--manifest");
      if (!init.empty()) require_file(init, "--init");
      if (!features.empty()) require_file(features, "--features");
      Config c = resolve(common, init);
      if (seed_given) set_seed(c, seed);
      if (steps >= 0) (name == "sft" ? c.train.sft_steps : c.train.pretrain_steps) = steps;
      if (base_steps >= 0) c.train.base_steps = base_steps;
      echo_config(c, out);
      model::AudioLM m(c.model);
      if (!init.empty()) {
        auto rep = training::load_checkpoint(init, m);
        for (const auto& w : rep.warnings) log.event("warning", {{"message", w}});
        if (rep.state.phase == training::Phase::Sft) throw ConfigError("--init must be a base or pretrain checkpoint, not sft");
      }
      auto man = data::read_manifest(manifest, true);
      FeatureCache cache;
      if (!features.empty()) cache = read_features(features);
      auto items = train_items(m, man, features.empty() ? nullptr : &cache);
      if (name == "pretrain") {
        if (init.empty()) run_stage(m, training::text_items(items), c, training::Phase::Base, out, log);
        run_stage(m, items, c, training::Phase::Pretrain, out, log);
      } else {
        m.attach_lora();
        run_stage(m, items, c, training::Phase::Sft, out, log);
      }
    } else if (name == "generate") {
      require_file(model_path, "--model");
      require_file(audio, "--audio");
      Config c = resolve(common, model_path);
      auto lm = load_model(model_path, c.model);
      for (const auto& w : lm.report.warnings) log.event("warning", {{"message", w}});
      std::cout << respond(*lm.model, audio, prompt, max_new >= 0 ? max_new : c.eval.max_new) << '\n';
    } else if (name == "eval") {
      const auto t = eval::eval_task_from_string(task);
      require_file(manifest, "--manifest");
      if (model_path.empty() == endpoint.empty()) throw ConfigError("eval needs exactly one of --model or --endpoint");
      if (!model_path.empty()) require_file(model_path, "--model");
      Config c = resolve(common, model_path);
      echo_config(c, out);
      auto clients = data::make_clients(c.clients, client_mode());
      std::vector<eval::EvalItem> items;
      if (t == eval::EvalTask::ComplexIf) {
        items = eval::complexif_eval_items(eval::read_complexif(manifest), fs::path(manifest).parent_path());
      } else {
        items = eval::select_items(t, data::read_manifest(manifest, true));
      }
      if (!lang.empty()) {
        std::erase_if(items, [&](const eval::EvalItem& it) { return it.lang != lang; });
      }
      if (items.empty()) throw ConfigError("no " + task + " entries in " + manifest);
      eval::EvalOptions eo;
      eo.wer_unit = eval::wer_unit_from_string(c.eval.wer_unit);
      eo.bleu_smooth = c.eval.bleu_smooth;
      eo.judge = clients.judge.get();
      eo.seed = c.mix.seed;
      std::unique_ptr<model::AudioLM> held;
      eval::Responder responder;
      const int budget = max_new >= 0 ? max_new : c.eval.max_new;
      if (!model_path.empty()) {
        auto lm = load_model(model_path, c.model);
        held = std::move(lm.model);
        responder = model_responder(*held, budget);
      } else {
        responder = endpoint_responder(endpoint, c.clients.http);
      }
      auto rep = eval::run_eval(t, items, responder, eo);
      eval::write_report(rep, out);
      log.event("eval_done", rep.summary());
    } else if (name == "pipeline") {
      Config c = resolve(common);
      if (seed_given) set_seed(c, seed);
      run_pipeline(c, out, log);
    }
    return 0;
  } catch (const ConfigError& e) {
    log.event("error", {{"kind", "user"}, {"message", e.what()}});
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const FormatError& e) {
    log.event("error", {{"kind", "user"}, {"message", e.what()}});
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const ClientError& e) {
    log.event("error", {{"kind", "user"}, {"message", e.what()}});
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    log.event("error", {{"kind", "internal"}, {"message", e.what()}});
    std::cerr << "internal error: " << e.what() << '\n';
    return 2;
  }
}

}  // namespace forge::cli
