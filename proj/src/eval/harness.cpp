#include "forge/eval/harness.hpp"

#include <fstream>

#include "forge/data/filters.hpp"
#include "forge/data/synth.hpp"
#include "forge/error.hpp"
#include "forge/eval/judge.hpp"

namespace forge::eval {

using nlohmann::ordered_json;

std::string to_string(EvalTask t) {
  switch (t) {
    case EvalTask::Asr: return "asr";
    case EvalTask::Translation: return "translation";
    case EvalTask::AudioCaption: return "caption";
    case EvalTask::Gender: return "gender";
    case EvalTask::SpokenQa: return "spoken_qa";
    case EvalTask::SpeechIf: return "speechif";
    case EvalTask::ComplexIf: return "complexif";
  }
  return "?";
}

EvalTask eval_task_from_string(const std::string& s) {
  for (auto t : kAllTasks)
    if (to_string(t) == s) return t;
  throw ConfigError("unknown eval task '" + s +
                    "' (expected asr, translation, caption, gender, spoken_qa, speechif or complexif)");
}

std::string to_string(Metric m) {
  switch (m) {
    case Metric::Wer: return "wer";
    case Metric::Bleu: return "bleu";
    case Metric::Meteor: return "meteor";
    case Metric::F1: return "f1";
    case Metric::Accuracy: return "accuracy";
    case Metric::Judge: return "judge";
    case Metric::JudgeDual: return "judge_dual";
  }
  return "?";
}

Metric metric_for(EvalTask t) {
  switch (t) {
    case EvalTask::Asr: return Metric::Wer;
    case EvalTask::Translation: return Metric::Bleu;
    case EvalTask::AudioCaption: return Metric::Meteor;
    case EvalTask::Gender: return Metric::Accuracy;
    case EvalTask::SpokenQa: return Metric::F1;
    case EvalTask::SpeechIf: return Metric::Judge;
    case EvalTask::ComplexIf: return Metric::JudgeDual;
  }
  return Metric::Wer;
}

bool lower_is_better(Metric m) { return m == Metric::Wer; }

namespace {

bool is_gender(const data::ManifestEntry& e) {
  return e.task == data::Task::Qa &&
         (e.source == "synth-gender" || (e.prompt && (*e.prompt == data::kGenderQuestion || *e.prompt == data::kGenderQuestionTh)));
}

bool belongs(EvalTask task, const data::ManifestEntry& e) {
  using data::Task;
  switch (task) {
    case EvalTask::Asr: return e.task == Task::Asr;
    case EvalTask::Translation: return e.task == Task::TranslateX2Th || e.task == Task::TranslateTh2X;
    case EvalTask::AudioCaption: return e.task == Task::Caption;
    case EvalTask::Gender: return is_gender(e);
    case EvalTask::SpokenQa: return e.task == Task::Qa && !is_gender(e);
    case EvalTask::SpeechIf: return e.task == Task::SpeechIf;
    case EvalTask::ComplexIf: return false;
  }
  return false;
}

// The spoken instruction is not available as text; the judge sees the
// reference answer in its place.
std::string speechif_question(const EvalItem& it) {
  return "(spoken instruction; a reference answer is: " + it.reference + ")";
}

}  // namespace

std::vector<EvalItem> select_items(EvalTask task, const data::Manifest& manifest) {
  if (task == EvalTask::ComplexIf) throw ConfigError("complexif items come from a complexif file, not a manifest");
  std::vector<EvalItem> out;
  for (const auto& e : manifest.entries) {
    if (!belongs(task, e)) continue;
    EvalItem it;
    it.id = e.id;
    it.audio_file = manifest.audio_file(e);
    it.lang = e.lang;
    it.reference = e.response;
    if (e.prompt) it.prompt = *e.prompt;
    else if (e.task != data::Task::SpeechIf) it.prompt = data::template_list(e.task, e.lang).front();
    out.push_back(std::move(it));
  }
  return out;
}

std::vector<EvalItem> complexif_eval_items(const std::vector<ComplexIfItem>& items, const std::filesystem::path& dir) {
  std::vector<EvalItem> out;
  for (const auto& c : items) {
    EvalItem it;
    it.id = c.id;
    it.audio_file = dir / c.audio_path;
    it.prompt = c.prompt;
    it.lang = c.lang;
    for (std::size_t i = 0; i < c.references.size(); ++i) {
      if (i) it.reference += " | ";
      it.reference += c.subtasks[i] + ": " + c.references[i];
    }
    it.format = c.format;
    out.push_back(std::move(it));
  }
  return out;
}

ordered_json MetricReport::summary() const {
  ordered_json j;
  j["task"] = to_string(task);
  j["metric"] = to_string(metric);
  j["value"] = value;
  j["n"] = n;
  j["failed"] = failed;
  j["aggregate"] = aggregate;
  j["config"] = config;
  return j;
}

double recompute_value(const MetricReport& report, const EvalOptions& options) {
  double sum = 0.0;
  std::size_t n = 0;
  switch (report.metric) {
    case Metric::Wer: {
      std::int64_t edits = 0, len = 0;
      for (const auto& ex : report.examples) {
        if (!ex.value) continue;
        edits += ex.detail.at("edits").get<std::int64_t>();
        len += ex.detail.at("ref_len").get<std::int64_t>();
      }
      return len ? static_cast<double>(edits) / static_cast<double>(len) : 0.0;
    }
    case Metric::Bleu: {
      BleuStats total;
      for (const auto& ex : report.examples) {
        if (!ex.value) continue;
        BleuStats s;
        s.matches = ex.detail.at("matches").get<std::array<std::int64_t, 4>>();
        s.totals = ex.detail.at("totals").get<std::array<std::int64_t, 4>>();
        s.hyp_len = ex.detail.at("hyp_len").get<std::int64_t>();
        s.ref_len = ex.detail.at("ref_len").get<std::int64_t>();
        total += s;
      }
      return bleu_from_stats(total, options.bleu_smooth);
    }
    default:
      for (const auto& ex : report.examples) {
        if (!ex.value) continue;
        sum += *ex.value;
        ++n;
      }
      return n ? sum / static_cast<double>(n) : 0.0;
  }
}

MetricReport run_eval(EvalTask task, const std::vector<EvalItem>& items, const Responder& respond,
                      const EvalOptions& options) {
  MetricReport rep;
  rep.task = task;
  rep.metric = metric_for(task);
  rep.config = {{"wer_unit", options.wer_unit == WerUnit::Auto ? "auto" : options.wer_unit == WerUnit::Word ? "word" : "char"},
                {"bleu_smooth", options.bleu_smooth},
                {"seed", options.seed}};
  if ((rep.metric == Metric::Judge || rep.metric == Metric::JudgeDual) && !options.judge) {
    throw ConfigError("task " + to_string(task) + " needs a judge client");
  }
  double quality_sum = 0.0, format_sum = 0.0;
  std::size_t quality_n = 0, format_n = 0;
  for (const auto& it : items) {
    ExampleResult ex;
    ex.id = it.id;
    ex.reference = it.reference;
    try {
      ex.response = respond(it);
      switch (rep.metric) {
        case Metric::Wer: {
          const auto w = wer(wer_tokens(ex.response, it.lang, options.wer_unit), wer_tokens(it.reference, it.lang, options.wer_unit));
          ex.value = w.value();
          ex.detail = {{"edits", w.num}, {"ref_len", w.den}};
          break;
        }
        case Metric::Bleu: {
          // Thai has no word spaces: BLEU and METEOR run over characters there
          const auto s = bleu_stats(wer_tokens(ex.response, it.lang), wer_tokens(it.reference, it.lang));
          ex.value = bleu_from_stats(s, options.bleu_smooth);
          ex.detail = {{"matches", s.matches}, {"totals", s.totals}, {"hyp_len", s.hyp_len}, {"ref_len", s.ref_len}};
          break;
        }
        case Metric::Meteor: {
          const auto m = meteor_exact(wer_tokens(normalize_answer(ex.response), it.lang),
                                     wer_tokens(normalize_answer(it.reference), it.lang));
          ex.value = m.score;
          ex.detail = {{"matches", m.matches}, {"chunks", m.chunks}};
          if (m.degenerate) ex.detail["warning"] = "empty hypothesis or reference";
          break;
        }
        case Metric::F1: ex.value = token_f1(ex.response, it.reference); break;
        case Metric::Accuracy: {
          const auto label = gender_label(ex.response, options.gender);
          // references may be Thai words, so both sides go through the same rules
          const auto want = gender_label(it.reference, options.gender);
          if (!want) throw FormatError("reference '" + it.reference + "' names no gender");
          ex.value = label && *label == *want ? 1.0 : 0.0;
          ex.detail = {{"label", label ? *label : ""}};
          break;
        }
        case Metric::Judge: {
          const auto v = judge_score(speechif_question(it), ex.response, *options.judge);
          ex.value = v.score;
          ex.detail = {{"judge", v.raw}};
          break;
        }
        case Metric::JudgeDual: {
          const auto v = complexif_judge(it.prompt, it.format.value_or(OutputFormat::Json), ex.response, *options.judge);
          ex.detail = {{"format", to_string(it.format.value_or(OutputFormat::Json))}};
          if (v.quality.score) {
            ex.detail["quality"] = *v.quality.score;
            quality_sum += *v.quality.score;
            ++quality_n;
          } else {
            ex.detail["quality_error"] = v.quality.error;
          }
          if (v.format.score) {
            ex.detail["format_score"] = *v.format.score;
            format_sum += *v.format.score;
            ++format_n;
          } else {
            ex.detail["format_error"] = v.format.error;
          }
          if (!v.quality.score || !v.format.score) {
            ex.error = "judge: " + (v.quality.score ? v.format.error : v.quality.error);
          } else {
            ex.value = (*v.quality.score + *v.format.score) / 2.0;
          }
          break;
        }
      }
    } catch (const Error& e) {
      ex.value.reset();
      ex.error = e.what();
    }
    if (ex.value) ++rep.n;
    else ++rep.failed;
    rep.examples.push_back(std::move(ex));
  }
  if (rep.n == 0) {
    throw Error("eval " + to_string(task) + ": no example could be scored (" + std::to_string(items.size()) + " items, " +
                std::to_string(rep.failed) + " failed)");
  }
  rep.value = recompute_value(rep, options);
  if (rep.metric == Metric::Wer) {
    std::int64_t edits = 0, len = 0;
    for (const auto& ex : rep.examples) {
      if (!ex.value) continue;
      edits += ex.detail["edits"].get<std::int64_t>();
      len += ex.detail["ref_len"].get<std::int64_t>();
    }
    rep.aggregate = {{"edits", edits}, {"ref_len", len}};
  } else if (rep.metric == Metric::JudgeDual) {
    rep.aggregate = {{"quality", quality_n ? quality_sum / static_cast<double>(quality_n) : 0.0},
                     {"format", format_n ? format_sum / static_cast<double>(format_n) : 0.0},
                     {"quality_n", quality_n},
                     {"format_n", format_n}};
  }
  return rep;
}

void write_report(const MetricReport& report, const std::filesystem::path& dir, const std::string& file_name) {
  std::filesystem::create_directories(dir);
  const std::string name = file_name.empty() ? to_string(report.task) : file_name;
  {
    std::ofstream f(dir / (name + "_examples.jsonl"), std::ios::binary);
    if (!f) throw Error("cannot write " + (dir / (name + "_examples.jsonl")).string());
    for (const auto& ex : report.examples) {
      ordered_json j{{"id", ex.id}, {"task", to_string(report.task)}, {"metric", to_string(report.metric)}};
      j["value"] = ex.value ? ordered_json(*ex.value) : ordered_json(nullptr);
      j["response"] = ex.response;
      j["reference"] = ex.reference;
      if (!ex.error.empty()) j["error"] = ex.error;
      if (!ex.detail.empty()) j["detail"] = ex.detail;
      f << j.dump() << '\n';
    }
  }
  std::ofstream f(dir / (name + "_summary.json"), std::ios::binary);
  if (!f) throw Error("cannot write " + (dir / (name + "_summary.json")).string());
  f << report.summary().dump(2) << '\n';
}

}  // namespace forge::eval
