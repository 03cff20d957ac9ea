#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "forge/data/clients.hpp"
#include "forge/data/manifest.hpp"
#include "forge/eval/complexif.hpp"
#include "forge/eval/metrics.hpp"
#include "json.hpp"

namespace forge::eval {

enum class EvalTask { Asr, Translation, AudioCaption, Gender, SpokenQa, SpeechIf, ComplexIf };
enum class Metric { Wer, Bleu, Meteor, F1, Accuracy, Judge, JudgeDual };

inline constexpr EvalTask kAllTasks[] = {EvalTask::Asr,      EvalTask::Translation, EvalTask::AudioCaption,
                                         EvalTask::Gender,   EvalTask::SpokenQa,    EvalTask::SpeechIf,
                                         EvalTask::ComplexIf};

std::string to_string(EvalTask t);  // asr, translation, caption, gender, spoken_qa, speechif, complexif
EvalTask eval_task_from_string(const std::string& s);
std::string to_string(Metric m);
Metric metric_for(EvalTask t);
bool lower_is_better(Metric m);

struct EvalItem {
  std::string id;
  std::filesystem::path audio_file;
  std::string prompt;  // empty for speechif
  std::string lang;
  std::string reference;
  std::optional<OutputFormat> format;  // complexif only
};

// Entries of the manifest that belong to the task. A null prompt on a
// templatable task gets the first template in the response language.
std::vector<EvalItem> select_items(EvalTask task, const data::Manifest& manifest);
std::vector<EvalItem> complexif_eval_items(const std::vector<ComplexIfItem>& items, const std::filesystem::path& dir);

// Model under test: returns the text response for one item.
using Responder = std::function<std::string(const EvalItem&)>;

struct EvalOptions {
  WerUnit wer_unit = WerUnit::Auto;
  bool bleu_smooth = true;
  GenderKeywords gender;
  data::TextGenClient* judge = nullptr;  // required for speechif and complexif
  std::uint64_t seed = 0;
};

struct ExampleResult {
  std::string id;
  std::string response;
  std::string reference;
  std::optional<double> value;
  std::string error;
  nlohmann::ordered_json detail = nlohmann::ordered_json::object();
};

struct MetricReport {
  EvalTask task = EvalTask::Asr;
  Metric metric = Metric::Wer;
  double value = 0.0;  // corpus-level
  std::size_t n = 0;   // scored examples
  std::size_t failed = 0;
  std::vector<ExampleResult> examples;
  nlohmann::ordered_json aggregate = nlohmann::ordered_json::object();  // sufficient statistics, aspect means
  nlohmann::ordered_json config = nlohmann::ordered_json::object();

  nlohmann::ordered_json summary() const;
};

// Per-example failures (responder or judge) are recorded, counted and left
// out of the aggregate.
MetricReport run_eval(EvalTask task, const std::vector<EvalItem>& items, const Responder& respond,
                      const EvalOptions& options);

// Recomputes the corpus value from the per-example details alone.
double recompute_value(const MetricReport& report, const EvalOptions& options);

// <dir>/<name>_examples.jsonl and <dir>/<name>_summary.json; name defaults to the task
void write_report(const MetricReport& report, const std::filesystem::path& dir, const std::string& name = "");

}  // namespace forge::eval
