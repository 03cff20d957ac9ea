#include "forge/data/pipelines.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include "forge/audio/wav.hpp"
#include "forge/error.hpp"

namespace forge::data {

using nlohmann::json;

json GenReport::to_json() const {
  return json{{"input", input},       {"output", output}, {"filtered", filtered}, {"failed", failed},
              {"fallback", fallback}, {"reconciled", reconciled()}};
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

bool ascii_only(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](char c) { return static_cast<unsigned char>(c) < 0x80; });
}

// Audio path of `e` (relative to `from`) re-expressed relative to `to`.
std::string rebase(const Manifest& from, const ManifestEntry& e, const std::filesystem::path& to) {
  return relative_audio(from.audio_file(e), to);
}

std::vector<std::string> words(std::string_view s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (std::isalnum(static_cast<unsigned char>(c)) || c == '\'') {
      cur += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    } else if (!cur.empty()) {
      out.push_back(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

}  // namespace

GenResult speechif_type1(const Manifest& asr, TextGenClient& textgen, const RefusalFilter& refusals,
                         const std::filesystem::path& out_dir) {
  GenResult res;
  for (const auto& e : asr.entries) {
    ++res.report.input;
    if (e.task != Task::Asr) {
      ++res.report.filtered;
      res.report.log.push_back(e.id + ": not an asr entry (" + to_string(e.task) + ")");
      continue;
    }
    std::string reply;
    try {
      reply = textgen.generate(e.response);
    } catch (const ClientError& ex) {
      ++res.report.failed;
      res.report.log.push_back(e.id + ": client failed: " + ex.what());
      continue;
    }
    if (refusals(reply)) {
      ++res.report.filtered;
      res.report.log.push_back(e.id + ": refusal dropped");
      continue;
    }
    ManifestEntry out;
    out.id = e.id + "-sif1";
    out.audio_path = rebase(asr, e, out_dir);
    out.task = Task::SpeechIf;
    out.lang = ascii_only(reply) ? "en" : e.lang;
    out.prompt = std::nullopt;
    out.response = reply;
    out.source = e.source.empty() ? "speechif-type1" : e.source + " (speechif-type1)";
    res.entries.push_back(std::move(out));
    ++res.report.output;
  }
  return res;
}

std::vector<InstructionPair> read_instruction_pairs(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<InstructionPair> out;
  std::string line;
  for (int lineno = 1; std::getline(in, line); ++lineno) {
    if (trim(line).empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno) + ": ";
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& ex) {
      throw FormatError(where + ex.what());
    }
    if (!j.is_object() || !j.contains("instruction") || !j.contains("response") || !j["instruction"].is_string() ||
        !j["response"].is_string()) {
      throw FormatError(where + "expected string fields 'instruction' and 'response'");
    }
    InstructionPair p;
    p.instruction = j["instruction"].get<std::string>();
    p.response = j["response"].get<std::string>();
    p.id = j.value("id", "pair" + std::to_string(out.size()));
    p.lang = j.value("lang", "");
    p.voice = j.value("voice", "male");
    out.push_back(std::move(p));
  }
  return out;
}

GenResult speechif_type2(const std::vector<InstructionPair>& pairs, TtsClient& tts, const UnsuitableFilter& filter,
                         const std::filesystem::path& out_dir) {
  GenResult res;
  const auto audio_dir = out_dir / "audio";
  std::filesystem::create_directories(audio_dir);
  for (const auto& p : pairs) {
    ++res.report.input;
    if (filter(p.instruction)) {
      ++res.report.filtered;
      res.report.log.push_back(p.id + ": unsuitable instruction dropped");
      continue;
    }
    if (trim(p.response).empty()) {
      ++res.report.failed;
      res.report.log.push_back(p.id + ": empty response");
      continue;
    }
    std::vector<std::uint8_t> wav;
    try {
      wav = tts.synthesize(p.instruction, p.voice);
      audio::decode_wav(wav);  // reject unusable audio before writing it
    } catch (const Error& ex) {
      ++res.report.failed;
      res.report.log.push_back(p.id + ": tts failed: " + ex.what());
      continue;
    }
    const auto file = audio_dir / (p.id + ".wav");
    std::ofstream out(file, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(wav.data()), static_cast<std::streamsize>(wav.size()));
    if (!out) throw Error("cannot write " + file.string());
    ManifestEntry e;
    e.id = p.id + "-sif2";
    e.audio_path = "audio/" + p.id + ".wav";
    e.task = Task::SpeechIf;
    e.lang = !p.lang.empty() ? p.lang : (ascii_only(p.response) ? "en" : "th");
    e.response = p.response;
    e.source = "speechif-type2";
    res.entries.push_back(std::move(e));
    ++res.report.output;
  }
  return res;
}

std::string to_string(QaMode mode) { return mode == QaMode::Extractive ? "extractive" : "mcq"; }

QaMode qa_mode_from_string(const std::string& s) {
  if (s == "extractive") return QaMode::Extractive;
  if (s == "mcq") return QaMode::Mcq;
  throw ConfigError("qa mode must be 'extractive' or 'mcq', got '" + s + "'");
}

std::string qa_request(const std::string& transcript, QaMode mode) {
  std::string r;
  if (mode == QaMode::Extractive) {
    r = "Write question-answer pairs about the text below. Every answer must be copied exactly from the text. "
        "Reply with JSON: {\"pairs\": [{\"question\": ..., \"answer\": ...}]}.\n";
  } else {
    r = "Write multiple-choice questions about the text below, each with exactly four choices, one of them correct. "
        "Reply with JSON: {\"pairs\": [{\"question\": ..., \"choices\": [4 strings], \"answer\": ...}]}.\n";
  }
  r += "Mode: " + to_string(mode) + "\n";
  r += "Text: " + transcript;
  return r;
}

QaOutcome parse_qa_output(const std::string& raw, QaMode mode, const std::string& transcript) {
  json j;
  try {
    j = json::parse(raw);
  } catch (const json::parse_error&) {
    throw FormatError("qa output is not JSON");
  }
  if (!j.is_object() || !j.contains("pairs") || !j["pairs"].is_array()) {
    throw FormatError("qa output lacks a 'pairs' array");
  }
  QaOutcome out;
  for (const auto& item : j["pairs"]) {
    if (!item.is_object() || !item.contains("question") || !item.contains("answer") || !item["question"].is_string() ||
        !item["answer"].is_string()) {
      ++out.dropped;
      continue;
    }
    QaPair p{trim(item["question"].get<std::string>()), trim(item["answer"].get<std::string>())};
    if (p.question.empty() || p.answer.empty()) {
      ++out.dropped;
      continue;
    }
    if (mode == QaMode::Extractive) {
      if (transcript.find(p.answer) == std::string::npos) {
        ++out.dropped;
        continue;
      }
    } else {
      if (!item.contains("choices") || !item["choices"].is_array() || item["choices"].size() != 4) {
        ++out.dropped;
        continue;
      }
      std::vector<std::string> choices;
      for (const auto& c : item["choices"])
        if (c.is_string()) choices.push_back(trim(c.get<std::string>()));
      const bool distinct = std::set<std::string>(choices.begin(), choices.end()).size() == 4;
      if (choices.size() != 4 || !distinct || std::find(choices.begin(), choices.end(), p.answer) == choices.end()) {
        ++out.dropped;
        continue;
      }
      const char labels[] = {'A', 'B', 'C', 'D'};
      for (int i = 0; i < 4; ++i) p.question += std::string(" (") + labels[i] + ") " + choices[i];
    }
    out.pairs.push_back(std::move(p));
  }
  return out;
}

QaOutcome generate_qa_pairs(const std::string& transcript, QaMode mode, QaGenClient& client) {
  return parse_qa_output(client.generate_qa(qa_request(transcript, mode)), mode, transcript);
}

GenResult qa_manifest(const Manifest& asr, QaMode mode, QaGenClient& client, const std::filesystem::path& out_dir) {
  GenResult res;
  for (const auto& e : asr.entries) {
    ++res.report.input;
    if (e.task != Task::Asr) {
      ++res.report.filtered;
      res.report.log.push_back(e.id + ": not an asr entry");
      continue;
    }
    QaOutcome qa;
    try {
      qa = generate_qa_pairs(e.response, mode, client);
    } catch (const Error& ex) {
      ++res.report.failed;
      res.report.log.push_back(e.id + ": " + ex.what());
      continue;
    }
    if (qa.dropped > 0) res.report.log.push_back(e.id + ": " + std::to_string(qa.dropped) + " pair(s) failed validation");
    if (qa.pairs.empty()) {
      ++res.report.filtered;
      continue;
    }
    ++res.report.output;
    for (std::size_t i = 0; i < qa.pairs.size(); ++i) {
      ManifestEntry out;
      out.id = e.id + "-qa" + std::to_string(i);
      out.audio_path = rebase(asr, e, out_dir);
      out.task = Task::Qa;
      out.lang = e.lang;
      out.prompt = qa.pairs[i].question;
      out.response = qa.pairs[i].answer;
      out.source = "qa-" + to_string(mode);
      res.entries.push_back(std::move(out));
    }
  }
  return res;
}

// Mock rules: a colour word before a noun ("the red bird") or after "the N
// is" yields "What color is the N?"; otherwise the question asks for the last
// word. MCQ distractors come from a fixed list.
std::string MockQaGen::generate_qa(const std::string& request_prompt) {
  const auto mode_at = request_prompt.find("Mode: ");
  const auto text_at = request_prompt.find("Text: ");
  if (mode_at == std::string::npos || text_at == std::string::npos) throw ClientError("mock qagen: unrecognized request");
  const std::string mode = request_prompt.substr(mode_at + 6, request_prompt.find('\n', mode_at) - mode_at - 6);
  const std::string text = request_prompt.substr(text_at + 6);
  static const std::vector<std::string> colours{"red", "blue", "green", "black", "white", "yellow"};
  static const std::vector<std::string> fillers{"tree", "river", "house", "window", "music", "coffee"};
  const auto w = words(text);
  json pairs = json::array();
  std::string question, answer;
  for (std::size_t i = 0; i < w.size() && question.empty(); ++i) {
    if (std::find(colours.begin(), colours.end(), w[i]) == colours.end()) continue;
    if (i + 1 < w.size() && (i == 0 || w[i - 1] != "is")) {
      question = "What color is the " + w[i + 1] + "?";
      answer = w[i];
    } else if (i >= 2 && w[i - 1] == "is") {
      question = "What color is the " + w[i - 2] + "?";
      answer = w[i];
    }
  }
  if (question.empty() && w.size() >= 2 && ascii_only(text)) {
    question = "What is the last word of the sentence?";
    answer = w.back();
  }
  if (!question.empty()) {
    json item{{"question", question}, {"answer", answer}};
    if (mode == "mcq") {
      const bool colour = std::find(colours.begin(), colours.end(), answer) != colours.end();
      const auto& pool = colour ? colours : fillers;
      std::vector<std::string> choices{answer};
      for (const auto& c : pool)
        if (choices.size() < 4 && c != answer) choices.push_back(c);
      // rotate the answer into a position picked by its length
      std::rotate(choices.begin(), choices.begin() + static_cast<long>(answer.size() % 4), choices.end());
      item["choices"] = choices;
    }
    pairs.push_back(item);
  }
  return json{{"pairs", pairs}}.dump();
}

GenResult augment_captions(const Manifest& captions, CaptionAugmentClient& client,
                           const std::filesystem::path& out_dir) {
  GenResult res;
  for (const auto& e : captions.entries) {
    ++res.report.input;
    if (e.task != Task::Caption) {
      ++res.report.filtered;
      res.report.log.push_back(e.id + ": not a caption entry");
      continue;
    }
    ManifestEntry out = e;
    out.audio_path = rebase(captions, e, out_dir);
    out.source = (e.source.empty() ? std::string("caption") : e.source) + " (augmented)";
    try {
      std::string detailed = trim(client.augment(e.response));
      if (detailed.empty()) throw ClientError("empty augmented caption");
      out.response = detailed;
    } catch (const Error& ex) {
      ++res.report.fallback;
      res.report.log.push_back(e.id + ": kept original caption: " + ex.what());
    }
    res.entries.push_back(std::move(out));
    ++res.report.output;
  }
  return res;
}

Direction direction_from_string(const std::string& s) {
  if (s == "x2th") return Direction::X2Th;
  if (s == "th2x") return Direction::Th2X;
  throw ConfigError("translation direction must be 'x2th' or 'th2x', got '" + s + "'");
}

GenResult derive_translation_pairs(const Manifest& asr, Direction direction, TranslateClient& client, Rng& rng,
                                   const std::filesystem::path& out_dir) {
  GenResult res;
  for (const auto& e : asr.entries) {
    ++res.report.input;
    const bool source_ok = e.task == Task::Asr && (direction == Direction::X2Th ? e.lang != "th" : e.lang == "th");
    if (!source_ok) {
      ++res.report.filtered;
      res.report.log.push_back(e.id + ": not an asr entry in the source language");
      continue;
    }
    if (trim(e.response).empty()) {
      ++res.report.failed;
      res.report.log.push_back(e.id + ": empty transcript");
      continue;
    }
    const std::string target = direction == Direction::X2Th ? "th" : "en";
    std::string translated;
    try {
      translated = trim(client.translate(e.response, e.lang, target));
      if (translated.empty()) throw ClientError("empty translation");
    } catch (const Error& ex) {
      ++res.report.failed;
      res.report.log.push_back(e.id + ": translation failed: " + ex.what());
      continue;
    }
    ManifestEntry out;
    out.id = e.id + (direction == Direction::X2Th ? "-x2th" : "-th2x");
    out.audio_path = rebase(asr, e, out_dir);
    out.task = direction == Direction::X2Th ? Task::TranslateX2Th : Task::TranslateTh2X;
    out.lang = target;
    out.prompt = template_prompt(out.task, target, rng);
    out.prompt_lang = target;
    out.response = translated;
    out.source = e.source.empty() ? "translation" : e.source + " (translated)";
    res.entries.push_back(std::move(out));
    ++res.report.output;
  }
  return res;
}

}  // namespace forge::data
