#include "forge/data/manifest.hpp"

#include <fstream>
#include <set>

#include "forge/error.hpp"
#include "forge/model/audio_lm.hpp"
#include "json.hpp"

namespace forge::data {

using nlohmann::json;

std::string to_string(Task task) {
  switch (task) {
    case Task::Asr: return "asr";
    case Task::Caption: return "caption";
    case Task::TranslateX2Th: return "translate_x2th";
    case Task::TranslateTh2X: return "translate_th2x";
    case Task::Qa: return "qa";
    case Task::SpeechIf: return "speechif";
  }
  return "unknown";
}

Task task_from_string(const std::string& s) {
  for (Task t : {Task::Asr, Task::Caption, Task::TranslateX2Th, Task::TranslateTh2X, Task::Qa, Task::SpeechIf})
    if (to_string(t) == s) return t;
  throw FormatError("unknown task '" + s + "'");
}

bool valid_utf8(const std::string& s) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(s.data());
  return model::is_valid_utf8(std::span<const std::uint8_t>(p, s.size()));
}

void validate(const ManifestEntry& e) {
  auto fail = [&](const std::string& why) { throw FormatError("entry '" + e.id + "': " + why); };
  if (e.id.empty()) throw FormatError("entry with empty id");
  if (e.audio_path.empty()) fail("empty audio path");
  if (e.lang.empty()) fail("empty lang");
  if (e.response.empty()) fail("empty response");
  if (e.task == Task::SpeechIf && e.prompt) fail("speechif entries must have a null prompt");
  for (const std::string* s : {&e.id, &e.response, &e.source, &e.lang})
    if (!valid_utf8(*s)) fail("field is not valid UTF-8");
  if (e.prompt && !valid_utf8(*e.prompt)) fail("prompt is not valid UTF-8");
}

std::string to_json_line(const ManifestEntry& e) {
  // ordered_json keeps field order stable in files
  nlohmann::ordered_json j;
  j["id"] = e.id;
  j["audio"] = e.audio_path;
  j["task"] = to_string(e.task);
  j["lang"] = e.lang;
  j["prompt"] = e.prompt ? json(*e.prompt) : json(nullptr);
  j["response"] = e.response;
  j["source"] = e.source;
  if (e.prompt_lang) j["prompt_lang"] = *e.prompt_lang;
  return j.dump();
}

ManifestEntry from_json_line(const std::string& line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& ex) {
    throw FormatError(std::string("invalid JSON: ") + ex.what());
  }
  if (!j.is_object()) throw FormatError("manifest line is not a JSON object");
  static const std::set<std::string> allowed{"id", "audio", "task", "lang", "prompt", "response", "source", "prompt_lang"};
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key())) throw FormatError("unknown manifest field '" + it.key() + "'");
  auto str = [&](const char* key, bool required) -> std::string {
    if (!j.contains(key)) {
      if (required) throw FormatError(std::string("missing field '") + key + "'");
      return {};
    }
    if (!j[key].is_string()) throw FormatError(std::string("field '") + key + "' must be a string");
    return j[key].get<std::string>();
  };
  ManifestEntry e;
  e.id = str("id", true);
  e.audio_path = str("audio", true);
  e.task = task_from_string(str("task", true));
  e.lang = str("lang", true);
  if (!j.contains("prompt")) throw FormatError("missing field 'prompt' (use null for none)");
  if (!j["prompt"].is_null()) {
    if (!j["prompt"].is_string()) throw FormatError("field 'prompt' must be a string or null");
    e.prompt = j["prompt"].get<std::string>();
  }
  e.response = str("response", true);
  e.source = str("source", false);
  if (j.contains("prompt_lang")) e.prompt_lang = str("prompt_lang", true);
  validate(e);
  return e;
}

Manifest read_manifest(const std::filesystem::path& path, bool check_audio) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open manifest " + path.string());
  Manifest m;
  m.dir = path.parent_path();
  std::set<std::string> ids;
  std::string line;
  for (int lineno = 1; std::getline(in, line); ++lineno) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    try {
      auto e = from_json_line(line);
      if (!ids.insert(e.id).second) throw FormatError("duplicate id '" + e.id + "'");
      if (check_audio && !std::filesystem::exists(m.audio_file(e))) {
        throw FormatError("entry '" + e.id + "': audio file " + m.audio_file(e).string() + " does not exist");
      }
      m.entries.push_back(std::move(e));
    } catch (const FormatError& ex) {
      throw FormatError(where + ": " + ex.what());
    }
  }
  return m;
}

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries) {
  std::string body;
  for (const auto& e : entries) {
    validate(e);
    body += to_json_line(e);
    body += '\n';
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << body;
    if (!out) throw Error("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string relative_audio(const std::filesystem::path& audio_file, const std::filesystem::path& manifest_dir) {
  const auto a = std::filesystem::weakly_canonical(std::filesystem::absolute(audio_file));
  const auto d = std::filesystem::weakly_canonical(std::filesystem::absolute(manifest_dir.empty() ? "." : manifest_dir));
  return a.lexically_relative(d).generic_string();
}

}  // namespace forge::data
