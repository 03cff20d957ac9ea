#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace forge::data {

enum class Task { Asr, Caption, TranslateX2Th, TranslateTh2X, Qa, SpeechIf };

std::string to_string(Task task);
Task task_from_string(const std::string& s);

struct ManifestEntry {
  std::string id;
  std::string audio_path;  // relative to the manifest's directory
  Task task = Task::Asr;
  std::string lang;  // language of the response
  std::optional<std::string> prompt;
  std::string response;
  std::string source;
  std::optional<std::string> prompt_lang;  // set by the mixer when it templates a prompt
};

// Throws FormatError naming the id and the broken rule: empty id/response,
// speechif with a prompt, malformed UTF-8, missing lang.
void validate(const ManifestEntry& e);

std::string to_json_line(const ManifestEntry& e);
ManifestEntry from_json_line(const std::string& line);

struct Manifest {
  std::filesystem::path dir;  // audio paths resolve against this
  std::vector<ManifestEntry> entries;

  std::filesystem::path audio_file(const ManifestEntry& e) const { return dir / e.audio_path; }
};

// Schema-validated load; errors carry "<file>:<line>". When check_audio is
// set every audio file must exist.
Manifest read_manifest(const std::filesystem::path& path, bool check_audio = false);
// Validates every entry, then writes one JSON object per line (atomic).
void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries);

// Audio path for a file, expressed relative to an output manifest directory.
std::string relative_audio(const std::filesystem::path& audio_file, const std::filesystem::path& manifest_dir);

bool valid_utf8(const std::string& s);

}  // namespace forge::data
