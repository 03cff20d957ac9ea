#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "forge/data/clients.hpp"
#include "forge/data/manifest.hpp"
#include "forge/eval/judge.hpp"

namespace forge::eval {

// One audio clip, two or three chained sub-tasks and one required format.
// References are ordered like the sub-tasks.
struct ComplexIfItem {
  std::string id;
  std::string audio_path;  // relative to the file's directory
  std::string lang;        // of the transcript
  std::string prompt;
  OutputFormat format = OutputFormat::Json;
  std::vector<std::string> subtasks;  // e.g. transcribe, translate
  std::vector<std::string> references;
};

nlohmann::ordered_json to_json(const ComplexIfItem& item);
ComplexIfItem complexif_from_json(const nlohmann::json& j);

// Sub-tasks: transcribe (always first), translate, count_words, last_word.
// Translation references come from the client; base entries must be asr.
std::vector<ComplexIfItem> build_complexif_set(const std::vector<data::Manifest>& bases, std::uint64_t seed,
                                               data::TranslateClient& translate, const std::filesystem::path& out_dir,
                                               std::size_t limit = 0);

void write_complexif(const std::filesystem::path& path, const std::vector<ComplexIfItem>& items);
std::vector<ComplexIfItem> read_complexif(const std::filesystem::path& path);

}  // namespace forge::eval
