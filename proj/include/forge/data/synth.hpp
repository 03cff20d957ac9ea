#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "forge/data/manifest.hpp"
#include "forge/data/pipelines.hpp"

namespace forge::data {

// Round-robin task slots. Gender examples are stored as task qa with a fixed
// question and source "synth-gender"; spoken QA uses source "synth-qa".
enum class SynthTask { Asr, Caption, TranslateX2Th, TranslateTh2X, SpokenQa, Gender, SpeechIf };
inline constexpr int kSynthTaskCount = 7;

std::string to_string(SynthTask t);
inline constexpr const char* kGenderQuestion = "What is the gender of the speaker?";
inline constexpr const char* kGenderQuestionTh = "ผู้พูดเป็นเพศอะไร";

struct SynthOptions {
  std::uint64_t seed = 0;
  std::size_t n = 70;
  std::vector<std::string> langs{"en", "th"};
  std::string id_prefix = "syn";
};

// Writes <out_dir>/audio/<id>.wav and <out_dir>/manifest.jsonl. Speech comes
// from the mock TTS over phrases of a small English/Thai grammar; captions
// describe synthetic tone bursts. Prompts are left null for the templatable
// tasks (the mixer fills them) and set for qa/gender.
std::vector<ManifestEntry> synth_corpus(const SynthOptions& options, const std::filesystem::path& out_dir);

// Text instruction/response pairs; planted_fraction of them are code or math
// requests the unsuitable filter should drop. Planted ids end in "-planted".
std::vector<InstructionPair> synth_instruction_pairs(std::uint64_t seed, std::size_t n, double planted_fraction);
void write_instruction_pairs(const std::filesystem::path& path, const std::vector<InstructionPair>& pairs);

// ASR manifest of spoken questions/statements for Type1 generation.
std::vector<ManifestEntry> synth_asr_corpus(std::uint64_t seed, std::size_t n, const std::filesystem::path& out_dir,
                                            const std::string& id_prefix = "asr");

}  // namespace forge::data
