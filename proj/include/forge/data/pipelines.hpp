#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "forge/data/clients.hpp"
#include "forge/data/filters.hpp"
#include "forge/data/manifest.hpp"
#include "forge/numerics/rng.hpp"
#include "json.hpp"

namespace forge::data {

// Accounting for one generation op: input == output + filtered + failed.
// `fallback` counts outputs that kept their original text after a client
// failure (caption augmentation); they are part of `output`.
struct GenReport {
  std::size_t input = 0;
  std::size_t output = 0;
  std::size_t filtered = 0;
  std::size_t failed = 0;
  std::size_t fallback = 0;
  std::vector<std::string> log;  // one line per skipped or degraded entry

  bool reconciled() const { return input == output + filtered + failed; }
  nlohmann::json to_json() const;
};

struct GenResult {
  std::vector<ManifestEntry> entries;
  GenReport report;
};

// Entries produced by a pipeline point at audio relative to out_dir, where
// the caller is expected to write the resulting manifest.

// ASR transcripts become spoken instructions: the textgen client answers each
// transcript, refusals are dropped, prompt is null, task speechif.
GenResult speechif_type1(const Manifest& asr, TextGenClient& textgen, const RefusalFilter& refusals,
                         const std::filesystem::path& out_dir);

struct InstructionPair {
  std::string id;
  std::string instruction;
  std::string response;
  std::string lang;  // of the response; empty means detect (ASCII -> en, else th)
  std::string voice = "male";
};

// JSONL with {"id"?, "instruction", "response", "lang"?, "voice"?} per line.
std::vector<InstructionPair> read_instruction_pairs(const std::filesystem::path& path);

// Unsuitable instructions are dropped; the rest are spoken by the TTS client
// into <out_dir>/audio/<id>.wav and emitted as speechif entries.
GenResult speechif_type2(const std::vector<InstructionPair>& pairs, TtsClient& tts, const UnsuitableFilter& filter,
                         const std::filesystem::path& out_dir);

enum class QaMode { Extractive, Mcq };
std::string to_string(QaMode mode);
QaMode qa_mode_from_string(const std::string& s);

struct QaPair {
  std::string question;
  std::string answer;
};

// Request text sent to the QA client for one transcript.
std::string qa_request(const std::string& transcript, QaMode mode);

struct QaOutcome {
  std::vector<QaPair> pairs;
  std::size_t dropped = 0;  // pairs failing validation
};

// Parses {"pairs": [{"question", "answer", "choices"?}]}. Extractive answers
// must occur verbatim in the transcript; MCQ items need exactly four choices
// containing the answer, and the question is rewritten to embed them as
// "(A) .. (B) .. (C) .. (D) ..". Throws FormatError when the output is not
// parseable at all.
QaOutcome parse_qa_output(const std::string& raw, QaMode mode, const std::string& transcript);
QaOutcome generate_qa_pairs(const std::string& transcript, QaMode mode, QaGenClient& client);

// One qa entry per validated pair; source entries must be asr.
GenResult qa_manifest(const Manifest& asr, QaMode mode, QaGenClient& client, const std::filesystem::path& out_dir);

// Replaces each caption with the client's detailed version; on failure the
// original is kept and logged. Source is tagged " (augmented)".
GenResult augment_captions(const Manifest& captions, CaptionAugmentClient& client,
                           const std::filesystem::path& out_dir);

enum class Direction { X2Th, Th2X };
Direction direction_from_string(const std::string& s);

// asr entries in the direction's source language become translation entries
// with a prompt templated in the response language. Other languages are
// counted as filtered; empty transcripts are skipped as failed.
GenResult derive_translation_pairs(const Manifest& asr, Direction direction, TranslateClient& client, Rng& rng,
                                   const std::filesystem::path& out_dir);

}  // namespace forge::data
