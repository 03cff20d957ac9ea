#include "forge/eval/complexif.hpp"

#include <fstream>

#include "forge/error.hpp"
#include "forge/eval/metrics.hpp"
#include "forge/numerics/rng.hpp"

namespace forge::eval {

using nlohmann::json;

namespace {

struct SubTask {
  const char* name;
  const char* key;
  const char* instruction;
};

const SubTask kTranscribe{"transcribe", "transcription", "transcribe the audio"};
const SubTask kExtra[] = {{"translate", "translation", "translate the transcript into the other language"},
                          {"count_words", "word_count", "count the words that are spoken"},
                          {"last_word", "last_word", "give the last word that is spoken"}};

std::string format_instruction(OutputFormat f, const std::vector<const SubTask*>& steps) {
  std::string keys;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    if (i) keys += i + 1 == steps.size() ? " and " : ", ";
    keys += f == OutputFormat::Xml ? std::string("<") + steps[i]->key + ">" : std::string("\"") + steps[i]->key + "\"";
  }
  switch (f) {
    case OutputFormat::Json: return "Answer only with a JSON object with the keys " + keys + ".";
    case OutputFormat::Xml: return "Answer only with XML: one <response> element containing " + keys + ".";
    case OutputFormat::Markdown: return "Answer in Markdown with one \"## \" heading per step, in order.";
  }
  return {};
}

}  // namespace

nlohmann::ordered_json to_json(const ComplexIfItem& item) {
  return {{"id", item.id},         {"audio", item.audio_path},         {"lang", item.lang},
          {"prompt", item.prompt}, {"format", to_string(item.format)}, {"subtasks", item.subtasks},
          {"references", item.references}};
}

ComplexIfItem complexif_from_json(const json& j) {
  ComplexIfItem it;
  try {
    it.id = j.at("id").get<std::string>();
    it.audio_path = j.at("audio").get<std::string>();
    it.lang = j.at("lang").get<std::string>();
    it.prompt = j.at("prompt").get<std::string>();
    it.format = output_format_from_string(j.at("format").get<std::string>());
    it.subtasks = j.at("subtasks").get<std::vector<std::string>>();
    it.references = j.at("references").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("complexif item: ") + e.what());
  }
  if (it.subtasks.size() != it.references.size()) throw FormatError("complexif item " + it.id + ": subtasks and references differ in length");
  return it;
}

std::vector<ComplexIfItem> build_complexif_set(const std::vector<data::Manifest>& bases, std::uint64_t seed,
                                               data::TranslateClient& translate, const std::filesystem::path& out_dir,
                                               std::size_t limit) {
  Rng rng(seed);
  std::vector<ComplexIfItem> out;
  for (const auto& m : bases) {
    for (const auto& e : m.entries) {
      if (e.task != data::Task::Asr) continue;
      if (limit && out.size() >= limit) return out;
      ComplexIfItem it;
      it.id = e.id + "-cpx";
      it.audio_path = data::relative_audio(m.audio_file(e), out_dir);
      it.lang = e.lang;
      const std::size_t extra = 1 + rng.below(2);
      std::vector<const SubTask*> pool;
      for (const auto& s : kExtra) pool.push_back(&s);
      rng.shuffle(pool);
      std::vector<const SubTask*> steps{&kTranscribe};
      steps.insert(steps.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(extra));
      it.format = static_cast<OutputFormat>(rng.below(3));

      const auto words = split_words(e.response);
      std::string prompt = "First ";
      for (std::size_t i = 0; i < steps.size(); ++i) {
        if (i) prompt += i + 1 == steps.size() ? ", and finally " : ", then ";
        prompt += steps[i]->instruction;
        it.subtasks.push_back(steps[i]->name);
        const std::string name = steps[i]->name;
        if (name == "transcribe") it.references.push_back(e.response);
        else if (name == "translate") it.references.push_back(translate.translate(e.response, e.lang, e.lang == "th" ? "en" : "th"));
        else if (name == "count_words") it.references.push_back(std::to_string(words.size()));
        else it.references.push_back(words.empty() ? "" : words.back());
      }
      prompt += ". " + format_instruction(it.format, steps);
      it.prompt = std::move(prompt);
      out.push_back(std::move(it));
    }
  }
  return out;
}

void write_complexif(const std::filesystem::path& path, const std::vector<ComplexIfItem>& items) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw Error("cannot write " + tmp);
    for (const auto& it : items) f << to_json(it).dump() << '\n';
  }
  std::filesystem::rename(tmp, path);
}

std::vector<ComplexIfItem> read_complexif(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open " + path.string());
  std::vector<ComplexIfItem> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(f, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      out.push_back(complexif_from_json(json::parse(line)));
    } catch (const json::parse_error& e) {
      throw FormatError(path.string() + ":" + std::to_string(n) + ": " + e.what());
    } catch (const FormatError& e) {
      throw FormatError(path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace forge::eval
