#include "forge/data/synth.hpp"

#include <cmath>
#include <fstream>
#include <numbers>

#include "forge/audio/wav.hpp"
#include "forge/data/tts.hpp"
#include "forge/error.hpp"
#include "forge/numerics/rng.hpp"
#include "json.hpp"

namespace forge::data {

namespace {

struct Word {
  const char* en;
  const char* th;
};

const Word kNouns[] = {{"bird", "นก"}, {"dog", "หมา"}, {"cat", "แมว"}, {"car", "รถ"},
                       {"ball", "ลูกบอล"}, {"fish", "ปลา"}, {"flower", "ดอกไม้"}, {"boat", "เรือ"}};
const Word kColours[] = {{"red", "สีแดง"},   {"blue", "สีฟ้า"}, {"green", "สีเขียว"},
                         {"white", "สีขาว"}, {"black", "สีดำ"}, {"yellow", "สีเหลือง"}};
const Word kPlaces[] = {{"in the park", "ในสวน"}, {"at home", "ที่บ้าน"}, {"near the river", "ใกล้แม่น้ำ"},
                        {"on the road", "บนถนน"}};

struct Sound {
  Word name;
  double hz;
  double pulse_s;
};
const Sound kSounds[] = {{{"a dog barks", "เสียงหมาเห่า"}, 450.0, 0.12},
                         {{"a bell rings", "เสียงระฆังดัง"}, 1200.0, 0.25},
                         {{"a bird chirps", "เสียงนกร้อง"}, 2400.0, 0.06},
                         {{"a car horn honks", "เสียงแตรรถดัง"}, 600.0, 0.30}};
const Word kTimes[] = {{"once", "หนึ่งครั้ง"}, {"twice", "สองครั้ง"}, {"three times", "สามครั้ง"}, {"four times", "สี่ครั้ง"}};

struct Instruction {
  Word ask;
  Word answer;
};
const Instruction kInstructions[] = {
    {{"name a fruit that is red", "บอกชื่อผลไม้สีแดง"}, {"An apple is red.", "แอปเปิ้ลมีสีแดง"}},
    {{"what color is the sky", "ท้องฟ้าสีอะไร"}, {"The sky is blue.", "ท้องฟ้าสีฟ้า"}},
    {{"say hello to my friend", "ทักทายเพื่อนของฉัน"}, {"Hello, friend!", "สวัสดีเพื่อน"}},
    {{"what animal says meow", "สัตว์อะไรร้องเหมียว"}, {"A cat says meow.", "แมวร้องเหมียว"}},
    {{"where do fish live", "ปลาอาศัยอยู่ที่ไหน"}, {"Fish live in water.", "ปลาอยู่ในน้ำ"}},
    {{"name a big animal", "บอกชื่อสัตว์ตัวใหญ่"}, {"An elephant is big.", "ช้างตัวใหญ่"}}};

template <class T, std::size_t N>
const T& pick(const T (&arr)[N], Rng& rng) {
  return arr[rng.below(N)];
}

const char* in(const Word& w, const std::string& lang) { return lang == "th" ? w.th : w.en; }

struct Scene {
  const Word* noun;
  const Word* colour;
  const Word* place;

  std::string sentence(const std::string& lang) const {
    if (lang == "th") return std::string(noun->th) + colour->th + "อยู่" + place->th;
    return std::string("the ") + colour->en + " " + noun->en + " is " + place->en;
  }
};

Scene draw_scene(Rng& rng) { return {&pick(kNouns, rng), &pick(kColours, rng), &pick(kPlaces, rng)}; }

audio::Waveform tone_bursts(double hz, double pulse_s, int pulses) {
  audio::Waveform w;
  const int on = static_cast<int>(pulse_s * audio::kSampleRate);
  const int off = static_cast<int>(0.1 * audio::kSampleRate);
  for (int p = 0; p < pulses; ++p) {
    for (int i = 0; i < on; ++i) {
      const double env = std::sin(std::numbers::pi * i / on);
      w.samples.push_back(static_cast<float>(0.5 * env * std::sin(2.0 * std::numbers::pi * hz * i / audio::kSampleRate)));
    }
    w.samples.insert(w.samples.end(), off, 0.0f);
  }
  return w;
}

std::string capitalised_sentence(std::string s) {
  if (!s.empty() && s[0] >= 'a' && s[0] <= 'z') s[0] = static_cast<char>(s[0] - 'a' + 'A');
  return s + ".";
}

}  // namespace

std::string to_string(SynthTask t) {
  switch (t) {
    case SynthTask::Asr: return "asr";
    case SynthTask::Caption: return "caption";
    case SynthTask::TranslateX2Th: return "translate_x2th";
    case SynthTask::TranslateTh2X: return "translate_th2x";
    case SynthTask::SpokenQa: return "spoken_qa";
    case SynthTask::Gender: return "gender";
    case SynthTask::SpeechIf: return "speechif";
  }
  return "?";
}

std::vector<ManifestEntry> synth_corpus(const SynthOptions& options, const std::filesystem::path& out_dir) {
  if (options.langs.empty()) throw ConfigError("synth corpus needs at least one language");
  for (const auto& l : options.langs)
    if (l != "en" && l != "th") throw ConfigError("synth corpus supports languages en and th, got '" + l + "'");
  std::filesystem::create_directories(out_dir / "audio");
  Rng rng(options.seed);
  std::vector<ManifestEntry> out;
  for (std::size_t i = 0; i < options.n; ++i) {
    const auto slot = static_cast<SynthTask>(i % kSynthTaskCount);
    // languages rotate once per full round of tasks
    const std::string lang = options.langs[(i / kSynthTaskCount) % options.langs.size()];
    ManifestEntry e;
    e.id = options.id_prefix + "-" + std::to_string(i);
    e.audio_path = "audio/" + e.id + ".wav";
    e.source = "synth-" + to_string(slot);
    audio::Waveform wav;
    const Scene scene = draw_scene(rng);
    switch (slot) {
      case SynthTask::Asr:
        e.task = Task::Asr;
        e.lang = lang;
        e.response = scene.sentence(lang);
        wav = mock_tts(e.response);
        break;
      case SynthTask::Caption: {
        const Sound& s = pick(kSounds, rng);
        const auto pulses = static_cast<int>(rng.below(4)) + 1;
        e.task = Task::Caption;
        e.lang = lang;
        e.response = lang == "th" ? std::string(s.name.th) + kTimes[pulses - 1].th
                                  : capitalised_sentence(std::string(s.name.en) + " " + kTimes[pulses - 1].en);
        wav = tone_bursts(s.hz, s.pulse_s, pulses);
        break;
      }
      case SynthTask::TranslateX2Th:
        e.task = Task::TranslateX2Th;
        e.lang = "th";
        e.response = scene.sentence("th");
        wav = mock_tts(scene.sentence("en"));
        break;
      case SynthTask::TranslateTh2X:
        e.task = Task::TranslateTh2X;
        e.lang = "en";
        e.response = scene.sentence("en");
        wav = mock_tts(scene.sentence("th"));
        break;
      case SynthTask::SpokenQa: {
        e.task = Task::Qa;
        e.lang = lang;
        wav = mock_tts(scene.sentence(lang));
        const bool ask_colour = rng.below(2) == 0;
        if (lang == "th") {
          e.prompt = std::string(scene.noun->th) + (ask_colour ? "สีอะไร" : "อยู่ที่ไหน");
          e.response = ask_colour ? scene.colour->th : scene.place->th;
        } else {
          e.prompt = std::string(ask_colour ? "What color is the " : "Where is the ") + scene.noun->en + "?";
          e.response = ask_colour ? scene.colour->en : scene.place->en;
        }
        break;
      }
      case SynthTask::Gender: {
        const bool female = rng.below(2) == 0;
        e.task = Task::Qa;
        e.lang = lang;
        if (lang == "th") {
          e.prompt = kGenderQuestionTh;
          e.response = female ? "ผู้หญิง" : "ผู้ชาย";
        } else {
          e.prompt = kGenderQuestion;
          e.response = female ? "female" : "male";
        }
        wav = mock_tts(scene.sentence(lang), female ? "female" : "male");
        break;
      }
      case SynthTask::SpeechIf: {
        const Instruction& ins = pick(kInstructions, rng);
        e.task = Task::SpeechIf;
        e.lang = lang;
        e.response = in(ins.answer, lang);
        wav = mock_tts(in(ins.ask, lang));
        break;
      }
    }
    audio::write_wav((out_dir / e.audio_path).string(), wav);
    out.push_back(std::move(e));
  }
  write_manifest(out_dir / "manifest.jsonl", out);
  return out;
}

std::vector<ManifestEntry> synth_asr_corpus(std::uint64_t seed, std::size_t n, const std::filesystem::path& out_dir,
                                            const std::string& id_prefix) {
  std::filesystem::create_directories(out_dir / "audio");
  Rng rng(seed);
  std::vector<ManifestEntry> out;
  for (std::size_t i = 0; i < n; ++i) {
    ManifestEntry e;
    e.id = id_prefix + "-" + std::to_string(i);
    e.audio_path = "audio/" + e.id + ".wav";
    e.task = Task::Asr;
    e.lang = "en";
    e.source = "synth-asr";
    const Scene scene = draw_scene(rng);
    switch (rng.below(3)) {
      case 0: e.response = capitalised_sentence(scene.sentence("en")); break;
      case 1: e.response = std::string("What color is the ") + scene.noun->en + "?"; break;
      default: e.response = capitalised_sentence(pick(kInstructions, rng).ask.en); break;
    }
    audio::write_wav((out_dir / e.audio_path).string(), mock_tts(e.response));
    out.push_back(std::move(e));
  }
  write_manifest(out_dir / "manifest.jsonl", out);
  return out;
}

std::vector<InstructionPair> synth_instruction_pairs(std::uint64_t seed, std::size_t n, double planted_fraction) {
  if (planted_fraction < 0.0 || planted_fraction > 1.0) throw ConfigError("planted fraction must be in [0, 1]");
  static const char* kPlanted[][2] = {
      {"```python\nprint(sum(range(10)))\n```\nWhat does this print?", "It prints 45."},
      {"Solve 3x^2+4x=7 for x", "x = 1 or x = -7/3."},
      {"Write a regex that matches an email address.", "[^@]+@[^@]+"},
      {"Compute 12*7-5+3/1=?", "82"},
      {"Explain why this code does not compile: int x = ;", "The initializer is missing."},
      {"Find the derivative of the equation y = x^3.", "3x^2"}};
  Rng rng(seed);
  const auto planted = static_cast<std::size_t>(std::llround(planted_fraction * static_cast<double>(n)));
  std::vector<bool> mark(n, false);
  std::fill(mark.begin(), mark.begin() + static_cast<std::ptrdiff_t>(planted), true);
  rng.shuffle(mark);
  std::vector<InstructionPair> out;
  for (std::size_t i = 0; i < n; ++i) {
    InstructionPair p;
    p.voice = rng.below(2) == 0 ? "male" : "female";
    if (mark[i]) {
      const auto& pl = kPlanted[rng.below(std::size(kPlanted))];
      p.id = "ins-" + std::to_string(i) + "-planted";
      p.instruction = pl[0];
      p.response = pl[1];
      p.lang = "en";
    } else {
      const std::string lang = rng.below(4) == 0 ? "th" : "en";
      const Instruction& ins = pick(kInstructions, rng);
      p.id = "ins-" + std::to_string(i);
      p.instruction = lang == "th" ? std::string(ins.ask.th) : capitalised_sentence(ins.ask.en);
      p.response = in(ins.answer, lang);
      p.lang = lang;
    }
    out.push_back(std::move(p));
  }
  return out;
}

void write_instruction_pairs(const std::filesystem::path& path, const std::vector<InstructionPair>& pairs) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw Error("cannot write " + tmp);
    for (const auto& p : pairs) {
      nlohmann::ordered_json j{{"id", p.id}, {"instruction", p.instruction}, {"response", p.response},
                               {"lang", p.lang}, {"voice", p.voice}};
      f << j.dump() << '\n';
    }
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace forge::data
