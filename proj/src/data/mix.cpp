#include "forge/data/mix.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "forge/data/filters.hpp"
#include "forge/error.hpp"
#include "forge/numerics/rng.hpp"

namespace forge::data {

using nlohmann::json;

MixtureSpec MixtureSpec::from_json(const json& j, const std::filesystem::path& base_dir) {
  if (!j.is_object()) throw ConfigError("mixture spec must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (it.key() != "seed" && it.key() != "sources") throw ConfigError("unknown mixture key '" + it.key() + "'");
  MixtureSpec spec;
  if (j.contains("seed")) spec.seed = j["seed"].get<std::uint64_t>();
  if (!j.contains("sources") || !j["sources"].is_array()) throw ConfigError("mixture spec needs a 'sources' array");
  for (const auto& s : j["sources"]) {
    for (auto it = s.begin(); it != s.end(); ++it) {
      if (it.key() != "manifest" && it.key() != "take" && it.key() != "prompt_lang_ratio") {
        throw ConfigError("unknown mixture source key '" + it.key() + "'");
      }
    }
    MixSource src;
    std::filesystem::path p = s.at("manifest").get<std::string>();
    src.manifest = p.is_absolute() || base_dir.empty() ? p : base_dir / p;
    src.take = s.at("take").get<std::size_t>();
    if (s.contains("prompt_lang_ratio")) src.prompt_lang_ratio = s["prompt_lang_ratio"].get<std::map<std::string, double>>();
    spec.sources.push_back(std::move(src));
  }
  return spec;
}

std::map<std::string, std::size_t> apportion(std::size_t n, const std::map<std::string, double>& weights) {
  if (weights.empty()) throw ConfigError("apportion: no weights");
  double total = 0.0;
  for (const auto& [k, w] : weights) {
    if (!(w >= 0.0)) throw ConfigError("weight for '" + k + "' must be non-negative");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("language weights sum to " + std::to_string(total) + ", not 1");
  std::map<std::string, std::size_t> out;
  std::vector<std::pair<double, std::string>> rema;
  std::size_t given = 0;
  for (const auto& [k, w] : weights) {
    // rounding guard so exact products (0.9 * 200) do not fall to 179.999..
    const double quota = w * static_cast<double>(n);
    const double fl = std::floor(quota + 1e-9);
    out[k] = static_cast<std::size_t>(fl);
    given += out[k];
    rema.emplace_back(std::max(0.0, quota - fl), k);
  }
  std::stable_sort(rema.begin(), rema.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; given < n; ++i, ++given) out[rema[i % rema.size()].second] += 1;
  return out;
}

json MixReport::to_json() const {
  json j;
  j["total"] = total;
  j["prompt_langs"] = prompt_langs;
  j["tasks"] = tasks;
  j["sources"] = json::array();
  for (const auto& s : sources) {
    j["sources"].push_back(json{{"manifest", s.manifest},
                                {"available", s.available},
                                {"taken", s.taken},
                                {"prompt_langs", s.prompt_langs},
                                {"tasks", s.tasks}});
  }
  return j;
}

MixReport mix(const MixtureSpec& spec, const std::filesystem::path& out_manifest) {
  if (spec.sources.empty()) throw ConfigError("mixture has no sources");
  Rng rng(spec.seed);
  const auto out_dir = out_manifest.parent_path();
  MixReport report;
  std::vector<ManifestEntry> all;
  std::set<std::string> ids;
  for (const auto& src : spec.sources) {
    const Manifest m = read_manifest(src.manifest, true);
    MixSourceReport sr;
    sr.manifest = src.manifest.generic_string();
    sr.available = m.entries.size();
    if (src.take > m.entries.size()) {
      throw ConfigError("source " + sr.manifest + ": take " + std::to_string(src.take) + " exceeds its " +
                        std::to_string(m.entries.size()) + " entries");
    }
    std::vector<std::size_t> idx(m.entries.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    rng.shuffle(idx);
    idx.resize(src.take);
    std::sort(idx.begin(), idx.end());

    std::vector<ManifestEntry> picked;
    for (auto i : idx) {
      ManifestEntry e = m.entries[i];
      e.audio_path = relative_audio(m.audio_file(e), out_dir);
      if (!ids.insert(e.id).second) throw ConfigError("duplicate id '" + e.id + "' across mixture sources");
      picked.push_back(std::move(e));
    }

    auto templatable = [](const ManifestEntry& e) { return e.task != Task::SpeechIf && e.task != Task::Qa; };
    std::vector<std::size_t> slots;
    for (std::size_t i = 0; i < picked.size(); ++i)
      if (templatable(picked[i])) slots.push_back(i);

    if (!src.prompt_lang_ratio.empty()) {
      std::vector<std::string> labels;
      for (const auto& [lang, count] : apportion(slots.size(), src.prompt_lang_ratio))
        labels.insert(labels.end(), count, lang);
      rng.shuffle(labels);
      for (std::size_t k = 0; k < slots.size(); ++k) {
        auto& e = picked[slots[k]];
        e.prompt = template_prompt(e.task, labels[k], rng);
        e.prompt_lang = labels[k];
      }
    } else {
      for (auto s : slots) {
        auto& e = picked[s];
        if (!e.prompt) {
          e.prompt = template_prompt(e.task, e.lang, rng);
          e.prompt_lang = e.lang;
        }
      }
    }
    for (const auto& e : picked) {
      if (e.prompt_lang) sr.prompt_langs[*e.prompt_lang] += 1;
      sr.tasks[to_string(e.task)] += 1;
    }
    sr.taken = picked.size();
    for (const auto& [k, v] : sr.prompt_langs) report.prompt_langs[k] += v;
    for (const auto& [k, v] : sr.tasks) report.tasks[k] += v;
    report.total += sr.taken;
    report.sources.push_back(std::move(sr));
    all.insert(all.end(), std::make_move_iterator(picked.begin()), std::make_move_iterator(picked.end()));
  }
  rng.shuffle(all);
  write_manifest(out_manifest, all);
  return report;
}

}  // namespace forge::data
