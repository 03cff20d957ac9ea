#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "forge/data/manifest.hpp"
#include "json.hpp"

namespace forge::data {

struct MixSource {
  std::filesystem::path manifest;
  std::size_t take = 0;
  // prompt language -> weight; empty keeps prompts in the response language
  std::map<std::string, double> prompt_lang_ratio;
};

struct MixtureSpec {
  std::uint64_t seed = 0;
  std::vector<MixSource> sources;

  // {"seed": n, "sources": [{"manifest", "take", "prompt_lang_ratio"?}]};
  // relative manifest paths resolve against base_dir. Unknown keys throw.
  static MixtureSpec from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
};

// Largest-remainder apportionment of n items over weights (which must sum to
// 1 within 1e-9). Ties in the remainder go to the lexicographically first key.
std::map<std::string, std::size_t> apportion(std::size_t n, const std::map<std::string, double>& weights);

struct MixSourceReport {
  std::string manifest;
  std::size_t available = 0;
  std::size_t taken = 0;
  std::map<std::string, std::size_t> prompt_langs;
  std::map<std::string, std::size_t> tasks;
};

struct MixReport {
  std::vector<MixSourceReport> sources;
  std::size_t total = 0;
  std::map<std::string, std::size_t> prompt_langs;
  std::map<std::string, std::size_t> tasks;

  nlohmann::json to_json() const;
};

// Samples `take` entries per source without replacement, assigns prompt
// languages per ratio (templating a fresh prompt in that language), shuffles
// globally and writes JSONL to out_manifest. speechif entries keep a null
// prompt and qa entries keep their question; neither takes part in the
// language apportionment.
MixReport mix(const MixtureSpec& spec, const std::filesystem::path& out_manifest);

}  // namespace forge::data
