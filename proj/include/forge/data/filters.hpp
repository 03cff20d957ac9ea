#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "forge/data/manifest.hpp"
#include "forge/numerics/rng.hpp"

namespace forge::data {

std::string ascii_lower(std::string_view s);

struct RefusalFilter {
  std::vector<std::string> patterns;  // case-insensitive substrings

  static RefusalFilter defaults();  // assets/refusal_patterns.txt
  // true means drop; blank text is dropped as degenerate
  bool operator()(std::string_view text) const;
};

struct UnsuitableFilter {
  std::vector<std::string> keywords;
  double symbol_ratio = 0.30;  // share of non-space chars that are digits or + - * / = ^ < >

  static UnsuitableFilter defaults();  // assets/unsuitable_keywords.txt
  bool operator()(std::string_view text) const;
  // digits and math symbols over non-space characters (bytes; UTF-8
  // continuation bytes are not counted separately)
  static double symbol_share(std::string_view text);
};

bool refusal_filter(std::string_view text);
bool unsuitable_instruction_filter(std::string_view text);

// Uniform draw from the paraphrase list for (task, lang). speechif is never
// templated and yields nullopt; a missing pair throws ConfigError.
std::optional<std::string> template_prompt(Task task, const std::string& lang, Rng& rng);
const std::vector<std::string>& template_list(Task task, const std::string& lang);

}  // namespace forge::data
