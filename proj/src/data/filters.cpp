#include "forge/data/filters.hpp"

#include <fstream>
#include <map>
#include <sstream>

#include "forge/data/assets.hpp"
#include "forge/error.hpp"
#include "json.hpp"

namespace forge::data {

std::string ascii_lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out)
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  return out;
}

std::vector<std::string> parse_pattern_list(std::string_view text) {
  std::vector<std::string> out;
  std::istringstream in{std::string(text)};
  for (std::string line; std::getline(in, line);) {
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos || line[b] == '#') continue;
    const auto e = line.find_last_not_of(" \t\r");
    out.push_back(line.substr(b, e - b + 1));
  }
  return out;
}

std::vector<std::string> load_pattern_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open pattern file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_pattern_list(ss.str());
}

RefusalFilter RefusalFilter::defaults() { return RefusalFilter{parse_pattern_list(asset("refusal_patterns.txt"))}; }

bool RefusalFilter::operator()(std::string_view text) const {
  if (text.find_first_not_of(" \t\r\n") == std::string_view::npos) return true;
  const std::string hay = ascii_lower(text);
  for (const auto& p : patterns)
    if (hay.find(ascii_lower(p)) != std::string::npos) return true;
  return false;
}

UnsuitableFilter UnsuitableFilter::defaults() {
  return UnsuitableFilter{parse_pattern_list(asset("unsuitable_keywords.txt")), 0.30};
}

double UnsuitableFilter::symbol_share(std::string_view text) {
  std::size_t total = 0, symbols = 0;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r') continue;
    if ((c & 0xC0) == 0x80) continue;
    ++total;
    if ((c >= '0' && c <= '9') || c == '+' || c == '-' || c == '*' || c == '/' || c == '=' || c == '^' ||
        c == '<' || c == '>')
      ++symbols;
  }
  return total == 0 ? 0.0 : static_cast<double>(symbols) / static_cast<double>(total);
}

bool UnsuitableFilter::operator()(std::string_view text) const {
  if (text.find("```") != std::string_view::npos) return true;
  if (symbol_share(text) > symbol_ratio) return true;
  const std::string hay = ascii_lower(text);
  for (const auto& k : keywords)
    if (hay.find(ascii_lower(k)) != std::string::npos) return true;
  return false;
}

bool refusal_filter(std::string_view text) {
  static const RefusalFilter f = RefusalFilter::defaults();
  return f(text);
}

bool unsuitable_instruction_filter(std::string_view text) {
  static const UnsuitableFilter f = UnsuitableFilter::defaults();
  return f(text);
}

namespace {

using TemplateTable = std::map<std::string, std::map<std::string, std::vector<std::string>>>;

const TemplateTable& templates() {
  static const TemplateTable table = [] {
    TemplateTable t;
    const auto j = nlohmann::json::parse(asset("prompt_templates.json"));
    for (auto task = j.begin(); task != j.end(); ++task)
      for (auto lang = task.value().begin(); lang != task.value().end(); ++lang)
        t[task.key()][lang.key()] = lang.value().get<std::vector<std::string>>();
    return t;
  }();
  return table;
}

}  // namespace

const std::vector<std::string>& template_list(Task task, const std::string& lang) {
  const auto& t = templates();
  auto it = t.find(to_string(task));
  if (it != t.end()) {
    auto jt = it->second.find(lang);
    if (jt != it->second.end() && !jt->second.empty()) return jt->second;
  }
  throw ConfigError("no prompt templates for task " + to_string(task) + " in language '" + lang + "'");
}

std::optional<std::string> template_prompt(Task task, const std::string& lang, Rng& rng) {
  if (task == Task::SpeechIf) return std::nullopt;
  const auto& list = template_list(task, lang);
  return list[rng.below(list.size())];
}

}  // namespace forge::data
