#include "forge/eval/judge.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <regex>
#include <set>
#include <vector>

#include "forge/data/assets.hpp"
#include "forge/data/filters.hpp"
#include "forge/error.hpp"
#include "forge/eval/metrics.hpp"
#include "json.hpp"

namespace forge::eval {

namespace {

constexpr std::string_view kQuestionTag = "[Question]\n";
constexpr std::string_view kAnswerOpen = "\n\n[The Start of Assistant's Answer]\n";
constexpr std::string_view kAnswerClose = "\n[The End of Assistant's Answer]";
constexpr std::string_view kFormatLead = "The required format is: ";

std::string replace_all(std::string s, std::string_view key, std::string_view value) {
  std::size_t pos = 0;
  while ((pos = s.find(key, pos)) != std::string::npos) {
    s.replace(pos, key.size(), value);
    pos += value.size();
  }
  return s;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

// ```lang ... ``` around the whole answer is tolerated
std::string_view strip_fence(std::string_view s) {
  s = trim(s);
  if (!s.starts_with("```") || !s.ends_with("```") || s.size() < 6) return s;
  s.remove_suffix(3);
  const auto nl = s.find('\n');
  if (nl == std::string_view::npos) return trim(s.substr(3));
  return trim(s.substr(nl + 1));
}

bool well_formed_xml(std::string_view s) {
  std::vector<std::string> stack;
  bool seen_root = false;
  std::size_t i = 0;
  while (i < s.size()) {
    if (s[i] != '<') {
      if (stack.empty() && !std::isspace(static_cast<unsigned char>(s[i]))) return false;
      ++i;
      continue;
    }
    if (s.substr(i).starts_with("<!--")) {
      const auto end = s.find("-->", i + 4);
      if (end == std::string_view::npos) return false;
      i = end + 3;
      continue;
    }
    if (s.substr(i).starts_with("<?")) {
      const auto end = s.find("?>", i + 2);
      if (end == std::string_view::npos || seen_root) return false;
      i = end + 2;
      continue;
    }
    const auto end = s.find('>', i);
    if (end == std::string_view::npos) return false;
    std::string_view tag = s.substr(i + 1, end - i - 1);
    i = end + 1;
    const bool closing = tag.starts_with("/");
    const bool self_closing = !closing && tag.ends_with("/");
    if (closing) tag.remove_prefix(1);
    if (self_closing) tag.remove_suffix(1);
    const auto name_end = tag.find_first_of(" \t\r\n");
    const std::string name(tag.substr(0, name_end));
    if (name.empty() || !(std::isalpha(static_cast<unsigned char>(name[0])) || name[0] == '_')) return false;
    if (closing) {
      if (stack.empty() || stack.back() != name) return false;
      stack.pop_back();
    } else {
      if (stack.empty() && seen_root) return false;  // second root
      seen_root = true;
      if (!self_closing) stack.push_back(name);
    }
  }
  return seen_root && stack.empty();
}

bool markdown_structured(std::string_view s) {
  std::size_t start = 0;
  while (start <= s.size()) {
    auto end = s.find('\n', start);
    if (end == std::string_view::npos) end = s.size();
    std::string_view line = s.substr(start, end - start);
    while (!line.empty() && line.front() == ' ') line.remove_prefix(1);
    if (line.starts_with("# ") || line.starts_with("## ") || line.starts_with("### ") || line.starts_with("- ") ||
        line.starts_with("* ") || line.starts_with("| ")) {
      return true;
    }
    if (line.size() > 2 && std::isdigit(static_cast<unsigned char>(line[0])) && line.substr(1).starts_with(". ")) return true;
    start = end + 1;
  }
  return false;
}

std::string_view between(std::string_view text, std::string_view open, std::string_view close) {
  const auto a = text.find(open);
  if (a == std::string_view::npos) return {};
  const auto from = a + open.size();
  const auto b = text.rfind(close);
  if (b == std::string_view::npos || b < from) return {};
  return text.substr(from, b - from);
}

double quality_heuristic(std::string_view question, std::string_view response) {
  const auto body = trim(response);
  if (body.empty()) return 1.0;
  if (data::refusal_filter(body)) return 2.0;
  const auto q = split_words(normalize_answer(question));
  const auto r = split_words(normalize_answer(body));
  std::set<std::string> rset(r.begin(), r.end());
  std::size_t content = 0, shared = 0;
  for (const auto& w : q) {
    if (w.size() < 3) continue;
    ++content;
    if (rset.count(w)) ++shared;
  }
  double score = 4.0;
  if (content > 0) score += 3.0 * static_cast<double>(shared) / static_cast<double>(content);
  score += std::min(3.0, static_cast<double>(r.size()) / 8.0);
  // if the answer merely echoes the question it earns nothing extra
  if (normalize_answer(body) == normalize_answer(question)) score = 3.0;
  score = std::round(std::clamp(score, kMinRating, kMaxRating) * 2.0) / 2.0;
  return score;
}

}  // namespace

double parse_rating(std::string_view judge_text) {
  static const std::regex pattern(R"(\[\[\s*([+-]?[0-9]+(?:\.[0-9]+)?)\s*\]\])");
  const std::string text(judge_text);
  std::string last;
  for (auto it = std::sregex_iterator(text.begin(), text.end(), pattern); it != std::sregex_iterator(); ++it) {
    last = (*it)[1].str();
  }
  if (last.empty()) throw JudgeError("judge reply has no [[rating]]");
  const double x = std::stod(last);
  if (x < kMinRating || x > kMaxRating) throw JudgeError("judge rating " + last + " is outside [1.0, 10.0]");
  return x;
}

std::string format_rating(double score) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "[[%.1f]]", score);
  return buf;
}

std::string to_string(OutputFormat f) {
  switch (f) {
    case OutputFormat::Json: return "JSON";
    case OutputFormat::Xml: return "XML";
    case OutputFormat::Markdown: return "Markdown";
  }
  return "?";
}

OutputFormat output_format_from_string(const std::string& s) {
  const std::string low = data::ascii_lower(s);
  if (low == "json") return OutputFormat::Json;
  if (low == "xml") return OutputFormat::Xml;
  if (low == "markdown") return OutputFormat::Markdown;
  throw ConfigError("unknown output format '" + s + "'");
}

bool conforms(std::string_view response, OutputFormat format) {
  switch (format) {
    case OutputFormat::Json: {
      const auto body = strip_fence(response);
      if (body.empty() || (body.front() != '{' && body.front() != '[')) return false;
      return nlohmann::json::accept(body);
    }
    case OutputFormat::Xml: return well_formed_xml(strip_fence(response));
    case OutputFormat::Markdown: return markdown_structured(response);
  }
  return false;
}

std::string render_judge_prompt(JudgeAspect aspect, std::string_view question, std::string_view response,
                                std::string_view required_format) {
  std::string_view name = aspect == JudgeAspect::Single    ? "judge_single.txt"
                          : aspect == JudgeAspect::Quality ? "judge_quality.txt"
                                                           : "judge_format.txt";
  std::string t(data::asset(name));
  // format first: the answer itself may contain braces
  t = replace_all(std::move(t), "{format}", required_format);
  const auto q = t.find("{question}");
  if (q != std::string::npos) t.replace(q, 10, question);
  const auto r = t.find("{response}", q == std::string::npos ? 0 : q + question.size());
  if (r != std::string::npos) t.replace(r, 10, response);
  return t;
}

JudgeVerdict judge_score(std::string_view question, std::string_view response, data::TextGenClient& judge) {
  JudgeVerdict v;
  v.raw = judge.generate(render_judge_prompt(JudgeAspect::Single, question, response));
  v.score = parse_rating(v.raw);
  return v;
}

ComplexIfVerdict complexif_judge(std::string_view question, OutputFormat required_format, std::string_view response,
                                 data::TextGenClient& judge) {
  ComplexIfVerdict out;
  auto run = [&](JudgeAspect aspect, AspectVerdict& v) {
    try {
      v.raw = judge.generate(render_judge_prompt(aspect, question, response, to_string(required_format)));
      v.score = parse_rating(v.raw);
    } catch (const Error& e) {
      v.score.reset();
      v.error = e.what();
    }
  };
  run(JudgeAspect::Quality, out.quality);
  run(JudgeAspect::Format, out.format);
  return out;
}

std::string MockJudge::generate(const std::string& prompt) {
  const std::string_view p(prompt);
  const auto question = between(p, kQuestionTag, kAnswerOpen);
  const auto response = between(p, kAnswerOpen, kAnswerClose);
  if (p.find(kAnswerOpen) == std::string_view::npos) throw ClientError("mock judge: prompt has no answer block");
  const auto lead = p.find(kFormatLead);
  if (lead != std::string_view::npos) {
    const auto from = lead + kFormatLead.size();
    const auto dot = p.find('.', from);
    const std::string fmt(p.substr(from, dot - from));
    const bool ok = conforms(response, output_format_from_string(fmt));
    return std::string(ok ? "The answer follows the required " : "The answer does not follow the required ") + fmt +
           " format. Rating: " + format_rating(ok ? 10.0 : 1.0);
  }
  const double s = quality_heuristic(question, response);
  return "Scored on relevance to the question and level of detail. Rating: " + format_rating(s);
}

}  // namespace forge::eval
