#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "forge/data/clients.hpp"

namespace forge::eval {

inline constexpr double kMinRating = 1.0;
inline constexpr double kMaxRating = 10.0;

// Last "[[x]]" with a decimal x in the text. Throws JudgeError when there is
// none or x is outside [1, 10]; never falls back to a default.
double parse_rating(std::string_view judge_text);
std::string format_rating(double score);  // "[[7.5]]"

enum class OutputFormat { Json, Xml, Markdown };
std::string to_string(OutputFormat f);
OutputFormat output_format_from_string(const std::string& s);  // json, xml, markdown (any case)

// Structural checks used by the mock judge and the ComplexIF builder's tests.
bool conforms(std::string_view response, OutputFormat format);

enum class JudgeAspect { Single, Quality, Format };

// Fills {question}, {response} and, for the format aspect, {format} in the
// judge template asset.
std::string render_judge_prompt(JudgeAspect aspect, std::string_view question, std::string_view response,
                                std::string_view required_format = {});

struct JudgeVerdict {
  double score = 0.0;
  std::string raw;
};

JudgeVerdict judge_score(std::string_view question, std::string_view response, data::TextGenClient& judge);

struct AspectVerdict {
  std::optional<double> score;
  std::string raw;
  std::string error;  // set when the judge call or its parse failed
};

struct ComplexIfVerdict {
  AspectVerdict quality;
  AspectVerdict format;
};

// Two independent judge calls; a failure in one aspect leaves the other intact.
ComplexIfVerdict complexif_judge(std::string_view question, OutputFormat required_format, std::string_view response,
                                 data::TextGenClient& judge);

// Rule-based stand-in for an LLM judge. It reads the rendered prompt back:
// format prompts score 10.0 when the answer conforms to the named format and
// 1.0 otherwise; quality prompts score from refusal, emptiness, overlap with
// the question and length. Output ends with "Rating: [[x]]".
class MockJudge : public data::TextGenClient {
 public:
  std::string generate(const std::string& prompt) override;
};

}  // namespace forge::eval
