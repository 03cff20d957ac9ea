#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace forge::eval {

using Tokens = std::vector<std::string>;

struct Rational {
  std::int64_t num = 0;
  std::int64_t den = 1;
  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
  bool operator==(const Rational&) const = default;
};

Tokens split_words(std::string_view text);
// UTF-8 code points, whitespace dropped
Tokens split_chars(std::string_view text);

enum class WerUnit { Auto, Word, Char };
WerUnit wer_unit_from_string(const std::string& s);
// Auto picks characters for "th" and words otherwise.
Tokens wer_tokens(std::string_view text, const std::string& lang, WerUnit unit = WerUnit::Auto);

// Substitutions + deletions + insertions.
std::int64_t edit_distance(const Tokens& hyp, const Tokens& ref);
// edits / |ref| (not reduced); empty reference throws.
Rational wer(const Tokens& hyp, const Tokens& ref);
// Σ edits / Σ |ref|
Rational corpus_wer(const std::vector<Tokens>& hyps, const std::vector<Tokens>& refs);

struct BleuStats {
  std::array<std::int64_t, 4> matches{};  // clipped n-gram matches, n = 1..4
  std::array<std::int64_t, 4> totals{};   // hypothesis n-grams
  std::int64_t hyp_len = 0;
  std::int64_t ref_len = 0;

  BleuStats& operator+=(const BleuStats& o);
};

BleuStats bleu_stats(const Tokens& hyp, const Tokens& ref);
// smooth adds one to numerator and denominator of the n >= 2 precisions
double bleu_from_stats(const BleuStats& s, bool smooth = true);
double bleu(const std::vector<Tokens>& hyps, const std::vector<Tokens>& refs, bool smooth = true);

struct MeteorDetail {
  double score = 0.0;
  std::int64_t matches = 0;
  std::int64_t chunks = 0;
  bool degenerate = false;  // empty side; score is 0
};

// Exact-match stage only: maximum unigram matching with the fewest chunks.
MeteorDetail meteor_exact(const Tokens& hyp, const Tokens& ref);

// Lowercase ASCII, drop ASCII punctuation, collapse whitespace.
std::string normalize_answer(std::string_view text);
double token_f1(std::string_view pred, std::string_view ref);

struct GenderKeywords {
  std::vector<std::string> female{"female", "หญิง"};
  std::vector<std::string> male{"male", "ชาย"};
};

// "female" is tested before "male" since it contains it.
std::optional<std::string> gender_label(std::string_view text, const GenderKeywords& kw = {});
double gender_accuracy(const std::vector<std::string>& responses, const std::vector<std::string>& labels,
                       const GenderKeywords& kw = {});

}  // namespace forge::eval
