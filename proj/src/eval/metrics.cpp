#include "forge/eval/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <functional>
#include <map>

#include "forge/error.hpp"

namespace forge::eval {

namespace {

bool is_space(unsigned char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace

Tokens split_words(std::string_view text) {
  Tokens out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    std::size_t j = i;
    while (j < text.size() && !is_space(text[j])) ++j;
    if (j > i) out.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

Tokens split_chars(std::string_view text) {
  Tokens out;
  std::size_t i = 0;
  while (i < text.size()) {
    const auto c = static_cast<unsigned char>(text[i]);
    std::size_t len = c < 0x80 ? 1 : (c >> 5) == 6 ? 2 : (c >> 4) == 14 ? 3 : (c >> 3) == 30 ? 4 : 1;
    len = std::min(len, text.size() - i);
    if (!is_space(c)) out.emplace_back(text.substr(i, len));
    i += len;
  }
  return out;
}

WerUnit wer_unit_from_string(const std::string& s) {
  if (s == "auto") return WerUnit::Auto;
  if (s == "word") return WerUnit::Word;
  if (s == "char") return WerUnit::Char;
  throw ConfigError("wer unit must be auto, word or char, got '" + s + "'");
}

Tokens wer_tokens(std::string_view text, const std::string& lang, WerUnit unit) {
  if (unit == WerUnit::Char || (unit == WerUnit::Auto && lang == "th")) return split_chars(text);
  return split_words(text);
}

std::int64_t edit_distance(const Tokens& hyp, const Tokens& ref) {
  std::vector<std::int64_t> row(ref.size() + 1);
  for (std::size_t j = 0; j <= ref.size(); ++j) row[j] = static_cast<std::int64_t>(j);
  for (std::size_t i = 1; i <= hyp.size(); ++i) {
    std::int64_t diag = row[0];
    row[0] = static_cast<std::int64_t>(i);
    for (std::size_t j = 1; j <= ref.size(); ++j) {
      const std::int64_t up = row[j];
      row[j] = std::min({up + 1, row[j - 1] + 1, diag + (hyp[i - 1] == ref[j - 1] ? 0 : 1)});
      diag = up;
    }
  }
  return row[ref.size()];
}

Rational wer(const Tokens& hyp, const Tokens& ref) {
  if (ref.empty()) throw Error("wer: empty reference");
  return {edit_distance(hyp, ref), static_cast<std::int64_t>(ref.size())};
}

Rational corpus_wer(const std::vector<Tokens>& hyps, const std::vector<Tokens>& refs) {
  if (hyps.size() != refs.size()) throw DimensionError("corpus_wer: hypothesis and reference counts differ");
  if (refs.empty()) throw Error("corpus_wer: empty corpus");
  Rational r{0, 0};
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const auto w = wer(hyps[i], refs[i]);
    r.num += w.num;
    r.den += w.den;
  }
  return r;
}

BleuStats& BleuStats::operator+=(const BleuStats& o) {
  for (int n = 0; n < 4; ++n) {
    matches[n] += o.matches[n];
    totals[n] += o.totals[n];
  }
  hyp_len += o.hyp_len;
  ref_len += o.ref_len;
  return *this;
}

BleuStats bleu_stats(const Tokens& hyp, const Tokens& ref) {
  BleuStats s;
  s.hyp_len = static_cast<std::int64_t>(hyp.size());
  s.ref_len = static_cast<std::int64_t>(ref.size());
  for (std::size_t n = 1; n <= 4; ++n) {
    std::map<Tokens, std::int64_t> ref_counts;
    for (std::size_t i = 0; i + n <= ref.size(); ++i) ++ref_counts[Tokens(ref.begin() + i, ref.begin() + i + n)];
    std::map<Tokens, std::int64_t> hyp_counts;
    for (std::size_t i = 0; i + n <= hyp.size(); ++i) ++hyp_counts[Tokens(hyp.begin() + i, hyp.begin() + i + n)];
    for (const auto& [gram, c] : hyp_counts) {
      auto it = ref_counts.find(gram);
      if (it != ref_counts.end()) s.matches[n - 1] += std::min(c, it->second);
      s.totals[n - 1] += c;
    }
  }
  return s;
}

double bleu_from_stats(const BleuStats& s, bool smooth) {
  if (s.hyp_len == 0 || s.matches[0] == 0) return 0.0;
  double log_sum = 0.0;
  for (int n = 0; n < 4; ++n) {
    double m = static_cast<double>(s.matches[n]);
    double t = static_cast<double>(s.totals[n]);
    if (smooth && n > 0) {
      m += 1.0;
      t += 1.0;
    }
    if (m == 0.0 || t == 0.0) return 0.0;
    log_sum += std::log(m / t);
  }
  const double bp = s.hyp_len < s.ref_len
                        ? std::exp(1.0 - static_cast<double>(s.ref_len) / static_cast<double>(s.hyp_len))
                        : 1.0;
  return bp * std::exp(log_sum / 4.0);
}

double bleu(const std::vector<Tokens>& hyps, const std::vector<Tokens>& refs, bool smooth) {
  if (hyps.size() != refs.size()) throw DimensionError("bleu: hypothesis and reference counts differ");
  if (hyps.empty()) throw Error("bleu: empty corpus");
  BleuStats total;
  for (std::size_t i = 0; i < hyps.size(); ++i) total += bleu_stats(hyps[i], refs[i]);
  return bleu_from_stats(total, smooth);
}

MeteorDetail meteor_exact(const Tokens& hyp, const Tokens& ref) {
  MeteorDetail d;
  if (hyp.empty() || ref.empty()) {
    d.degenerate = true;
    return d;
  }
  // every maximum matching matches min(count_h, count_r) of each word
  std::map<std::string, std::int64_t> hc, rc;
  for (const auto& t : hyp) ++hc[t];
  for (const auto& t : ref) ++rc[t];
  std::map<std::string, std::int64_t> need, spare;
  for (const auto& [w, c] : hc) {
    auto it = rc.find(w);
    const std::int64_t k = it == rc.end() ? 0 : std::min(c, it->second);
    need[w] = k;
    spare[w] = c - k;
    d.matches += k;
  }
  if (d.matches == 0) return d;

  // Depth-first over hyp positions choosing a ref slot (or skipping), pruned
  // on the chunk count of the best complete alignment so far.
  std::vector<char> used(ref.size(), 0);
  std::int64_t best = d.matches + 1;
  std::int64_t budget = 2'000'000;
  std::function<void(std::size_t, std::ptrdiff_t, std::int64_t)> search = [&](std::size_t i, std::ptrdiff_t prev,
                                                                             std::int64_t chunks) {
    if (chunks >= best || --budget < 0) return;
    if (i == hyp.size()) {
      best = chunks;
      return;
    }
    const std::string& w = hyp[i];
    auto& nw = need[w];
    if (nw > 0) {
      // try the slot that extends the current chunk first
      auto try_slot = [&](std::size_t j) {
        used[j] = 1;
        --nw;
        const bool extends = prev >= 0 && static_cast<std::size_t>(prev) + 1 == j;
        search(i + 1, static_cast<std::ptrdiff_t>(j), chunks + (extends ? 0 : 1));
        ++nw;
        used[j] = 0;
      };
      if (prev >= 0 && static_cast<std::size_t>(prev) + 1 < ref.size() && !used[prev + 1] && ref[prev + 1] == w) {
        try_slot(static_cast<std::size_t>(prev + 1));
      }
      for (std::size_t j = 0; j < ref.size(); ++j) {
        if (used[j] || ref[j] != w) continue;
        if (prev >= 0 && static_cast<std::size_t>(prev) + 1 == j) continue;
        try_slot(j);
      }
    }
    auto& sw = spare[w];
    if (sw > 0) {
      --sw;
      search(i + 1, -1, chunks);
      ++sw;
    }
  };
  search(0, -1, 0);
  d.chunks = std::min(best, d.matches);

  const double m = static_cast<double>(d.matches);
  const double p = m / static_cast<double>(hyp.size());
  const double r = m / static_cast<double>(ref.size());
  const double f = 10.0 * p * r / (r + 9.0 * p);
  const double penalty = 0.5 * std::pow(static_cast<double>(d.chunks) / m, 3.0);
  d.score = f * (1.0 - penalty);
  return d;
}

std::string normalize_answer(std::string_view text) {
  std::string out;
  bool pending_space = false;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (c < 0x80 && std::ispunct(c)) continue;
    if (is_space(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out += ' ';
    pending_space = false;
    out += static_cast<char>(std::tolower(c));
  }
  return out;
}

double token_f1(std::string_view pred, std::string_view ref) {
  const Tokens p = split_words(normalize_answer(pred));
  const Tokens r = split_words(normalize_answer(ref));
  if (p.empty() && r.empty()) return 1.0;
  if (p.empty() || r.empty()) return 0.0;
  std::map<std::string, std::int64_t> rc;
  for (const auto& t : r) ++rc[t];
  std::int64_t overlap = 0;
  for (const auto& t : p) {
    auto it = rc.find(t);
    if (it != rc.end() && it->second > 0) {
      --it->second;
      ++overlap;
    }
  }
  if (overlap == 0) return 0.0;
  const double prec = static_cast<double>(overlap) / static_cast<double>(p.size());
  const double rec = static_cast<double>(overlap) / static_cast<double>(r.size());
  return 2.0 * prec * rec / (prec + rec);
}

std::optional<std::string> gender_label(std::string_view text, const GenderKeywords& kw) {
  const std::string low = lower(text);
  for (const auto& k : kw.female)
    if (low.find(lower(k)) != std::string::npos) return "female";
  for (const auto& k : kw.male)
    if (low.find(lower(k)) != std::string::npos) return "male";
  return std::nullopt;
}

double gender_accuracy(const std::vector<std::string>& responses, const std::vector<std::string>& labels,
                       const GenderKeywords& kw) {
  if (responses.size() != labels.size()) throw DimensionError("gender_accuracy: response and label counts differ");
  if (responses.empty()) throw Error("gender_accuracy: no examples");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < responses.size(); ++i) {
    const auto got = gender_label(responses[i], kw);
    if (got && *got == lower(labels[i])) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(responses.size());
}

}  // namespace forge::eval
