#include "rulereasoner/verifier.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

namespace rulereasoner {

AnswerSpace AnswerSpace::boolean() {
  return {Kind::boolean, {"True", "False", "Unknown"}};
}

AnswerSpace AnswerSpace::choices(std::size_t n) {
  AnswerSpace s{Kind::multiple_choice, {}};
  for (std::size_t i = 0; i < n; ++i) s.labels.emplace_back(1, static_cast<char>('A' + i));
  return s;
}

AnswerSpace AnswerSpace::of(const Problem& p) {
  if (!p.multiple_choice()) return boolean();
  AnswerSpace s{Kind::multiple_choice, {}};
  for (const auto& o : p.options) s.labels.push_back(o.label);
  return s;
}

bool AnswerSpace::contains(std::string_view label) const {
  return std::find(labels.begin(), labels.end(), label) != labels.end();
}

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

std::string_view trim_space(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

bool strip_char(char c) {
  return is_space(c) || c == '.' || c == ',' || c == ';' || c == ':' ||
         c == '!' || c == '?' || c == '"' || c == '\'' || c == '*' || c == '`';
}

bool iequals(std::string_view a, std::string_view b) {
  return a.size() == b.size() &&
         std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
           return std::tolower(static_cast<unsigned char>(x)) ==
                  std::tolower(static_cast<unsigned char>(y));
         });
}

}  // namespace

std::optional<std::string> find_answer_span(std::string_view text) {
  constexpr std::string_view open = "<answer>";
  constexpr std::string_view close = "</answer>";
  std::size_t end = text.rfind(close);
  while (end != std::string_view::npos) {
    const auto start = text.rfind(open, end);
    if (start != std::string_view::npos) {
      auto body = trim_space(text.substr(start + open.size(), end - start - open.size()));
      if (body.empty()) return std::nullopt;
      return std::string(body);
    }
    if (end == 0) break;
    end = text.rfind(close, end - 1);
  }
  return std::nullopt;
}

std::optional<std::string> normalize(std::string_view raw, const AnswerSpace& space) {
  std::string_view s = raw;
  auto strip = [&s] {
    while (!s.empty() && strip_char(s.front())) s.remove_prefix(1);
    while (!s.empty() && strip_char(s.back())) s.remove_suffix(1);
  };
  strip();
  // "(B)" and "B)".
  if (!s.empty() && s.back() == ')') {
    s.remove_suffix(1);
    if (!s.empty() && s.front() == '(') s.remove_prefix(1);
    strip();
  }
  if (s.empty()) return std::nullopt;
  for (const auto& label : space.labels)
    if (iequals(s, label)) return label;
  return std::nullopt;
}

Extraction extract_answer(std::string_view text, const AnswerSpace& space) {
  Extraction e;
  e.raw = find_answer_span(text);
  if (!e.raw) {
    e.status = Extraction::Status::missing_tag;
    return e;
  }
  e.canonical = normalize(*e.raw, space);
  e.status = e.canonical ? Extraction::Status::ok : Extraction::Status::unrecognized_label;
  return e;
}

Reward score(std::string_view pred_text, std::string_view key, const AnswerSpace& space) {
  if (!space.contains(key))
    throw VerifierError("score: key '" + std::string(key) + "' is not in the answer space");
  const auto e = extract_answer(pred_text, space);
  return Reward::from_match(e.status == Extraction::Status::ok && *e.canonical == key);
}

namespace {

template <class Weight>
std::string argmax_first(std::span<const std::pair<std::string, Weight>> totals) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < totals.size(); ++i)
    if (totals[i].second > totals[best].second) best = i;
  return totals[best].first;
}

template <class Weight>
void accumulate(std::vector<std::pair<std::string, Weight>>& totals,
                const std::string& label, Weight w) {
  for (auto& [l, t] : totals)
    if (l == label) {
      t += w;
      return;
    }
  totals.emplace_back(label, w);
}

}  // namespace

std::string majority_vote(std::span<const std::string> labels) {
  if (labels.empty()) throw VerifierError("majority_vote: empty label list");
  std::vector<std::pair<std::string, long>> counts;
  for (const auto& l : labels) accumulate(counts, l, 1L);
  return argmax_first<long>(counts);
}

std::string weighted_vote(std::span<const std::pair<std::string, double>> votes) {
  if (votes.empty()) throw VerifierError("weighted_vote: empty vote list");
  double sum = 0.0;
  for (const auto& [label, w] : votes) {
    if (!std::isfinite(w) || w < 0.0)
      throw VerifierError("weighted_vote: weights must be finite and non-negative");
    sum += w;
  }
  if (!(sum > 0.0)) throw VerifierError("weighted_vote: weights sum to zero");
  std::vector<std::pair<std::string, double>> totals;
  for (const auto& [label, w] : votes) accumulate(totals, label, w / sum);
  return argmax_first<double>(totals);
}

double pass_at_k(int n, int c, int k) {
  if (n < 1 || c < 0 || c > n || k < 1 || k > n)
    throw VerifierError("pass_at_k: require 0 <= c <= n and 1 <= k <= n");
  if (c == 0) return 0.0;
  if (n - c < k) return 1.0;
  // C(n-c, k) / C(n, k) = prod_{i=n-c+1}^{n} (1 - k / i)
  double miss = 1.0;
  for (int i = n - c + 1; i <= n; ++i) miss *= 1.0 - static_cast<double>(k) / i;
  return 1.0 - miss;
}

}  // namespace rulereasoner
