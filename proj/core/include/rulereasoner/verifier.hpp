#pragma once

#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "rulereasoner/dataset.hpp"

namespace rulereasoner {

class VerifierError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Labels a response may legally answer with.
struct AnswerSpace {
  enum class Kind { boolean, multiple_choice };
  Kind kind = Kind::boolean;
  std::vector<std::string> labels;

  static AnswerSpace boolean();
  static AnswerSpace choices(std::size_t n);  // A, B, C, ...
  static AnswerSpace of(const Problem& p);

  bool contains(std::string_view label) const;
};

struct Extraction {
  enum class Status { ok, missing_tag, unrecognized_label };
  std::optional<std::string> raw;
  std::optional<std::string> canonical;
  Status status = Status::missing_tag;
};

// Exact-match reward: value is +1 or -1, success is (value + 1) / 2.
struct Reward {
  int value = -1;
  double success = 0.0;

  static Reward from_match(bool match) {
    return match ? Reward{1, 1.0} : Reward{-1, 0.0};
  }
};

// Trimmed content of the last well-formed <answer>...</answer> span, or
// nullopt when there is none or it is blank.
std::optional<std::string> find_answer_span(std::string_view text);

std::optional<std::string> normalize(std::string_view raw, const AnswerSpace& space);

Extraction extract_answer(std::string_view text, const AnswerSpace& space);

Reward score(std::string_view pred_text, std::string_view key, const AnswerSpace& space);

// Most frequent label; ties go to the label seen first.
std::string majority_vote(std::span<const std::string> labels);

// Label with the largest normalized weight total; ties as majority_vote.
std::string weighted_vote(std::span<const std::pair<std::string, double>> votes);

// Unbiased coverage estimate 1 - C(n-c, k) / C(n, k).
double pass_at_k(int n, int c, int k);

}  // namespace rulereasoner
