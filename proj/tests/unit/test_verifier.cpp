#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <fstream>

#include "json.hpp"
#include "rulereasoner/verifier.hpp"

using namespace rulereasoner;

namespace {

// C(n-c, k) / C(n, k) by counting k-subsets of n items that avoid all c
// correct ones.
double pass_at_k_enumerated(int n, int c, int k) {
  long total = 0, hit = 0;
  for (unsigned mask = 0; mask < (1u << n); ++mask) {
    if (__builtin_popcount(mask) != k) continue;
    ++total;
    if (mask & ((1u << c) - 1u)) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(total);
}

}  // namespace

TEST_CASE("answer spaces") {
  CHECK(AnswerSpace::boolean().labels == std::vector<std::string>{"True", "False", "Unknown"});
  CHECK(AnswerSpace::choices(3).labels == std::vector<std::string>{"A", "B", "C"});
  Problem p;
  p.options = {{"A", "x"}, {"B", "y"}};
  CHECK(AnswerSpace::of(p).labels == std::vector<std::string>{"A", "B"});
  CHECK(AnswerSpace::of(p).kind == AnswerSpace::Kind::multiple_choice);
  CHECK(AnswerSpace::choices(4).contains("D"));
  CHECK_FALSE(AnswerSpace::choices(4).contains("E"));
}

TEST_CASE("answer extraction") {
  const auto b = AnswerSpace::boolean();
  CHECK(find_answer_span("<answer> A </answer>") == "A");
  CHECK_FALSE(find_answer_span("no tags"));
  CHECK_FALSE(find_answer_span("<answer></answer>"));
  CHECK(find_answer_span("<answer>x</answer><answer>y</answer>") == "y");

  auto e = extract_answer("<answer>true</answer>", b);
  CHECK(e.status == Extraction::Status::ok);
  CHECK(e.canonical == "True");
  CHECK(e.raw == "true");

  e = extract_answer("<answer>maybe</answer>", b);
  CHECK(e.status == Extraction::Status::unrecognized_label);
  CHECK_FALSE(e.canonical);

  e = extract_answer("True", b);
  CHECK(e.status == Extraction::Status::missing_tag);
  CHECK_FALSE(e.raw);

  CHECK(normalize("(b)", AnswerSpace::choices(3)) == "B");
  CHECK_FALSE(normalize("()", AnswerSpace::choices(3)));
}

TEST_CASE("exact-match truth table fixture") {
  std::ifstream in(RR_TEST_DATA "/em_truth_table.jsonl");
  REQUIRE(in);
  std::string line;
  int cases = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    const auto space = j["space"] == "bool" ? AnswerSpace::boolean() : AnswerSpace::choices(4);
    const auto r = score(j["text"].get<std::string>(), j["key"].get<std::string>(), space);
    CAPTURE(j["case"].get<std::string>());
    CHECK(r.value == j["reward"].get<int>());
    CHECK(r.success == (j["reward"].get<int>() + 1) / 2.0);
    ++cases;
  }
  CHECK(cases == 30);
}

TEST_CASE("score rejects keys outside the answer space") {
  CHECK_THROWS_AS(score("<answer>A</answer>", "Z", AnswerSpace::choices(4)), VerifierError);
  CHECK_THROWS_AS(score("<answer>True</answer>", "A", AnswerSpace::boolean()), VerifierError);
}

TEST_CASE("pass_at_k") {
  CHECK(pass_at_k(4, 2, 2) == doctest::Approx(5.0 / 6.0).epsilon(1e-15));
  CHECK(pass_at_k(10, 0, 3) == 0.0);
  CHECK(pass_at_k(10, 10, 3) == 1.0);
  CHECK(pass_at_k(5, 3, 3) == 1.0);
  CHECK(pass_at_k(10, 3, 1) == doctest::Approx(0.3).epsilon(1e-15));
  for (int n = 1; n <= 8; ++n)
    for (int c = 0; c <= n; ++c)
      for (int k = 1; k <= n; ++k) {
        CAPTURE(n);
        CAPTURE(c);
        CAPTURE(k);
        CHECK(std::abs(pass_at_k(n, c, k) - pass_at_k_enumerated(n, c, k)) < 1e-12);
      }
  CHECK_THROWS_AS(pass_at_k(0, 0, 1), VerifierError);
  CHECK_THROWS_AS(pass_at_k(4, 5, 1), VerifierError);
  CHECK_THROWS_AS(pass_at_k(4, 1, 5), VerifierError);
  CHECK_THROWS_AS(pass_at_k(4, 1, 0), VerifierError);
}

TEST_CASE("votes") {
  const std::vector<std::string> labels{"B", "A", "A", "B", "C"};
  CHECK(majority_vote(labels) == "B");
  const std::vector<std::string> clear{"C", "A", "A"};
  CHECK(majority_vote(clear) == "A");
  CHECK_THROWS_AS(majority_vote(std::vector<std::string>{}), VerifierError);

  const std::vector<std::pair<std::string, double>> votes{{"A", 1.0}, {"B", 3.0}, {"A", 1.5}};
  CHECK(weighted_vote(votes) == "B");
  const std::vector<std::pair<std::string, double>> tie{{"B", 2.0}, {"A", 2.0}};
  CHECK(weighted_vote(tie) == "B");
  const std::vector<std::pair<std::string, double>> neg{{"A", -1.0}};
  CHECK_THROWS_AS(weighted_vote(neg), VerifierError);
  const std::vector<std::pair<std::string, double>> zero{{"A", 0.0}};
  CHECK_THROWS_AS(weighted_vote(zero), VerifierError);
}
