#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rulereasoner/dataset.hpp"
#include "rulereasoner/grpo.hpp"
#include "rulereasoner/policy.hpp"
#include "rulereasoner/sampler.hpp"
#include "rulereasoner/verifier.hpp"

namespace rulereasoner {

// ---- Forward chaining ----

enum class ChainVerdict { derivable, not_derivable };

// Saturating modus-ponens closure over unary rules "Every X is a Y." and
// atoms "E is a X.". Throws std::invalid_argument on text it cannot parse.
ChainVerdict forward_chain(std::span<const std::string> rules,
                           std::span<const std::string> facts, std::string_view query);

// Cost of deciding `query` by repeated left-to-right passes over the rules in
// the order given: every rule looked at counts one inspection. The scan stops
// as soon as the query is known, or after the first pass that adds nothing.
struct ScanTrace {
  bool derived = false;
  int passes = 0;
  int inspections = 0;
};

ScanTrace scan_rules(std::span<const std::string> rules, std::span<const std::string> facts,
                     std::string_view query);

// Scan cost of the problem's deciding statement, rules in presented order.
// Implicit-rule problems are scanned in stored order as well.
int reasoning_cost(const Problem& p);

// ---- Simulated reasoner ----

// A sampled answer survives the reasoning trace with probability
// (1 - slip_rate)^inspections; otherwise the emitted label is uniform over the
// answer space. This is what makes depth, distractors and rule order matter.
double slip_probability(double slip_rate, int inspections);

std::string response_text(std::string_view label, int inspections);

enum class EvalMode {
  sampled,  // exact expected pass@1 under sampling at the validation temperature
  greedy,   // argmax decoding
};

std::string_view to_string(EvalMode m);
EvalMode eval_mode_from_string(std::string_view text);

struct EvalConfig {
  EvalMode mode = EvalMode::sampled;
  double temperature = 0.6;
  double slip_rate = 0.0;
};

// Expected exact-match success of one presented problem. Deterministic.
double expected_pass1(const Policy& policy, CellId cell, const Problem& presented,
                      const EvalConfig& cfg);

// Problems paired with the policy cell they are answered from.
struct EvalItem {
  CellId cell;
  Problem presented;
};

// Per-domain mean expected pass@1, indexed like policy.shape().
std::vector<double> evaluate(const Policy& policy, std::span<const EvalItem> items,
                             const EvalConfig& cfg);

// Resolves each problem's cell against a policy shape.
std::vector<EvalItem> eval_items(const std::vector<DomainShape>& shape,
                                 const GroupedDataset& problems,
                                 std::optional<std::uint64_t> shuffle_seed);

double macro_mean(std::span<const double> per_domain);

// ---- Training loop ----

struct EnvConfig {
  SynthSpec synth;
  // When set, used instead of generating from `synth`.
  std::optional<GroupedDataset> train_data;
  std::optional<GroupedDataset> val_data;

  SamplerConfig sampler;
  GrpoConfig grpo;
  double rollout_temperature = 0.8;
  EvalConfig eval;
  double slip_rate = 0.0;

  int total_steps = 100;
  int validation_interval = 10;
  int validation_size = 32;  // per domain, generated with a disjoint stream
  std::uint64_t seed = 0;
  bool two_step_clip_test = false;
};

void validate(const EnvConfig& env);

struct DomainStepMetrics {
  std::string domain;
  std::optional<double> mean_success;  // r-bar this step, absent if not sampled
  double ewma = 0.0;                   // after this step's observation
  double weight = 0.0;                 // weight used to build this step's batch
  int count = 0;
  std::optional<double> val_pass1;
};

struct StepMetrics {
  int step = 0;  // 1-based
  std::vector<DomainStepMetrics> domains;
  double objective = 0.0;
  double train_success = 0.0;
  std::optional<double> val_macro;
};

struct TrainingRun {
  std::vector<StepMetrics> metrics;
  Policy policy;
  DomainStates sampler_states;
  GroupedDataset train;
  GroupedDataset validation;
};

// Called after every step; receives the step's metrics and current state.
using StepObserver =
    std::function<void(const StepMetrics&, const Policy&, const DomainStates&)>;

// Training set, validation set for an environment (generated or supplied).
GroupedDataset training_data(const EnvConfig& env);
GroupedDataset validation_data(const EnvConfig& env, const GroupedDataset& train);

TrainingRun run_training(const EnvConfig& env, const StepObserver& observer = {});

// First step whose validation macro pass@1 reaches `target`; +inf if never.
double steps_to_target(std::span<const StepMetrics> metrics, double target);

// ---- Strategy comparison ----

struct ComparisonRow {
  Strategy strategy = Strategy::dads;
  std::vector<double> steps_per_seed;
  std::vector<double> final_macro_per_seed;
  double median_steps = std::numeric_limits<double>::infinity();
  double median_final_macro = 0.0;
  std::vector<double> median_final_per_domain;
  double median_ood_macro = 0.0;  // deeper-chain, noisier copy of every domain
};

struct ComparisonTable {
  std::vector<std::string> domains;
  double target = 0.9;
  std::vector<ComparisonRow> rows;
};

// Same data and seed list for every strategy.
ComparisonTable run_comparison(const EnvConfig& env, std::span<const Strategy> strategies,
                               std::span<const std::uint64_t> seeds, double target);

// Deeper chains (depth + 2, capped at 7) and twice the distractors.
SynthSpec ood_spec(const SynthSpec& spec);

double median(std::vector<double> xs);

}  // namespace rulereasoner
