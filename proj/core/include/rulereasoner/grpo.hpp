#pragma once

#include <span>
#include <stdexcept>
#include <vector>

#include "rulereasoner/dataset.hpp"
#include "rulereasoner/policy.hpp"

namespace rulereasoner {

class GrpoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GrpoConfig {
  double clip_eps = 0.2;
  // The LLM recipe uses 1e-6; a tabular policy needs a far larger step.
  double learning_rate = 0.1;
  int group_size = 64;
};

void validate(const GrpoConfig& cfg);

// G rollouts of one question: sampled options, exact-match rewards in
// {-1, +1}, and group-normalized advantages.
struct RolloutGroup {
  const Problem* problem = nullptr;
  CellId cell;
  std::vector<ActionSample> samples;
  std::vector<int> rewards;
  std::vector<double> advantages;
};

// (r - mean) / std with the population std; all zeros when std < 1e-12.
std::vector<double> group_advantages(std::span<const double> rewards);
void fill_advantages(RolloutGroup& group);

double importance_ratio(double logp_new, double logp_old);

// min(ratio * A, clip(ratio, 1 - eps, 1 + eps) * A)
double clipped_term(double ratio, double advantage, double clip_eps);

// Mean over groups of (1/G) sum_i clipped_term, using each sample's stored
// logprob_new. No KL penalty, no entropy bonus.
double surrogate_objective(std::span<const RolloutGroup> groups, double clip_eps);

// Same objective with logprob_new re-evaluated under `policy`.
double surrogate_objective(const Policy& policy, std::span<const RolloutGroup> groups,
                           double clip_eps);

// Gradient of the objective above with respect to policy.parameters(). The
// clipped branch contributes nothing; the unclipped one A * ratio * grad log pi.
std::vector<double> surrogate_gradient(const Policy& policy,
                                       std::span<const RolloutGroup> groups,
                                       double clip_eps);

// Sets every sample's logprob_new from the current policy.
void refresh_logprobs(const Policy& policy, std::span<RolloutGroup> groups);

enum class StepMode {
  strict,       // rollouts must come from the current policy
  allow_stale,  // two-update clip test only
};

// One ascent step theta += lr * grad J. Returns the objective at the pre-step
// parameters.
double policy_step(Policy& policy, std::span<RolloutGroup> groups, const GrpoConfig& cfg,
                   StepMode mode = StepMode::strict);

}  // namespace rulereasoner
