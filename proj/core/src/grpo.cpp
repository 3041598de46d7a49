#include "rulereasoner/grpo.hpp"

#include <algorithm>
#include <cmath>

namespace rulereasoner {

void validate(const GrpoConfig& cfg) {
  if (!(cfg.clip_eps > 0.0 && cfg.clip_eps < 1.0))
    throw GrpoError("clip_eps must be in (0, 1)");
  if (!(cfg.learning_rate > 0.0) || !std::isfinite(cfg.learning_rate))
    throw GrpoError("learning_rate must be > 0");
  if (cfg.group_size < 2) throw GrpoError("group_size must be >= 2");
}

std::vector<double> group_advantages(std::span<const double> rewards) {
  if (rewards.size() < 2) throw GrpoError("group_advantages: need at least 2 rewards");
  const double n = static_cast<double>(rewards.size());
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= n;
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  const double sd = std::sqrt(var / n);
  std::vector<double> adv(rewards.size(), 0.0);
  if (sd < 1e-12) return adv;
  for (std::size_t i = 0; i < rewards.size(); ++i) adv[i] = (rewards[i] - mean) / sd;
  return adv;
}

void fill_advantages(RolloutGroup& group) {
  if (group.rewards.size() != group.samples.size())
    throw GrpoError("rollout group: reward/sample count mismatch");
  std::vector<double> r(group.rewards.begin(), group.rewards.end());
  group.advantages = group_advantages(r);
}

double importance_ratio(double logp_new, double logp_old) {
  return std::exp(logp_new - logp_old);
}

double clipped_term(double ratio, double advantage, double clip_eps) {
  const double clipped = std::clamp(ratio, 1.0 - clip_eps, 1.0 + clip_eps);
  return std::min(ratio * advantage, clipped * advantage);
}

namespace {

void check_group(const RolloutGroup& g) {
  if (g.samples.empty() || g.advantages.size() != g.samples.size())
    throw GrpoError("rollout group without advantages");
}

}  // namespace

double surrogate_objective(std::span<const RolloutGroup> groups, double clip_eps) {
  if (groups.empty()) throw GrpoError("surrogate_objective: no groups");
  double total = 0.0;
  for (const auto& g : groups) {
    check_group(g);
    double sum = 0.0;
    for (std::size_t i = 0; i < g.samples.size(); ++i) {
      const auto& s = g.samples[i];
      sum += clipped_term(importance_ratio(s.logprob_new, s.logprob_old), g.advantages[i], clip_eps);
    }
    total += sum / static_cast<double>(g.samples.size());
  }
  return total / static_cast<double>(groups.size());
}

double surrogate_objective(const Policy& policy, std::span<const RolloutGroup> groups,
                           double clip_eps) {
  std::vector<RolloutGroup> copy(groups.begin(), groups.end());
  refresh_logprobs(policy, copy);
  return surrogate_objective(copy, clip_eps);
}

std::vector<double> surrogate_gradient(const Policy& policy,
                                       std::span<const RolloutGroup> groups,
                                       double clip_eps) {
  if (groups.empty()) throw GrpoError("surrogate_gradient: no groups");
  std::vector<double> grad(policy.parameters().size(), 0.0);
  const double batch_scale = 1.0 / static_cast<double>(groups.size());
  for (const auto& g : groups) {
    check_group(g);
    const double scale = batch_scale / static_cast<double>(g.samples.size());
    const auto probs = policy.probabilities(g.cell);
    const auto offset = policy.cell_offset(g.cell);
    const double t = policy.temperature();
    for (std::size_t i = 0; i < g.samples.size(); ++i) {
      const auto& s = g.samples[i];
      const double a = g.advantages[i];
      if (a == 0.0) continue;
      const double ratio = importance_ratio(logprob(policy, g.cell, s.option), s.logprob_old);
      const double clipped = std::clamp(ratio, 1.0 - clip_eps, 1.0 + clip_eps);
      if (ratio * a > clipped * a) continue;  // clipped branch is the min
      const double f = scale * a * ratio / t;
      for (std::size_t j = 0; j < probs.size(); ++j)
        grad[offset + j] += f * ((j == s.option ? 1.0 : 0.0) - probs[j]);
    }
  }
  return grad;
}

void refresh_logprobs(const Policy& policy, std::span<RolloutGroup> groups) {
  for (auto& g : groups)
    for (auto& s : g.samples) s.logprob_new = logprob(policy, g.cell, s.option);
}

double policy_step(Policy& policy, std::span<RolloutGroup> groups, const GrpoConfig& cfg,
                   StepMode mode) {
  validate(cfg);
  refresh_logprobs(policy, groups);
  if (mode == StepMode::strict) {
    for (const auto& g : groups)
      for (const auto& s : g.samples)
        if (std::abs(s.logprob_new - s.logprob_old) > 1e-12)
          throw GrpoError("policy_step: rollouts are stale (sampled under an older policy)");
  }
  const double objective = surrogate_objective(std::span<const RolloutGroup>(groups), cfg.clip_eps);
  const auto grad = surrogate_gradient(policy, groups, cfg.clip_eps);
  auto theta = policy.parameters();
  for (std::size_t i = 0; i < theta.size(); ++i) theta[i] += cfg.learning_rate * grad[i];
  return objective;
}

}  // namespace rulereasoner
