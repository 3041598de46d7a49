#pragma once

// Reference implementations used only by tests. They recompute things from
// first principles, without calling the library code they check.

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "rulereasoner/grpo.hpp"
#include "rulereasoner/policy.hpp"

namespace oracle {

using namespace rulereasoner;

inline std::vector<double> softmax(const std::vector<double>& logits, double temperature) {
  double hi = logits.front();
  for (double x : logits) hi = std::max(hi, x);
  std::vector<double> p;
  double z = 0.0;
  for (double x : logits) {
    p.push_back(std::exp((x - hi) / temperature));
    z += p.back();
  }
  for (auto& x : p) x /= z;
  return p;
}

inline std::vector<double> cell_logits(const Policy& policy, CellId cell) {
  const auto l = policy.logits(cell);
  return {l.begin(), l.end()};
}

// The clipped objective written out term by term: per sample, both branches
// are formed and the smaller kept.
inline double objective(const Policy& policy, const std::vector<RolloutGroup>& groups,
                        double clip_eps) {
  double total = 0.0;
  for (const auto& g : groups) {
    const auto p = softmax(cell_logits(policy, g.cell), policy.temperature());
    double sum = 0.0;
    for (std::size_t i = 0; i < g.samples.size(); ++i) {
      const double ratio = p[g.samples[i].option] / std::exp(g.samples[i].logprob_old);
      double clipped = ratio;
      if (clipped < 1.0 - clip_eps) clipped = 1.0 - clip_eps;
      if (clipped > 1.0 + clip_eps) clipped = 1.0 + clip_eps;
      const double a = ratio * g.advantages[i];
      const double b = clipped * g.advantages[i];
      sum += a < b ? a : b;
    }
    total += sum / static_cast<double>(g.samples.size());
  }
  return total / static_cast<double>(groups.size());
}

inline std::vector<double> fd_gradient(Policy policy, const std::vector<RolloutGroup>& groups,
                                       double clip_eps, double h) {
  std::vector<double> g(policy.parameters().size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double keep = policy.parameters()[i];
    policy.parameters()[i] = keep + h;
    const double up = objective(policy, groups, clip_eps);
    policy.parameters()[i] = keep - h;
    const double down = objective(policy, groups, clip_eps);
    policy.parameters()[i] = keep;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

inline std::vector<double> population_advantages(const std::vector<int>& rewards) {
  const double n = static_cast<double>(rewards.size());
  double mean = 0.0;
  for (int r : rewards) mean += r;
  mean /= n;
  double var = 0.0;
  for (int r : rewards) var += (r - mean) * (r - mean);
  const double sd = std::sqrt(var / n);
  std::vector<double> a;
  for (int r : rewards) a.push_back(sd < 1e-12 ? 0.0 : (r - mean) / sd);
  return a;
}

struct Instance {
  Policy policy;
  std::vector<RolloutGroup> groups;
};

// A random tabular policy plus rollout groups whose behaviour log-probs come
// from a perturbed copy, so ratios differ from 1. Ratios within `margin` of a
// clip edge are re-drawn: the objective has a kink there.
inline Instance random_instance(std::uint64_t seed, double clip_eps, double margin) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> unif(-1.5, 1.5);
  std::uniform_int_distribution<int> small(2, 5);

  std::vector<DomainShape> shape;
  const int n_domains = small(gen) - 1;
  for (int d = 0; d < n_domains; ++d) {
    DomainShape s;
    s.domain = "d" + std::to_string(d);
    s.n_qtypes = small(gen) - 1;
    const int width = small(gen);
    for (int k = 0; k < width; ++k) s.labels.emplace_back(1, static_cast<char>('A' + k));
    shape.push_back(s);
  }
  const double temperature = 0.5 + std::uniform_real_distribution<double>(0.0, 1.0)(gen);
  Policy policy(shape, temperature);
  for (auto& x : policy.parameters()) x = unif(gen);

  Instance inst{policy, {}};
  const int n_groups = small(gen);
  for (int gi = 0; gi < n_groups; ++gi) {
    RolloutGroup g;
    const auto d = static_cast<std::size_t>(gen() % shape.size());
    g.cell = {d, static_cast<int>(gen() % static_cast<std::uint64_t>(shape[d].n_qtypes))};
    const auto p = softmax(cell_logits(policy, g.cell), temperature);
    const int size = small(gen) + 1;
    for (int i = 0; i < size; ++i) {
      ActionSample s;
      s.option = static_cast<std::size_t>(gen() % p.size());
      for (;;) {
        const double ratio = std::exp(0.35 * unif(gen));
        const bool near_edge = std::abs(ratio - (1.0 - clip_eps)) < margin ||
                               std::abs(ratio - (1.0 + clip_eps)) < margin;
        if (near_edge) continue;
        s.logprob_old = std::log(p[s.option] / ratio);
        break;
      }
      s.logprob_new = std::log(p[s.option]);
      g.samples.push_back(s);
      g.rewards.push_back(gen() % 2 ? 1 : -1);
    }
    g.rewards[0] = 1;
    g.rewards[1] = -1;
    g.advantages = population_advantages(g.rewards);
    inst.groups.push_back(std::move(g));
  }
  return inst;
}

inline double max_abs(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

inline double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  return max_abs(d) / std::max({max_abs(a), max_abs(b), 1e-300});
}

}  // namespace oracle
