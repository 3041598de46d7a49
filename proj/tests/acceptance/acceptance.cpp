// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// non-zero if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "oracles.hpp"
#include "rulereasoner/config.hpp"
#include "rulereasoner/experiment.hpp"
#include "rulereasoner/rng.hpp"
#include "rulereasoner/sampler.hpp"
#include "rulereasoner/simenv.hpp"
#include "rulereasoner/verifier.hpp"

using namespace rulereasoner;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, x);
  return buf;
}

std::string fmt_steps(double x) { return std::isinf(x) ? "inf" : fmt("%.0f", x); }

ConfigTree skewed_tree() { return ConfigTree::load(RR_CONFIG_DIR "/skewed4.toml"); }

RunConfig skewed() { return run_config_from_tree(skewed_tree()); }

// The domain with the deepest chains on average.
std::size_t hardest_domain(const SynthSpec& spec) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < spec.domains.size(); ++i) {
    const auto& a = spec.domains[i];
    const auto& b = spec.domains[best];
    if (a.depth_min + a.depth_max > b.depth_min + b.depth_max) best = i;
  }
  return best;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------

Outcome a1_formula_fidelity() {
  DomainStates s{{"a", 1.0, {}, 0}, {"b", 0.0, {}, 0}};
  SamplerConfig cfg;
  cfg.tau = 0.5;
  cfg.floor_epsilon = 0.1;
  const auto w = compute_weights(s, cfg);
  bool ok = std::abs(w.weights[0] - 0.1281) < 1e-4 && std::abs(w.weights[1] - 0.8719) < 1e-4;

  double worst = 0.0;
  for (double alpha : {0.0, 0.1, 0.3, 0.5, 0.8, 0.95, 1.0})
    for (double r_star : {0.0, 0.4, 1.0})
      for (double r0 : {0.0, 0.25, 0.9}) {
        DomainStates st{{"d", r0, {}, 0}};
        for (int step = 1; step <= 20; ++step) {
          observe(st, {{"d", {r_star, r_star}}}, alpha);
          const double expect = std::pow(alpha, step) * std::abs(r0 - r_star);
          worst = std::max(worst, std::abs(std::abs(st[0].ewma - r_star) - expect));
        }
      }
  ok = ok && worst <= 1e-12;
  return {ok, "w=(" + fmt("%.4f", w.weights[0]) + ", " + fmt("%.4f", w.weights[1]) +
                  "), max EWMA contraction error " + fmt("%.1e", worst)};
}

Outcome a2_grpo_correctness() {
  const double eps = 0.2;
  double worst_grad = 0.0;
  int instances = 0;
  // Random instances with stale log-probs (ratios away from 1).
  for (std::uint64_t seed = 1; instances < 40; ++seed, ++instances) {
    const auto inst = oracle::random_instance(1000 + seed, eps, 1e-3);
    const auto g = surrogate_gradient(inst.policy, inst.groups, eps);
    const auto fd = oracle::fd_gradient(inst.policy, inst.groups, eps, 1e-5);
    worst_grad = std::max(worst_grad, oracle::relative_error(g, fd));
  }
  // Ten more from an actual two-update sequence: fresh rollouts, one strict
  // step, then the gradient at the moved policy.
  int two_step = 0;
  for (std::uint64_t seed = 1; two_step < 10 && seed < 1000; ++seed) {
    auto inst = oracle::random_instance(5000 + seed, eps, 1e-3);
    for (auto& g : inst.groups) {
      g.samples = sample(inst.policy, g.cell, static_cast<int>(g.samples.size()), seed * 31 + g.cell.domain);
      for (std::size_t i = 0; i < g.samples.size(); ++i) g.rewards[i] = g.samples[i].option % 2 ? 1 : -1;
      g.rewards[0] = 1;
      g.rewards[1] = -1;
      fill_advantages(g);
    }
    policy_step(inst.policy, inst.groups, GrpoConfig{eps, 0.7, 2}, StepMode::strict);
    refresh_logprobs(inst.policy, inst.groups);
    bool near_edge = false, moved = false;
    for (const auto& g : inst.groups)
      for (const auto& s : g.samples) {
        const double r = importance_ratio(s.logprob_new, s.logprob_old);
        near_edge |= std::abs(r - (1 - eps)) < 1e-3 || std::abs(r - (1 + eps)) < 1e-3;
        moved |= std::abs(r - 1.0) > 1e-3;
      }
    if (near_edge || !moved) continue;
    const auto g = surrogate_gradient(inst.policy, inst.groups, eps);
    const auto fd = oracle::fd_gradient(inst.policy, inst.groups, eps, 1e-5);
    worst_grad = std::max(worst_grad, oracle::relative_error(g, fd));
    ++instances;
    ++two_step;
  }

  std::mt19937_64 gen(77);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  double worst_adv = 0.0;
  for (int t = 0; t < 500; ++t) {
    std::vector<double> r(2 + t % 63);
    for (auto& x : r) x = t % 5 == 0 ? 1.0 : (gen() % 2 ? 1.0 : -1.0);
    if (t % 7 == 0)
      for (auto& x : r) x = u(gen);
    const auto a = group_advantages(r);
    double mean = 0.0, var = 0.0;
    for (double x : a) mean += x;
    mean /= a.size();
    for (double x : a) var += (x - mean) * (x - mean);
    const double sd = std::sqrt(var / a.size());
    worst_adv = std::max({worst_adv, std::abs(mean), std::min(std::abs(sd), std::abs(sd - 1.0))});
  }

  double worst_clip = 0.0;
  for (int t = 0; t < 100000; ++t) {
    const double ratio = std::exp(u(gen) / 3.0);
    const double adv = u(gen);
    const double e = 0.01 + 0.5 * std::abs(u(gen)) / 3.0;
    const double lo = 1 - e, hi = 1 + e;
    const double cl = ratio < lo ? lo : (ratio > hi ? hi : ratio);
    const double naive = ratio * adv < cl * adv ? ratio * adv : cl * adv;
    worst_clip = std::max(worst_clip, std::abs(clipped_term(ratio, adv, e) - naive));
  }

  const bool ok = instances == 50 && worst_grad < 1e-6 && worst_adv < 1e-9 && worst_clip <= 1e-12;
  return {ok, std::to_string(instances) + " instances (" + std::to_string(two_step) +
                  " two-step), grad rel err " + fmt("%.1e", worst_grad) + ", advantage err " +
                  fmt("%.1e", worst_adv) + ", clip err " + fmt("%.1e", worst_clip)};
}

Outcome a3_verifier_oracles() {
  int checked = 0;
  double worst = 0.0;
  for (int n = 1; n <= 8; ++n)
    for (int c = 0; c <= n; ++c)
      for (int k = 1; k <= n; ++k) {
        long total = 0, hit = 0;
        for (unsigned m = 0; m < (1u << n); ++m) {
          if (__builtin_popcount(m) != k) continue;
          ++total;
          hit += (m & ((1u << c) - 1u)) ? 1 : 0;
        }
        worst = std::max(worst, std::abs(pass_at_k(n, c, k) - static_cast<double>(hit) / total));
        ++checked;
      }

  std::ifstream in(RR_TEST_DATA "/em_truth_table.jsonl");
  int cases = 0, agree = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    const auto space = j["space"] == "bool" ? AnswerSpace::boolean() : AnswerSpace::choices(4);
    const auto r = score(j["text"].get<std::string>(), j["key"].get<std::string>(), space);
    const int expect = j["reward"].get<int>();
    ++cases;
    agree += (r.value == expect && r.success == (expect + 1) / 2.0) ? 1 : 0;
  }
  const bool ok = worst < 1e-12 && cases == 30 && agree == 30;
  return {ok, std::to_string(checked) + " (n,c,k) triples, max err " + fmt("%.1e", worst) + "; " +
                  std::to_string(agree) + "/" + std::to_string(cases) + " truth-table cases"};
}

Outcome a4_sample_efficiency() {
  const auto rc = skewed();
  std::vector<std::uint64_t> seeds;
  for (std::uint64_t s = 1; s <= 20; ++s) seeds.push_back(s);
  const std::vector<Strategy> strategies{Strategy::dads, Strategy::uniform, Strategy::static_proportional};
  const auto table = run_comparison(rc.env, strategies, seeds, 0.9);
  const double dads = table.rows[0].median_steps;
  const double uni = table.rows[1].median_steps;
  const double stat = table.rows[2].median_steps;
  const double better = std::min(uni, stat);
  const double reduction = std::isinf(better) ? (std::isinf(dads) ? 0.0 : 1.0) : (better - dads) / better;
  const bool ok = dads < uni && dads < stat && reduction >= 0.10;
  return {ok, "median steps to 0.90: dads " + fmt_steps(dads) + ", uniform " + fmt_steps(uni) +
                  ", static " + fmt_steps(stat) + "; reduction vs better baseline " +
                  fmt("%.1f%%", 100 * reduction)};
}

Outcome a5_dynamics() {
  const auto rc = skewed();
  const auto hard = hardest_domain(rc.env.synth);
  const auto n = rc.env.synth.domains.size();
  const int quarter = rc.env.total_steps / 4;
  bool ok = true;
  double min_peak_weight = 1.0, min_rise = 1.0;
  int window_violations = 0;
  for (const auto seed : rc.seeds) {
    auto env = rc.env;
    env.seed = seed;
    const auto run = run_training(env);
    double peak = 0.0;
    for (const auto& m : run.metrics)
      if (m.step <= quarter) peak = std::max(peak, m.domains[hard].weight);
    std::size_t argmin = 0;
    for (std::size_t i = 0; i < run.metrics.size(); ++i)
      if (run.metrics[i].domains[hard].ewma < run.metrics[argmin].domains[hard].ewma) argmin = i;
    double after = run.metrics[argmin].domains[hard].ewma;
    for (std::size_t i = argmin; i < run.metrics.size(); ++i)
      after = std::max(after, run.metrics[i].domains[hard].ewma);
    const double rise = after - run.metrics[argmin].domains[hard].ewma;
    min_peak_weight = std::min(min_peak_weight, peak);
    min_rise = std::min(min_rise, rise);
    ok = ok && peak > 1.0 / static_cast<double>(n) && rise >= 0.2;

    for (std::size_t d = 0; d < n; ++d) {
      if (d == hard) continue;
      std::vector<double> sums, counts;
      for (const auto& m : run.metrics) {
        if (!m.domains[d].val_pass1) continue;
        const auto w = static_cast<std::size_t>((m.step - 1) / 50);
        if (sums.size() <= w) sums.resize(w + 1, 0.0), counts.resize(w + 1, 0.0);
        sums[w] += *m.domains[d].val_pass1;
        counts[w] += 1;
      }
      for (std::size_t w = 1; w < sums.size(); ++w)
        if (sums[w] / counts[w] < sums[w - 1] / counts[w - 1]) ++window_violations;
    }
  }
  ok = ok && window_violations == 0;
  return {ok, std::to_string(rc.seeds.size()) + " seeds: hard-domain peak weight in first quarter >= " +
                  fmt("%.3f", min_peak_weight) + " (1/n = " + fmt("%.3f", 1.0 / n) +
                  "), EWMA rise from minimum >= " + fmt("%.3f", min_rise) +
                  ", easy-domain 50-step window decreases: " + std::to_string(window_violations)};
}

Outcome a6_alpha_sensitivity() {
  const auto rc = skewed();
  std::vector<double> medians;
  for (double alpha : {0.1, 0.5, 1.0}) {
    std::vector<double> finals;
    for (const auto seed : rc.seeds) {
      auto env = rc.env;
      env.seed = seed;
      env.sampler.alpha = alpha;
      finals.push_back(run_training(env).metrics.back().val_macro.value());
    }
    medians.push_back(median(finals));
  }
  const bool ok = medians[1] >= medians[0] && medians[1] >= medians[2] && medians[2] < medians[1];
  return {ok, "median final macro pass@1 over " + std::to_string(rc.seeds.size()) +
                  " seeds: alpha 0.1 = " + fmt("%.6f", medians[0]) + ", 0.5 = " + fmt("%.6f", medians[1]) +
                  ", 1.0 = " + fmt("%.6f", medians[2])};
}

Outcome a7_determinism() {
  const auto base = fs::temp_directory_path() / "rr_acceptance_a7";
  fs::remove_all(base);
  int identical = 0, total = 0;
  for (const auto& [config, strategy] :
       std::vector<std::pair<std::string, std::string>>{{"skewed4", "dads"}, {"skewed4", "e2h"}, {"minimal", "dads"}}) {
    auto tree = ConfigTree::load(std::string(RR_CONFIG_DIR) + "/" + config + ".toml");
    tree.set("sampler.strategy", strategy);
    const auto a = execute_run(tree, 3, base / "a");
    const auto b = execute_run(tree, 3, base / "b");
    ++total;
    if (a.id == b.id && !b.reused && slurp(a.dir / "metrics.csv") == slurp(b.dir / "metrics.csv") &&
        slurp(a.dir / "policy.ckpt") == slurp(b.dir / "policy.ckpt"))
      ++identical;
  }
  fs::remove_all(base);
  return {identical == total, std::to_string(identical) + "/" + std::to_string(total) +
                                  " repeated runs byte-identical (metrics.csv, policy.ckpt)"};
}

Outcome a8_rule_settings() {
  const auto rc = skewed();
  constexpr int kExtraDistractors = 4;
  SynthSpec clean = rc.env.synth, noisy = rc.env.synth;
  for (auto& d : clean.domains) {
    d.problems = rc.env.validation_size;
    d.distractor_rules = 0;
    if (d.rule_mode == RuleMode::explicit_rules && d.depth_min == 0) d.depth_min = 1;
  }
  for (auto& d : noisy.domains) {
    d.problems = rc.env.validation_size;
    d.distractor_rules += kExtraDistractors;
  }
  const auto ordered_set = synth_generate(clean, 1);
  const auto noisy_set = synth_generate(noisy, 1);

  std::vector<double> ordered, shuffled, noisy_scores;
  for (const auto seed : rc.seeds) {
    auto env = rc.env;
    env.seed = seed;
    const auto run = run_training(env);
    EvalConfig cfg = env.eval;
    cfg.slip_rate = env.slip_rate;
    const auto eval = [&](const GroupedDataset& set, std::optional<std::uint64_t> shuffle) {
      return macro_mean(evaluate(run.policy, eval_items(run.policy.shape(), set, shuffle), cfg));
    };
    const auto shuffle_seed = derive_seed(seed, {0xa8});
    ordered.push_back(eval(ordered_set, std::nullopt));
    shuffled.push_back(eval(ordered_set, shuffle_seed));
    noisy_scores.push_back(eval(noisy_set, shuffle_seed));
  }
  const double o = median(ordered), s = median(shuffled), z = median(noisy_scores);
  return {z <= s && s <= o, "median macro pass@1 over " + std::to_string(rc.seeds.size()) +
                                " seeds: ordered " + fmt("%.4f", o) + ", shuffled " + fmt("%.4f", s) +
                                ", noisy (+" + std::to_string(kExtraDistractors) + " distractors) " +
                                fmt("%.4f", z)};
}

}  // namespace

int main() {
  struct Criterion {
    const char* id;
    const char* name;
    double budget_s;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {"A1", "formula fidelity", 1, a1_formula_fidelity},
      {"A2", "GRPO correctness", 10, a2_grpo_correctness},
      {"A3", "verifier oracles", 1, a3_verifier_oracles},
      {"A4", "sample efficiency", 300, a4_sample_efficiency},
      {"A5", "training dynamics", 60, a5_dynamics},
      {"A6", "alpha sensitivity", 600, a6_alpha_sensitivity},
      {"A7", "determinism", 600, a7_determinism},
      {"A8", "rule-setting degradation", 120, a8_rule_settings},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_budget = secs < c.budget_s;
    const bool pass = out.pass && in_budget;
    failures += pass ? 0 : 1;
    std::printf("%s %s %s: %s [%.2fs%s]\n", c.id, pass ? "PASS" : "FAIL", c.name, out.detail.c_str(),
                secs, in_budget ? "" : ", over budget");
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
