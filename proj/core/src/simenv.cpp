#include "rulereasoner/simenv.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <stdexcept>
#include <utility>

#include "rulereasoner/rng.hpp"

namespace rulereasoner {

namespace {

using AtomKey = std::pair<std::string, std::string>;  // (entity, predicate)

std::vector<Implication> parse_rules(std::span<const std::string> rules) {
  std::vector<Implication> out;
  out.reserve(rules.size());
  for (const auto& r : rules) {
    auto imp = parse_rule(r);
    if (!imp) throw std::invalid_argument("forward_chain: cannot parse rule '" + r + "'");
    out.push_back(std::move(*imp));
  }
  return out;
}

Atom parse_atom(std::string_view text) {
  auto a = parse_statement(text);
  if (!a) throw std::invalid_argument("forward_chain: cannot parse atom '" + std::string(text) + "'");
  return *a;
}

std::set<AtomKey> parse_facts(std::span<const std::string> facts) {
  std::set<AtomKey> known;
  for (const auto& f : facts) {
    auto a = parse_atom(f);
    known.emplace(std::move(a.entity), std::move(a.predicate));
  }
  return known;
}

// Applies one rule to every matching entity. Returns true if anything new
// became known; sets `hit` when the query atom was among the additions.
bool apply(const Implication& rule, std::set<AtomKey>& known, const AtomKey& query, bool& hit) {
  std::vector<AtomKey> added;
  for (const auto& [entity, pred] : known)
    if (pred == rule.premise && !known.contains({entity, rule.conclusion}))
      added.emplace_back(entity, rule.conclusion);
  for (auto& a : added) {
    if (a == query) hit = true;
    known.insert(std::move(a));
  }
  return !added.empty();
}

}  // namespace

ChainVerdict forward_chain(std::span<const std::string> rules,
                           std::span<const std::string> facts, std::string_view query) {
  const auto parsed = parse_rules(rules);
  auto known = parse_facts(facts);
  const auto q = parse_atom(query);
  const AtomKey target{q.entity, q.predicate};
  bool hit = false;
  // Each productive pass adds at least one predicate, so at most
  // |rules| + 1 passes run.
  for (bool changed = true; changed;) {
    changed = false;
    for (const auto& r : parsed) changed = apply(r, known, target, hit) || changed;
  }
  return known.contains(target) ? ChainVerdict::derivable : ChainVerdict::not_derivable;
}

ScanTrace scan_rules(std::span<const std::string> rules, std::span<const std::string> facts,
                     std::string_view query) {
  const auto parsed = parse_rules(rules);
  auto known = parse_facts(facts);
  const auto q = parse_atom(query);
  const AtomKey target{q.entity, q.predicate};
  ScanTrace trace;
  if (known.contains(target)) {
    trace.derived = true;
    return trace;
  }
  for (bool changed = true; changed;) {
    changed = false;
    ++trace.passes;
    for (const auto& r : parsed) {
      ++trace.inspections;
      bool hit = false;
      changed = apply(r, known, target, hit) || changed;
      if (hit) {
        trace.derived = true;
        return trace;
      }
    }
  }
  return trace;
}

int reasoning_cost(const Problem& p) {
  return scan_rules(p.rules, p.facts, query_statement(p)).inspections;
}

double slip_probability(double slip_rate, int inspections) {
  if (slip_rate <= 0.0 || inspections <= 0) return 0.0;
  return 1.0 - std::pow(1.0 - slip_rate, inspections);
}

std::string response_text(std::string_view label, int inspections) {
  return "<think>Checked " + std::to_string(inspections) +
         " rule applications.</think>\n<answer>" + std::string(label) + "</answer>";
}

std::string_view to_string(EvalMode m) { return m == EvalMode::greedy ? "greedy" : "sampled"; }

EvalMode eval_mode_from_string(std::string_view text) {
  if (text == "sampled") return EvalMode::sampled;
  if (text == "greedy") return EvalMode::greedy;
  throw std::invalid_argument("unknown eval mode '" + std::string(text) + "' (sampled|greedy)");
}

namespace {

struct PreparedItem {
  CellId cell;
  double slip = 0.0;
  std::vector<double> label_success;  // success of emitting each label
  double mean_success = 0.0;
};

PreparedItem prepare(const Policy& policy, CellId cell, const Problem& presented,
                     double slip_rate) {
  PreparedItem item;
  item.cell = cell;
  const auto space = AnswerSpace::of(presented);
  const auto& labels = policy.shape().at(cell.domain).labels;
  if (labels != space.labels)
    throw std::invalid_argument("problem " + presented.id + " does not match its policy cell");
  const int cost = reasoning_cost(presented);
  item.slip = slip_probability(slip_rate, cost);
  for (const auto& l : labels)
    item.label_success.push_back(score(response_text(l, cost), presented.answer_key, space).success);
  for (double s : item.label_success) item.mean_success += s;
  item.mean_success /= static_cast<double>(labels.size());
  return item;
}

double prepared_pass1(const Policy& policy, const PreparedItem& item, const EvalConfig& cfg) {
  std::vector<double> pi;
  if (cfg.mode == EvalMode::greedy) {
    pi.assign(item.label_success.size(), 0.0);
    pi[policy.argmax(item.cell)] = 1.0;
  } else {
    pi = policy.probabilities(item.cell, cfg.temperature);
  }
  double p = 0.0;
  for (std::size_t a = 0; a < pi.size(); ++a)
    p += pi[a] * ((1.0 - item.slip) * item.label_success[a] + item.slip * item.mean_success);
  return p;
}

}  // namespace

double expected_pass1(const Policy& policy, CellId cell, const Problem& presented,
                      const EvalConfig& cfg) {
  return prepared_pass1(policy, prepare(policy, cell, presented, cfg.slip_rate), cfg);
}

std::vector<double> evaluate(const Policy& policy, std::span<const EvalItem> items,
                             const EvalConfig& cfg) {
  const auto n = policy.shape().size();
  std::vector<double> sum(n, 0.0);
  std::vector<int> count(n, 0);
  for (const auto& it : items) {
    sum[it.cell.domain] += expected_pass1(policy, it.cell, it.presented, cfg);
    ++count[it.cell.domain];
  }
  for (std::size_t d = 0; d < n; ++d)
    if (count[d] > 0) sum[d] /= count[d];
  return sum;
}

std::vector<EvalItem> eval_items(const std::vector<DomainShape>& shape,
                                 const GroupedDataset& problems,
                                 std::optional<std::uint64_t> shuffle_seed) {
  std::vector<EvalItem> items;
  for (const auto& d : problems.domains()) {
    auto it = std::find_if(shape.begin(), shape.end(),
                           [&](const DomainShape& s) { return s.domain == d; });
    if (it == shape.end())
      throw std::invalid_argument("evaluation domain '" + d + "' has no policy table");
    const auto di = static_cast<std::size_t>(it - shape.begin());
    for (const auto& p : problems.bucket(d)) {
      if (p.qtype >= it->n_qtypes)
        throw std::invalid_argument("problem " + p.id + ": qtype beyond the policy table");
      items.push_back({{di, p.qtype},
                       shuffle_seed ? shuffle_rules(p, derive_seed(*shuffle_seed, {fnv1a64(p.id)}))
                                    : p});
    }
  }
  return items;
}

double macro_mean(std::span<const double> per_domain) {
  if (per_domain.empty()) return 0.0;
  double s = 0.0;
  for (double x : per_domain) s += x;
  return s / static_cast<double>(per_domain.size());
}

// ---------------------------------------------------------------------------

void validate(const EnvConfig& env) {
  validate(env.sampler);
  validate(env.grpo);
  if (env.total_steps < 1) throw std::invalid_argument("total_steps must be >= 1");
  if (env.validation_interval < 1) throw std::invalid_argument("validation_interval must be >= 1");
  if (env.validation_size < 1) throw std::invalid_argument("validation_size must be >= 1");
  if (!(env.rollout_temperature > 0.0)) throw std::invalid_argument("rollout temperature must be > 0");
  if (!(env.eval.temperature > 0.0)) throw std::invalid_argument("validation temperature must be > 0");
  if (!(env.slip_rate >= 0.0 && env.slip_rate < 1.0))
    throw std::invalid_argument("slip_rate must be in [0, 1)");
  if (!env.train_data) validate(env.synth);
  if (env.train_data && !env.val_data)
    throw std::invalid_argument("a supplied training set needs a supplied validation set");
}

GroupedDataset training_data(const EnvConfig& env) {
  return env.train_data ? *env.train_data : synth_generate(env.synth, 0);
}

GroupedDataset validation_data(const EnvConfig& env, const GroupedDataset& train) {
  if (env.val_data) return *env.val_data;
  SynthSpec spec = env.synth;
  for (auto& d : spec.domains) d.problems = env.validation_size;
  auto val = synth_generate(spec, 1);
  for (const auto& d : val.domains())
    if (!train.contains(d)) throw std::invalid_argument("validation domain not in training set");
  return val;
}

namespace {

constexpr std::uint64_t kBatchTag = 0x42;
constexpr std::uint64_t kShuffleTag = 0x53;
constexpr std::uint64_t kPolicyTag = 0x50;
constexpr std::uint64_t kSlipTag = 0x52;
constexpr std::uint64_t kValTag = 0x56;

}  // namespace

TrainingRun run_training(const EnvConfig& env, const StepObserver& observer) {
  validate(env);
  auto train = training_data(env);
  auto val = validation_data(env, train);

  Policy policy(policy_shape(train), env.rollout_temperature);
  DomainSampler sampler(env.sampler, train, env.total_steps);
  const auto& domains = train.domains();
  const auto n = domains.size();

  EvalConfig eval_cfg = env.eval;
  eval_cfg.slip_rate = env.slip_rate;
  std::vector<PreparedItem> val_items;
  for (const auto& it : eval_items(policy.shape(), val, derive_seed(env.seed, {kValTag})))
    val_items.push_back(prepare(policy, it.cell, it.presented, env.slip_rate));

  TrainingRun run{{}, policy, {}, {}, {}};
  run.metrics.reserve(static_cast<std::size_t>(env.total_steps));

  for (int step = 1; step <= env.total_steps; ++step) {
    const auto s64 = static_cast<std::uint64_t>(step);
    const auto weights = sampler.weights(step - 1);
    const auto counts = allocate(weights, env.sampler.batch_size);
    const auto batch = sample_batch(train, counts, derive_seed(env.seed, {s64, kBatchTag}));

    std::vector<RolloutGroup> groups;
    groups.reserve(batch.size());
    std::map<std::string, std::vector<double>> successes;
    double success_sum = 0.0;
    std::size_t rollouts = 0;
    for (std::size_t j = 0; j < batch.size(); ++j) {
      const Problem& base = *batch[j];
      const auto j64 = static_cast<std::uint64_t>(j);
      // Rule order is re-drawn for every occurrence of a problem.
      const Problem presented = shuffle_rules(base, derive_seed(env.seed, {s64, j64, kShuffleTag}));
      const int cost = reasoning_cost(presented);
      const double slip = slip_probability(env.slip_rate, cost);
      const auto space = AnswerSpace::of(presented);

      RolloutGroup g;
      g.problem = batch[j];
      g.cell = {train.domain_index(base.domain), base.qtype};
      const auto& labels = policy.shape()[g.cell.domain].labels;
      g.samples = sample(policy, g.cell, env.grpo.group_size,
                         derive_seed(env.seed, {s64, j64, kPolicyTag}));
      Rng slip_rng(derive_seed(env.seed, {s64, j64, kSlipTag}));
      auto& dom_success = successes[base.domain];
      for (const auto& s : g.samples) {
        std::size_t emitted = s.option;
        if (slip > 0.0 && slip_rng.bernoulli(slip))
          emitted = static_cast<std::size_t>(slip_rng.below(labels.size()));
        const auto reward = score(response_text(labels[emitted], cost), base.answer_key, space);
        g.rewards.push_back(reward.value);
        dom_success.push_back(reward.success);
        success_sum += reward.success;
        ++rollouts;
      }
      fill_advantages(g);
      groups.push_back(std::move(g));
    }

    StepMetrics m;
    m.step = step;
    m.objective = policy_step(policy, groups, env.grpo, StepMode::strict);
    if (env.two_step_clip_test) policy_step(policy, groups, env.grpo, StepMode::allow_stale);
    m.train_success = rollouts ? success_sum / static_cast<double>(rollouts) : 0.0;

    sampler.observe(successes);

    std::optional<std::vector<double>> val_scores;
    if (step % env.validation_interval == 0 || step == env.total_steps) {
      std::vector<double> sum(n, 0.0);
      std::vector<int> cnt(n, 0);
      for (const auto& it : val_items) {
        sum[it.cell.domain] += prepared_pass1(policy, it, eval_cfg);
        ++cnt[it.cell.domain];
      }
      for (std::size_t d = 0; d < n; ++d)
        if (cnt[d] > 0) sum[d] /= cnt[d];
      m.val_macro = macro_mean(sum);
      val_scores = std::move(sum);
    }

    const auto& states = sampler.states();
    for (std::size_t d = 0; d < n; ++d) {
      DomainStepMetrics dm;
      dm.domain = domains[d];
      dm.ewma = states[d].ewma;
      dm.weight = weights.weights[d];
      dm.count = counts[d].second;
      if (counts[d].second > 0) dm.mean_success = states[d].last_mean;
      if (val_scores) dm.val_pass1 = (*val_scores)[d];
      m.domains.push_back(std::move(dm));
    }
    if (observer) observer(m, policy, states);
    run.metrics.push_back(std::move(m));
  }

  run.policy = std::move(policy);
  run.sampler_states = sampler.states();
  run.train = std::move(train);
  run.validation = std::move(val);
  return run;
}

double steps_to_target(std::span<const StepMetrics> metrics, double target) {
  for (const auto& m : metrics)
    if (m.val_macro && *m.val_macro >= target) return m.step;
  return std::numeric_limits<double>::infinity();
}

double median(std::vector<double> xs) {
  if (xs.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(xs.begin(), xs.end());
  const auto mid = xs.size() / 2;
  if (xs.size() % 2 == 1) return xs[mid];
  const double a = xs[mid - 1], b = xs[mid];
  if (std::isinf(a) || std::isinf(b)) return std::isinf(a) ? a : b;
  return 0.5 * (a + b);
}

SynthSpec ood_spec(const SynthSpec& spec) {
  SynthSpec out = spec;
  for (auto& d : out.domains) {
    d.depth_min = std::min(kMaxDepth, d.depth_min + 2);
    d.depth_max = std::min(kMaxDepth, d.depth_max + 2);
    d.distractor_rules = std::max(2, 2 * d.distractor_rules);
  }
  return out;
}

ComparisonTable run_comparison(const EnvConfig& env, std::span<const Strategy> strategies,
                               std::span<const std::uint64_t> seeds, double target) {
  if (strategies.empty()) throw std::invalid_argument("run_comparison: no strategies");
  if (seeds.empty()) throw std::invalid_argument("run_comparison: no seeds");
  ComparisonTable table;
  table.target = target;
  const auto train = training_data(env);
  table.domains = train.domains();
  const auto n = table.domains.size();

  std::optional<GroupedDataset> ood;
  if (!env.train_data) {
    SynthSpec spec = ood_spec(env.synth);
    for (auto& d : spec.domains) d.problems = env.validation_size;
    ood = synth_generate(spec, 2);
  }

  for (const auto strategy : strategies) {
    ComparisonRow row;
    row.strategy = strategy;
    std::vector<std::vector<double>> final_per_domain(n);
    std::vector<double> ood_macro;
    for (const auto seed : seeds) {
      EnvConfig e = env;
      e.seed = seed;
      e.sampler.strategy = strategy;
      const auto run = run_training(e);
      row.steps_per_seed.push_back(steps_to_target(run.metrics, target));
      const auto& last = run.metrics.back();
      row.final_macro_per_seed.push_back(last.val_macro.value_or(0.0));
      for (std::size_t d = 0; d < n; ++d)
        final_per_domain[d].push_back(last.domains[d].val_pass1.value_or(0.0));
      if (ood) {
        EvalConfig cfg = e.eval;
        cfg.slip_rate = e.slip_rate;
        const auto items = eval_items(run.policy.shape(), *ood, derive_seed(seed, {kValTag}));
        ood_macro.push_back(macro_mean(evaluate(run.policy, items, cfg)));
      }
    }
    row.median_steps = median(row.steps_per_seed);
    row.median_final_macro = median(row.final_macro_per_seed);
    for (auto& xs : final_per_domain) row.median_final_per_domain.push_back(median(xs));
    row.median_ood_macro = ood ? median(ood_macro) : 0.0;
    table.rows.push_back(std::move(row));
  }
  return table;
}

}  // namespace rulereasoner
