#include "rulereasoner/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "rulereasoner/rng.hpp"

namespace rulereasoner {

std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::dads: return "dads";
    case Strategy::uniform: return "uniform";
    case Strategy::static_proportional: return "static";
    case Strategy::data_balance: return "balance";
    case Strategy::easy_to_hard: return "e2h";
  }
  return "dads";
}

Strategy strategy_from_string(std::string_view text) {
  if (text == "dads") return Strategy::dads;
  if (text == "uniform") return Strategy::uniform;
  if (text == "static" || text == "static_proportional") return Strategy::static_proportional;
  if (text == "balance" || text == "data_balance") return Strategy::data_balance;
  if (text == "e2h" || text == "easy_to_hard") return Strategy::easy_to_hard;
  throw SamplerError("unknown strategy '" + std::string(text) +
                     "' (expected dads|uniform|static|balance|e2h)");
}

void validate(const SamplerConfig& cfg) {
  if (!(cfg.alpha >= 0.0 && cfg.alpha <= 1.0)) throw SamplerError("alpha must be in [0, 1]");
  if (!(cfg.tau > 0.0) || !std::isfinite(cfg.tau)) throw SamplerError("tau must be > 0");
  if (!(cfg.floor_epsilon >= 0.0) || !std::isfinite(cfg.floor_epsilon))
    throw SamplerError("floor_epsilon must be >= 0");
  if (!std::isfinite(cfg.r_target)) throw SamplerError("r_target must be finite");
  if (cfg.batch_size < 1) throw SamplerError("batch_size must be >= 1");
}

DomainStates initial_states(const std::vector<std::string>& domains) {
  DomainStates states;
  states.reserve(domains.size());
  for (const auto& d : domains) states.push_back({d, 0.0, std::nullopt, 0});
  return states;
}

double WeightVector::at(std::string_view domain) const {
  for (std::size_t i = 0; i < domains.size(); ++i)
    if (domains[i] == domain) return weights[i];
  throw SamplerError("no weight for domain '" + std::string(domain) + "'");
}

void observe(DomainStates& states,
             const std::map<std::string, std::vector<double>>& step_rewards,
             double alpha) {
  for (const auto& [domain, successes] : step_rewards) {
    auto it = std::find_if(states.begin(), states.end(),
                           [&](const DomainState& s) { return s.domain == domain; });
    if (it == states.end()) throw SamplerError("observe: unknown domain '" + domain + "'");
    for (double r : successes)
      if (!(r >= 0.0 && r <= 1.0))
        throw SamplerError("observe: success values must lie in [0, 1]");
  }
  for (auto& s : states) {
    auto it = step_rewards.find(s.domain);
    if (it == step_rewards.end() || it->second.empty()) continue;
    const auto& xs = it->second;
    const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
    s.last_mean = mean;
    s.ewma = alpha * s.ewma + (1.0 - alpha) * mean;
    s.n_observed += xs.size();
  }
}

WeightVector compute_weights(const DomainStates& states, const SamplerConfig& cfg) {
  if (states.empty()) throw SamplerError("compute_weights: no domains");
  WeightVector out;
  out.domains.reserve(states.size());
  out.weights.reserve(states.size());
  double total = 0.0;
  for (const auto& s : states) {
    if (!std::isfinite(s.ewma)) throw SamplerError("compute_weights: non-finite EWMA");
    const double v = std::max(0.0, cfg.r_target - s.ewma);
    const double w = std::exp(v / cfg.tau) + cfg.floor_epsilon;
    out.domains.push_back(s.domain);
    out.weights.push_back(w);
    total += w;
  }
  for (auto& w : out.weights) w /= total;
  return out;
}

Allocation allocate(const WeightVector& weights, int batch_size) {
  if (batch_size < 1) throw SamplerError("allocate: batch_size must be >= 1");
  const std::size_t n = weights.weights.size();
  std::vector<int> counts(n);
  std::vector<double> remainders(n);
  int assigned = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double exact = weights.weights[i] * batch_size;
    counts[i] = static_cast<int>(std::floor(exact));
    remainders[i] = exact - counts[i];
    assigned += counts[i];
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return remainders[a] > remainders[b];
  });
  for (std::size_t j = 0; assigned < batch_size; j = (j + 1) % n) {
    ++counts[order[j]];
    ++assigned;
  }
  Allocation out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.emplace_back(weights.domains[i], counts[i]);
  return out;
}

std::vector<const Problem*> sample_batch(const GroupedDataset& data,
                                         const Allocation& counts,
                                         std::uint64_t seed) {
  std::vector<const Problem*> batch;
  for (const auto& [domain, count] : counts) {
    if (count <= 0) continue;
    if (!data.contains(domain))
      throw SamplerError("sample_batch: domain '" + domain + "' not in dataset");
    const auto& pool = data.bucket(domain);
    if (pool.empty()) throw SamplerError("sample_batch: empty bucket '" + domain + "'");
    Rng rng(derive_seed(seed, {fnv1a64(domain)}));
    std::vector<std::size_t> idx(pool.size());
    std::iota(idx.begin(), idx.end(), 0);
    const auto distinct = std::min<std::size_t>(static_cast<std::size_t>(count), pool.size());
    for (std::size_t i = 0; i < distinct; ++i) {
      const auto j = i + static_cast<std::size_t>(rng.below(idx.size() - i));
      std::swap(idx[i], idx[j]);
      batch.push_back(&pool[idx[i]]);
    }
    for (auto extra = static_cast<std::size_t>(count) - distinct; extra > 0; --extra)
      batch.push_back(&pool[rng.below(pool.size())]);
  }
  return batch;
}

WeightVector baseline_weights(Strategy strategy, const GroupedDataset& data,
                              int step, int total_steps, double floor) {
  const auto& domains = data.domains();
  const std::size_t n = domains.size();
  if (n == 0) throw SamplerError("baseline_weights: no domains");
  WeightVector out{domains, std::vector<double>(n, 1.0 / static_cast<double>(n))};
  switch (strategy) {
    case Strategy::dads:
    case Strategy::uniform:
    case Strategy::data_balance:
      break;
    case Strategy::static_proportional: {
      const double total = static_cast<double>(data.size());
      for (std::size_t i = 0; i < n; ++i)
        out.weights[i] = static_cast<double>(data.bucket(domains[i]).size()) / total;
      break;
    }
    case Strategy::easy_to_hard: {
      if (n == 1) break;
      if (!(floor >= 0.0) || floor * static_cast<double>(n - 1) > 1.0)
        throw SamplerError("easy_to_hard: floor must satisfy 0 <= (n-1)*floor <= 1");
      std::vector<double> mean_depth(n);
      for (std::size_t i = 0; i < n; ++i) {
        const auto& b = data.bucket(domains[i]);
        double sum = 0.0;
        for (const auto& p : b) sum += p.depth;
        mean_depth[i] = sum / static_cast<double>(b.size());
      }
      std::vector<std::size_t> order(n);
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t a, std::size_t b) { return mean_depth[a] < mean_depth[b]; });
      const auto steps = static_cast<long long>(std::max(total_steps, 1));
      const auto phase = std::min<long long>(
          static_cast<long long>(n) - 1,
          static_cast<long long>(std::max(step, 0)) * static_cast<long long>(n) / steps);
      std::fill(out.weights.begin(), out.weights.end(), floor);
      out.weights[order[static_cast<std::size_t>(phase)]] = 1.0 - static_cast<double>(n - 1) * floor;
      break;
    }
  }
  return out;
}

DomainSampler::DomainSampler(SamplerConfig cfg, const GroupedDataset& data, int total_steps)
    : cfg_(cfg), data_(&data), total_steps_(total_steps), states_(initial_states(data.domains())) {
  validate(cfg_);
}

WeightVector DomainSampler::weights(int step) const {
  if (cfg_.strategy == Strategy::dads) return compute_weights(states_, cfg_);
  return baseline_weights(cfg_.strategy, *data_, step, total_steps_, cfg_.floor_epsilon);
}

void DomainSampler::observe(const std::map<std::string, std::vector<double>>& step_rewards) {
  rulereasoner::observe(states_, step_rewards, cfg_.alpha);
}

void DomainSampler::restore(DomainStates states) {
  if (states.size() != states_.size())
    throw SamplerError("restore: domain count mismatch");
  for (std::size_t i = 0; i < states.size(); ++i)
    if (states[i].domain != states_[i].domain)
      throw SamplerError("restore: domain order mismatch at '" + states[i].domain + "'");
  states_ = std::move(states);
}

void save_sampler_checkpoint(const std::filesystem::path& path, const DomainStates& states) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw SamplerError("cannot write " + path.string());
  out << "domain,ewma,n_observed\n";
  char buf[64];
  for (const auto& s : states) {
    std::snprintf(buf, sizeof buf, "%.17g", s.ewma);
    out << s.domain << ',' << buf << ',' << s.n_observed << '\n';
  }
}

DomainStates load_sampler_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SamplerError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "domain,ewma,n_observed")
    throw SamplerError(path.string() + ": bad checkpoint header");
  DomainStates states;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto a = line.find(',');
    const auto b = line.find(',', a + 1);
    if (a == std::string::npos || b == std::string::npos)
      throw SamplerError(path.string() + ": malformed row '" + line + "'");
    DomainState s;
    s.domain = line.substr(0, a);
    s.ewma = std::stod(line.substr(a + 1, b - a - 1));
    s.n_observed = std::stoull(line.substr(b + 1));
    states.push_back(std::move(s));
  }
  return states;
}

}  // namespace rulereasoner
