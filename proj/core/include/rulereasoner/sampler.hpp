#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "rulereasoner/dataset.hpp"

namespace rulereasoner {

class SamplerError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Strategy { dads, uniform, static_proportional, data_balance, easy_to_hard };

std::string_view to_string(Strategy s);
// Accepts the long names and the CLI short forms static, balance, e2h.
Strategy strategy_from_string(std::string_view text);

struct SamplerConfig {
  double alpha = 0.5;          // EWMA smoothing
  double tau = 0.5;            // weight temperature
  double floor_epsilon = 0.1;  // additive weight floor
  double r_target = 1.0;
  int batch_size = 64;
  Strategy strategy = Strategy::dads;
};

void validate(const SamplerConfig& cfg);

struct DomainState {
  std::string domain;
  double ewma = 0.0;
  std::optional<double> last_mean;
  std::uint64_t n_observed = 0;
};

using DomainStates = std::vector<DomainState>;

DomainStates initial_states(const std::vector<std::string>& domains);

struct WeightVector {
  std::vector<std::string> domains;
  std::vector<double> weights;

  double at(std::string_view domain) const;
};

using Allocation = std::vector<std::pair<std::string, int>>;

// Folds one step of success values (each in [0, 1]) into the states.
// Domains absent from `step_rewards` keep their EWMA.
void observe(DomainStates& states,
             const std::map<std::string, std::vector<double>>& step_rewards,
             double alpha);

// v = max(0, r_target - ewma); w = exp(v / tau) + floor; then w / sum(w).
WeightVector compute_weights(const DomainStates& states, const SamplerConfig& cfg);

// Largest-remainder apportionment of batch_size; ties go to the earlier domain.
Allocation allocate(const WeightVector& weights, int batch_size);

// Per domain, `count` draws without replacement, falling back to draws with
// replacement once the bucket is exhausted. Output is in allocation order.
std::vector<const Problem*> sample_batch(const GroupedDataset& data,
                                         const Allocation& counts,
                                         std::uint64_t seed);

// Weights for the non-adaptive strategies. `step` is 0-based. easy_to_hard
// splits training into one phase per domain (ascending mean depth) and puts
// 1 - (n-1)*floor on the active domain, floor on the rest.
WeightVector baseline_weights(Strategy strategy, const GroupedDataset& data,
                              int step, int total_steps, double floor);

// Stateful front-end: holds the domain states and yields each step's weights
// for the configured strategy.
class DomainSampler {
 public:
  DomainSampler(SamplerConfig cfg, const GroupedDataset& data, int total_steps);

  WeightVector weights(int step) const;
  void observe(const std::map<std::string, std::vector<double>>& step_rewards);

  const DomainStates& states() const { return states_; }
  void restore(DomainStates states);
  const SamplerConfig& config() const { return cfg_; }

 private:
  SamplerConfig cfg_;
  const GroupedDataset* data_;
  int total_steps_;
  DomainStates states_;
};

// Checkpoint: CSV with header "domain,ewma,n_observed", values at 17
// significant digits.
void save_sampler_checkpoint(const std::filesystem::path& path, const DomainStates& states);
DomainStates load_sampler_checkpoint(const std::filesystem::path& path);

}  // namespace rulereasoner
