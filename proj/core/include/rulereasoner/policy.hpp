#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "rulereasoner/dataset.hpp"

namespace rulereasoner {

class PolicyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Per-domain table shape: one logit vector of labels.size() entries for each
// question template.
struct DomainShape {
  std::string domain;
  int n_qtypes = 1;
  std::vector<std::string> labels;
  bool operator==(const DomainShape&) const = default;
};

// Shapes in dataset domain order. Boolean domains act over True/False/Unknown;
// multiple-choice domains over their option labels (which must agree across
// the domain).
std::vector<DomainShape> policy_shape(const GroupedDataset& data);

struct CellId {
  std::size_t domain = 0;
  int qtype = 0;
};

struct ActionSample {
  std::size_t option = 0;
  double logprob_old = 0.0;  // under the sampling policy
  double logprob_new = 0.0;  // under the current policy
};

// Tabular softmax policy: pi(option | domain, qtype) = softmax(theta / T).
class Policy {
 public:
  Policy(std::vector<DomainShape> shape, double temperature);

  double temperature() const { return temperature_; }
  const std::vector<DomainShape>& shape() const { return shape_; }
  std::size_t n_actions(CellId cell) const;
  std::size_t n_cells() const { return offsets_.size(); }

  std::span<const double> logits(CellId cell) const;
  std::span<double> logits(CellId cell);

  // All parameters, cell-major in shape order.
  std::span<const double> parameters() const { return theta_; }
  std::span<double> parameters() { return theta_; }
  std::size_t cell_offset(CellId cell) const { return offsets_[cell_index(cell)]; }

  std::vector<double> probabilities(CellId cell) const { return probabilities(cell, temperature_); }
  std::vector<double> probabilities(CellId cell, double temperature) const;
  std::size_t argmax(CellId cell) const;

  bool operator==(const Policy&) const = default;

 private:
  std::size_t cell_index(CellId cell) const;

  std::vector<DomainShape> shape_;
  double temperature_;
  std::vector<std::size_t> domain_cells_;  // first cell index per domain
  std::vector<std::size_t> offsets_;       // parameter offset per cell
  std::vector<std::size_t> widths_;
  std::vector<double> theta_;
};

double logprob(const Policy& policy, CellId cell, std::size_t option);

// G independent draws at the policy temperature. G must be >= 2.
std::vector<ActionSample> sample(const Policy& policy, CellId cell, int group_size,
                                 std::uint64_t seed);

// d log pi(option) / d theta over the cell's logits: (onehot - p) / T.
std::vector<double> grad_logprob(const Policy& policy, CellId cell, std::size_t option);

// Text table, one line per cell: "<domain> <qtype> <logit>..." at 17
// significant digits, preceded by a "temperature <T>" line.
void save_policy_checkpoint(const std::filesystem::path& path, const Policy& policy);
// Logits are loaded into a policy of the given shape.
Policy load_policy_checkpoint(const std::filesystem::path& path,
                              std::vector<DomainShape> shape);

}  // namespace rulereasoner
