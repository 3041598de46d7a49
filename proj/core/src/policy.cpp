#include "rulereasoner/policy.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "rulereasoner/rng.hpp"
#include "rulereasoner/verifier.hpp"

namespace rulereasoner {

std::vector<DomainShape> policy_shape(const GroupedDataset& data) {
  std::vector<DomainShape> shape;
  for (const auto& d : data.domains()) {
    DomainShape s{d, 1, {}};
    bool first = true;
    for (const auto& p : data.bucket(d)) {
      s.n_qtypes = std::max(s.n_qtypes, p.qtype + 1);
      auto labels = AnswerSpace::of(p).labels;
      if (first) {
        s.labels = std::move(labels);
        first = false;
      } else if (labels != s.labels) {
        throw PolicyError("domain '" + d + "' mixes answer spaces (problem " + p.id + ")");
      }
    }
    shape.push_back(std::move(s));
  }
  return shape;
}

Policy::Policy(std::vector<DomainShape> shape, double temperature)
    : shape_(std::move(shape)), temperature_(temperature) {
  if (!(temperature_ > 0.0) || !std::isfinite(temperature_))
    throw PolicyError("policy temperature must be > 0");
  std::size_t offset = 0;
  for (const auto& s : shape_) {
    if (s.n_qtypes < 1 || s.labels.empty())
      throw PolicyError("domain '" + s.domain + "' has an empty table");
    domain_cells_.push_back(offsets_.size());
    for (int q = 0; q < s.n_qtypes; ++q) {
      offsets_.push_back(offset);
      widths_.push_back(s.labels.size());
      offset += s.labels.size();
    }
  }
  theta_.assign(offset, 0.0);
}

std::size_t Policy::cell_index(CellId cell) const {
  if (cell.domain >= shape_.size() || cell.qtype < 0 ||
      cell.qtype >= shape_[cell.domain].n_qtypes)
    throw PolicyError("cell (" + std::to_string(cell.domain) + ", " +
                      std::to_string(cell.qtype) + ") out of range");
  return domain_cells_[cell.domain] + static_cast<std::size_t>(cell.qtype);
}

std::size_t Policy::n_actions(CellId cell) const { return widths_[cell_index(cell)]; }

std::span<const double> Policy::logits(CellId cell) const {
  const auto i = cell_index(cell);
  return std::span<const double>(theta_).subspan(offsets_[i], widths_[i]);
}

std::span<double> Policy::logits(CellId cell) {
  const auto i = cell_index(cell);
  return std::span<double>(theta_).subspan(offsets_[i], widths_[i]);
}

std::vector<double> Policy::probabilities(CellId cell, double temperature) const {
  const auto z = logits(cell);
  const double top = *std::max_element(z.begin(), z.end());
  std::vector<double> p(z.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    p[i] = std::exp((z[i] - top) / temperature);
    sum += p[i];
  }
  for (auto& x : p) x /= sum;
  return p;
}

std::size_t Policy::argmax(CellId cell) const {
  const auto z = logits(cell);
  return static_cast<std::size_t>(std::max_element(z.begin(), z.end()) - z.begin());
}

double logprob(const Policy& policy, CellId cell, std::size_t option) {
  const auto z = policy.logits(cell);
  if (option >= z.size())
    throw PolicyError("option " + std::to_string(option) + " out of range");
  const double t = policy.temperature();
  const double top = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double x : z) sum += std::exp((x - top) / t);
  return (z[option] - top) / t - std::log(sum);
}

std::vector<ActionSample> sample(const Policy& policy, CellId cell, int group_size,
                                 std::uint64_t seed) {
  if (group_size < 2) throw PolicyError("sample: group size must be >= 2");
  const auto probs = policy.probabilities(cell);
  std::vector<double> logp(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) logp[i] = logprob(policy, cell, i);
  Rng rng(seed);
  std::vector<ActionSample> out(static_cast<std::size_t>(group_size));
  for (auto& s : out) {
    s.option = rng.categorical(probs);
    s.logprob_old = logp[s.option];
    s.logprob_new = s.logprob_old;
  }
  return out;
}

std::vector<double> grad_logprob(const Policy& policy, CellId cell, std::size_t option) {
  auto g = policy.probabilities(cell);
  if (option >= g.size()) throw PolicyError("option out of range");
  const double t = policy.temperature();
  for (std::size_t j = 0; j < g.size(); ++j)
    g[j] = ((j == option ? 1.0 : 0.0) - g[j]) / t;
  return g;
}

void save_policy_checkpoint(const std::filesystem::path& path, const Policy& policy) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw PolicyError("cannot write " + path.string());
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", policy.temperature());
  out << "temperature " << buf << '\n';
  const auto& shape = policy.shape();
  for (std::size_t d = 0; d < shape.size(); ++d)
    for (int q = 0; q < shape[d].n_qtypes; ++q) {
      out << shape[d].domain << ' ' << q;
      for (double x : policy.logits({d, q})) {
        std::snprintf(buf, sizeof buf, "%.17g", x);
        out << ' ' << buf;
      }
      out << '\n';
    }
}

Policy load_policy_checkpoint(const std::filesystem::path& path,
                              std::vector<DomainShape> shape) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PolicyError("cannot open " + path.string());
  std::string word;
  double temperature = 0.0;
  if (!(in >> word >> temperature) || word != "temperature")
    throw PolicyError(path.string() + ": missing temperature line");
  Policy policy(std::move(shape), temperature);
  const auto& sh = policy.shape();
  std::string line;
  std::getline(in, line);
  std::size_t loaded = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string domain;
    int qtype = 0;
    row >> domain >> qtype;
    auto it = std::find_if(sh.begin(), sh.end(),
                           [&](const DomainShape& s) { return s.domain == domain; });
    if (it == sh.end()) throw PolicyError(path.string() + ": unknown domain '" + domain + "'");
    auto z = policy.logits({static_cast<std::size_t>(it - sh.begin()), qtype});
    for (auto& x : z) {
      std::string tok;
      if (!(row >> tok)) throw PolicyError(path.string() + ": short row for " + domain);
      x = std::strtod(tok.c_str(), nullptr);
    }
    if (std::string extra; row >> extra)
      throw PolicyError(path.string() + ": long row for " + domain);
    ++loaded;
  }
  if (loaded != policy.n_cells())
    throw PolicyError(path.string() + ": expected " + std::to_string(policy.n_cells()) +
                      " cells, read " + std::to_string(loaded));
  return policy;
}

}  // namespace rulereasoner
