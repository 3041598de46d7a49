#include "rulereasoner/experiment.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "rulereasoner/verifier.hpp"

namespace rulereasoner {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

std::string num(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string opt_num(const std::optional<double>& x) { return x ? num(*x) : std::string(); }

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

// A finished run's final macro pass@1: the last global row of metrics.csv,
// provided it is the final step. Anything else means the run is incomplete.
std::optional<double> finished_macro(const fs::path& dir, int total_steps) {
  if (!fs::exists(dir / "policy.ckpt") || !fs::exists(dir / "metrics.csv")) return std::nullopt;
  std::ifstream in(dir / "metrics.csv");
  std::string line, last;
  while (std::getline(in, line))
    if (!line.empty()) last = line;
  const auto cells = split_csv_line(last);
  if (cells.size() != 9 || cells[1] != kGlobalRow) return std::nullopt;
  if (cells[0] != std::to_string(total_steps) || cells[6].empty()) return std::nullopt;
  return std::stod(cells[6]);
}

void write_checkpoints(const fs::path& dir, const Policy& policy, const DomainStates& states) {
  save_policy_checkpoint(dir / "policy.ckpt", policy);
  save_sampler_checkpoint(dir / "sampler.ckpt", states);
}

}  // namespace

std::string_view version_string() { return "rulereasoner " RULEREASONER_VERSION; }

void write_metrics_header(std::ostream& out) { out << kMetricsHeader << '\n'; }

void write_metrics_rows(std::ostream& out, const StepMetrics& m) {
  for (const auto& d : m.domains) {
    out << m.step << ',' << d.domain << ',' << opt_num(d.mean_success) << ',' << num(d.ewma)
        << ',' << num(d.weight) << ',' << d.count << ',' << opt_num(d.val_pass1) << ",,\n";
  }
  out << m.step << ',' << kGlobalRow << ",,,,,";
  out << opt_num(m.val_macro) << ',' << num(m.objective) << ',' << num(m.train_success) << '\n';
}

std::string manifest_json(const ConfigTree& tree, std::uint64_t seed) {
  ordered_json j;
  j["code_version"] = std::string(version_string());
  j["seed"] = seed;
  ordered_json cfg = ordered_json::object();
  // Seed lists and comparison settings do not change what a single run does.
  for (const auto& [path, value] : tree.entries()) {
    if (path == "run.seeds" || path.starts_with("compare.")) continue;
    cfg[path] = format_value(value);
  }
  j["config"] = std::move(cfg);
  // Supplied datasets are identified by content, not path.
  for (const char* key : {"data.train_path", "data.val_path"}) {
    if (auto p = tree.string_or(key)) {
      char hex[17];
      std::snprintf(hex, sizeof hex, "%016" PRIx64, fnv1a64(read_file(*p)));
      j["data_hash"][key] = hex;
    }
  }
  return j.dump(2) + "\n";
}

std::string run_id(const std::string& manifest) {
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016" PRIx64, fnv1a64(manifest));
  return hex;
}

RunResult execute_run(const ConfigTree& base, std::uint64_t seed, const fs::path& out_root) {
  ConfigTree tree = base;
  tree.set("run.seed", std::to_string(seed));
  const auto rc = run_config_from_tree(tree);
  const auto manifest = manifest_json(tree, seed);

  RunResult result;
  result.id = run_id(manifest);
  result.dir = out_root / result.id;
  if (auto macro = finished_macro(result.dir, rc.env.total_steps)) {
    result.final_macro = *macro;
    result.reused = true;
    return result;
  }

  fs::create_directories(result.dir);
  {
    std::ofstream mf(result.dir / "manifest.json");
    mf << manifest;
  }
  // Written under a temporary name so a partial file never looks finished.
  const auto tmp = result.dir / "metrics.csv.partial";
  std::ofstream csv(tmp);
  if (!csv) throw std::runtime_error("cannot write " + tmp.string());
  write_metrics_header(csv);
  const auto run = run_training(rc.env, [&](const StepMetrics& m, const Policy& policy,
                                            const DomainStates& states) {
    write_metrics_rows(csv, m);
    if (m.step % rc.save_interval == 0) write_checkpoints(result.dir, policy, states);
  });
  write_checkpoints(result.dir, run.policy, run.sampler_states);
  csv.close();
  fs::rename(tmp, result.dir / "metrics.csv");
  result.final_macro = run.metrics.back().val_macro.value_or(0.0);
  return result;
}

void write_comparison_csv(std::ostream& out, const ComparisonTable& table) {
  out << "strategy,median_steps,median_final_macro,median_ood_macro";
  for (const auto& d : table.domains) out << ",final_" << d;
  out << '\n';
  for (const auto& row : table.rows) {
    out << to_string(row.strategy) << ',' << (std::isinf(row.median_steps) ? "inf" : num(row.median_steps))
        << ',' << num(row.median_final_macro) << ',' << num(row.median_ood_macro);
    for (const double x : row.median_final_per_domain) out << ',' << num(x);
    out << '\n';
  }
}

std::pair<std::string, std::vector<std::string>> parse_grid_axis(std::string_view text) {
  static const std::set<std::string> allowed{"alpha", "tau", "floor_epsilon"};
  const auto eq = text.find('=');
  if (eq == std::string_view::npos) throw ConfigError("", "grid axis must look like key=v1,v2");
  std::string key(text.substr(0, eq));
  if (key.starts_with("sampler.")) key.erase(0, 8);
  if (!allowed.count(key))
    throw ConfigError("sampler." + key, "only alpha, tau and floor_epsilon can be swept");
  std::vector<std::string> values;
  std::string item;
  std::istringstream ss{std::string(text.substr(eq + 1))};
  while (std::getline(ss, item, ','))
    if (!item.empty()) values.push_back(item);
  if (values.empty()) throw ConfigError("sampler." + key, "grid axis has no values");
  return {"sampler." + key, values};
}

std::vector<SweepPoint> run_sweep(const ConfigTree& tree, const Grid& grid, const fs::path& out_root) {
  std::vector<SweepPoint> points;
  std::vector<std::size_t> idx(grid.size(), 0);
  while (true) {
    SweepPoint point;
    ConfigTree t = tree;
    for (std::size_t a = 0; a < grid.size(); ++a) {
      point.values.emplace_back(grid[a].first, grid[a].second[idx[a]]);
      t.set(grid[a].first, grid[a].second[idx[a]]);
    }
    const auto rc = run_config_from_tree(t);
    std::vector<double> finals;
    for (const auto seed : rc.seeds) {
      point.runs.push_back(execute_run(t, seed, out_root));
      finals.push_back(point.runs.back().final_macro);
    }
    point.median_final_macro = median(finals);
    points.push_back(std::move(point));

    std::size_t a = grid.size();
    while (a > 0) {
      --a;
      if (++idx[a] < grid[a].second.size()) break;
      idx[a] = 0;
      if (a == 0) return points;
    }
    if (grid.empty()) return points;
  }
}

void write_sweep_csv(std::ostream& out, const Grid& grid, std::span<const SweepPoint> points) {
  for (const auto& [key, values] : grid) out << key << ',';
  out << "median_final_macro,runs\n";
  for (const auto& p : points) {
    for (const auto& [key, value] : p.values) out << value << ',';
    out << num(p.median_final_macro) << ',';
    for (std::size_t i = 0; i < p.runs.size(); ++i) out << (i ? ";" : "") << p.runs[i].id;
    out << '\n';
  }
}

std::vector<ScoreRow> score_predictions(const fs::path& predictions, const GroupedDataset& gold) {
  std::ifstream in(predictions);
  if (!in) throw std::runtime_error("cannot open predictions " + predictions.string());
  std::map<std::string, const Problem*> by_id;
  for (const auto& d : gold.domains())
    for (const auto& p : gold.bucket(d)) by_id[p.id] = &p;

  std::map<std::string, std::string> texts;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto where = predictions.string() + ":" + std::to_string(line_no) + ": ";
    ordered_json j;
    try {
      j = ordered_json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error(where + e.what());
    }
    if (!j.is_object() || !j.contains("id") || !j.contains("text") || !j["id"].is_string() ||
        !j["text"].is_string())
      throw std::runtime_error(where + "expected {\"id\": string, \"text\": string}");
    const auto id = j["id"].get<std::string>();
    if (!by_id.count(id)) throw std::runtime_error(where + "unknown id '" + id + "'");
    if (!texts.emplace(id, j["text"].get<std::string>()).second)
      throw std::runtime_error(where + "duplicate id '" + id + "'");
  }

  std::vector<ScoreRow> rows;
  for (const auto& d : gold.domains()) {
    ScoreRow row;
    row.domain = d;
    double sum = 0.0;
    for (const auto& p : gold.bucket(d)) {
      ++row.n;
      if (auto it = texts.find(p.id); it != texts.end())
        sum += score(it->second, p.answer_key, AnswerSpace::of(p)).success;
    }
    row.success_mean = sum / row.n;
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_score_csv(std::ostream& out, std::span<const ScoreRow> rows) {
  out << "domain,n,success_mean\n";
  for (const auto& r : rows) out << r.domain << ',' << r.n << ',' << num(r.success_mean) << '\n';
}

}  // namespace rulereasoner
