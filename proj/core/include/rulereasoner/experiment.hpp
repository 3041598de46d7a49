#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rulereasoner/config.hpp"
#include "rulereasoner/simenv.hpp"

namespace rulereasoner {

std::string_view version_string();

// Metrics CSV. One row per (step, domain) plus one "__global__" row per step
// carrying the objective, mean training success and validation macro pass@1.
// Empty cells mean "not measured this step".
inline constexpr std::string_view kMetricsHeader =
    "step,domain,mean_success,ewma,weight,count,val_pass1,objective,train_success";
inline constexpr std::string_view kGlobalRow = "__global__";

void write_metrics_header(std::ostream& out);
void write_metrics_rows(std::ostream& out, const StepMetrics& m);

// Manifest: the resolved config leaves, the seed and the code version.
std::string manifest_json(const ConfigTree& tree, std::uint64_t seed);
// 16 hex digits of FNV-1a over the manifest text.
std::string run_id(const std::string& manifest);

struct RunResult {
  std::filesystem::path dir;
  std::string id;
  double final_macro = 0.0;
  bool reused = false;  // an identical finished run was already on disk
};

// Trains one seed under <out_root>/<run_id>/ and writes metrics.csv,
// manifest.json, sampler.ckpt and policy.ckpt (checkpoints every
// save_interval steps and at the end). A finished run with the same id is
// not repeated.
RunResult execute_run(const ConfigTree& tree, std::uint64_t seed,
                      const std::filesystem::path& out_root);

// strategy,median_steps,median_final_macro,median_ood_macro,<domain>... with
// steps written as "inf" when the target was never reached.
void write_comparison_csv(std::ostream& out, const ComparisonTable& table);

using Grid = std::vector<std::pair<std::string, std::vector<std::string>>>;

// Parses "alpha=0.1,0.5,1.0". Only sampler alpha, tau and floor_epsilon may
// be swept.
std::pair<std::string, std::vector<std::string>> parse_grid_axis(std::string_view text);

struct SweepPoint {
  std::vector<std::pair<std::string, std::string>> values;
  std::vector<RunResult> runs;  // one per seed
  double median_final_macro = 0.0;
};

// Cartesian product of the axes, every point run for every configured seed.
std::vector<SweepPoint> run_sweep(const ConfigTree& tree, const Grid& grid,
                                  const std::filesystem::path& out_root);
void write_sweep_csv(std::ostream& out, const Grid& grid, std::span<const SweepPoint> points);

struct ScoreRow {
  std::string domain;
  int n = 0;
  double success_mean = 0.0;
};

// Predictions are JSON lines {"id", "text"}; ids must exist in the gold set.
// Gold problems without a prediction score as failures. Rows follow the gold
// domain order.
std::vector<ScoreRow> score_predictions(const std::filesystem::path& predictions,
                                        const GroupedDataset& gold);
void write_score_csv(std::ostream& out, std::span<const ScoreRow> rows);

}  // namespace rulereasoner
