#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "rulereasoner/config.hpp"
#include "rulereasoner/dataset.hpp"
#include "rulereasoner/experiment.hpp"
#include "rulereasoner/verifier.hpp"

namespace fs = std::filesystem;
using namespace rulereasoner;

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 1;
constexpr int kRuntimeError = 2;

fs::path output_root(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("RULEREASONER_OUT"); env && *env) return env;
  return "runs";
}

struct Common {
  std::string config;
  std::vector<std::string> overrides;
  std::string strategy;
  bool two_step = false;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "TOML config file")->required()->check(CLI::ExistingFile);
  cmd->add_option("--set", c.overrides, "Override a field, e.g. --set sampler.alpha=0.3");
  cmd->add_option("--out", c.out, "Output root (default $RULEREASONER_OUT or ./runs)");
}

ConfigTree load_tree(const Common& c) {
  auto tree = ConfigTree::load(c.config);
  for (const auto& o : c.overrides) tree.apply_override(o);
  if (!c.strategy.empty()) tree.set("sampler.strategy", c.strategy);
  if (c.two_step) tree.set("run.two_step_clip_test", "true");
  return tree;
}

std::string fmt(double x) {
  if (std::isinf(x)) return "inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", x);
  return buf;
}

int cmd_run(const Common& c) {
  const auto tree = load_tree(c);
  const auto rc = run_config_from_tree(tree);
  const auto root = output_root(c.out);
  for (const auto seed : rc.seeds) {
    const auto r = execute_run(tree, seed, root);
    std::cout << "seed " << seed << "  final_macro " << fmt(r.final_macro) << "  "
              << r.dir.string() << (r.reused ? "  (reused)" : "") << '\n';
  }
  return kOk;
}

int cmd_compare(const Common& c, const std::string& strategies) {
  auto tree = load_tree(c);
  if (!strategies.empty()) tree.set("compare.strategies", strategies);
  const auto rc = run_config_from_tree(tree);
  std::vector<Strategy> list = rc.strategies;
  if (list.empty())
    list = {Strategy::dads, Strategy::uniform, Strategy::static_proportional,
            Strategy::data_balance, Strategy::easy_to_hard};
  const auto table = run_comparison(rc.env, list, rc.seeds, rc.target);

  const auto dir = output_root(c.out) / ("compare-" + run_id(manifest_json(tree, rc.env.seed)));
  fs::create_directories(dir);
  std::ofstream csv(dir / "comparison.csv");
  write_comparison_csv(csv, table);
  write_comparison_csv(std::cout, table);
  std::cout << "wrote " << (dir / "comparison.csv").string() << '\n';
  return kOk;
}

int cmd_sweep(const Common& c, const std::vector<std::string>& axes) {
  const auto tree = load_tree(c);
  Grid grid;
  for (const auto& a : axes) grid.push_back(parse_grid_axis(a));
  const auto root = output_root(c.out);
  const auto points = run_sweep(tree, grid, root);
  fs::create_directories(root);
  std::ofstream csv(root / "sweep.csv");
  write_sweep_csv(csv, grid, points);
  write_sweep_csv(std::cout, grid, points);
  return kOk;
}

int cmd_gen_data(const std::string& spec_path, const std::string& out, std::uint64_t stream) {
  const auto spec = synth_spec_from_tree(ConfigTree::load(spec_path));
  const auto data = synth_generate(spec, stream);
  save_dataset(out, data);
  std::cout << "wrote " << data.size() << " problems in " << data.domains().size()
            << " domains to " << out << '\n';
  return kOk;
}

int cmd_score(const std::string& pred, const std::string& gold) {
  const auto rows = score_predictions(pred, load_dataset(gold));
  write_score_csv(std::cout, rows);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Domain-aware RL training for rule-based reasoning, tabular simulation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(version_string()));

  Common run_opts, cmp_opts, sweep_opts;
  auto* run = app.add_subcommand("run", "Train one run per configured seed");
  add_common(run, run_opts);
  run->add_option("--strategy", run_opts.strategy, "dads|uniform|static|balance|e2h");
  run->add_flag("--two-step-clip-test", run_opts.two_step,
                "Take a second update on each batch to exercise the clip");

  std::string strategies;
  auto* cmp = app.add_subcommand("compare", "Compare sampling strategies over seeds");
  add_common(cmp, cmp_opts);
  cmp->add_option("--strategies", strategies, "Comma list, default all five");

  std::vector<std::string> axes;
  auto* sweep = app.add_subcommand("sweep", "Grid over sampler alpha, tau, floor_epsilon");
  add_common(sweep, sweep_opts);
  sweep->add_option("--grid", axes, "Axis like alpha=0.1,0.5,1.0 (repeatable)")->required();

  std::string spec_path, data_out;
  std::uint64_t stream = 0;
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset as JSON lines");
  gen->add_option("--spec", spec_path, "TOML with data.seed and [domain.<id>] sections")
      ->required()
      ->check(CLI::ExistingFile);
  gen->add_option("--out", data_out, "Output .jsonl")->required();
  gen->add_option("--stream", stream, "Instance stream (0 = training)");

  std::string pred, gold;
  auto* sc = app.add_subcommand("score", "Exact-match score predictions against gold");
  sc->add_option("--pred", pred, "JSON lines {id, text}")->required()->check(CLI::ExistingFile);
  sc->add_option("--gold", gold, "Gold dataset .jsonl")->required()->check(CLI::ExistingFile);

  int n = 0, c = 0, k = 0;
  auto* pk = app.add_subcommand("pass-at-k", "Unbiased pass@k estimate");
  pk->add_option("--n", n, "Samples")->required();
  pk->add_option("--c", c, "Correct samples")->required();
  pk->add_option("--k", k, "k")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*run) return cmd_run(run_opts);
    if (*cmp) return cmd_compare(cmp_opts, strategies);
    if (*sweep) return cmd_sweep(sweep_opts, axes);
    if (*gen) return cmd_gen_data(spec_path, data_out, stream);
    if (*sc) return cmd_score(pred, gold);
    if (*pk) {
      std::printf("%.6f\n", pass_at_k(n, c, k));
      return kOk;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
  return kOk;
}
