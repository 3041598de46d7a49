#include <benchmark/benchmark.h>

#include "rulereasoner/dataset.hpp"
#include "rulereasoner/grpo.hpp"
#include "rulereasoner/policy.hpp"
#include "rulereasoner/sampler.hpp"
#include "rulereasoner/simenv.hpp"
#include "rulereasoner/verifier.hpp"

using namespace rulereasoner;

namespace {

SynthSpec bench_spec(int n_domains) {
  SynthSpec spec;
  spec.seed = 7;
  for (int d = 0; d < n_domains; ++d) {
    DomainSynthSpec s;
    s.id = "d" + std::to_string(d);
    s.depth_min = 1 + d % 5;
    s.depth_max = s.depth_min + 2;
    s.n_qtypes = 2;
    s.n_options = d % 2 ? 4 : 0;
    s.distractor_rules = 3;
    s.problems = 40;
    spec.domains.push_back(s);
  }
  return spec;
}

void BM_ComputeWeights(benchmark::State& state) {
  const auto n = static_cast<int>(state.range(0));
  std::vector<std::string> names;
  for (int i = 0; i < n; ++i) names.push_back("d" + std::to_string(i));
  auto states = initial_states(names);
  for (int i = 0; i < n; ++i) states[i].ewma = i / static_cast<double>(n);
  SamplerConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(compute_weights(states, cfg));
}
BENCHMARK(BM_ComputeWeights)->Arg(4)->Arg(8)->Arg(64);

void BM_Allocate(benchmark::State& state) {
  const auto n = static_cast<int>(state.range(0));
  std::vector<std::string> names;
  for (int i = 0; i < n; ++i) names.push_back("d" + std::to_string(i));
  auto states = initial_states(names);
  for (int i = 0; i < n; ++i) states[i].ewma = (i * 37 % 11) / 11.0;
  const auto w = compute_weights(states, SamplerConfig{});
  for (auto _ : state) benchmark::DoNotOptimize(allocate(w, 256));
}
BENCHMARK(BM_Allocate)->Arg(4)->Arg(64);

void BM_PassAtK(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(pass_at_k(n, n / 3, 10));
}
BENCHMARK(BM_PassAtK)->Arg(16)->Arg(1024);

void BM_ForwardChain(benchmark::State& state) {
  DomainSynthSpec s;
  s.id = "fc";
  s.depth_min = s.depth_max = static_cast<int>(state.range(0));
  s.distractor_rules = 6;
  s.problems = 1;
  const auto data = synth_generate(SynthSpec{{s}, 3});
  const auto& p = data.bucket("fc").front();
  const auto q = query_statement(p);
  for (auto _ : state) benchmark::DoNotOptimize(forward_chain(p.rules, p.facts, q));
}
BENCHMARK(BM_ForwardChain)->Arg(1)->Arg(4)->Arg(7);

void BM_TrainingStep(benchmark::State& state) {
  EnvConfig env;
  env.synth = bench_spec(4);
  env.sampler.batch_size = 16;
  env.grpo.group_size = 16;
  env.total_steps = 1;
  env.validation_size = 8;
  env.slip_rate = 0.01;
  for (auto _ : state) benchmark::DoNotOptimize(run_training(env).metrics.back().objective);
}
BENCHMARK(BM_TrainingStep)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
