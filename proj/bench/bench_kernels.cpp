#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "dtr/harness.hpp"
#include "dtr/kernels.hpp"

namespace {

struct Residuals {
  std::vector<double> x1, x2, offset, u, w;
};

Residuals make_residuals(std::size_t pairs) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> g(-1, 1);
  Residuals r;
  r.x1.resize(pairs);
  r.x2.resize(pairs);
  for (std::size_t i = 0; i < pairs; ++i) {
    r.x1[i] = g(rng);
    r.x2[i] = g(rng);
  }
  r.offset = {0.3, 1.7};
  r.u = {1.0, 5.0};
  r.w = {1.4, 7.0};
  return r;
}

void residual_serial(benchmark::State& state) {
  const auto r = make_residuals(static_cast<std::size_t>(state.range(0)));
  const dtr::kernels::ResidualTerm term{r.x1, r.x2, r.offset, r.u, r.w, 1};
  for (auto _ : state) benchmark::DoNotOptimize(dtr::kernels::residual_max_mean_serial(term));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void residual_blocked(benchmark::State& state) {
  const auto r = make_residuals(static_cast<std::size_t>(state.range(0)));
  const dtr::kernels::ResidualTerm term{r.x1, r.x2, r.offset, r.u, r.w, 1};
  for (auto _ : state) benchmark::DoNotOptimize(dtr::kernels::residual_max_mean(term));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

dtr::ExperimentConfig simulation_config() {
  dtr::ExperimentConfig c;
  c.instance = dtr::ProblemInstance::synthetic_1d();
  c.has_instance = true;
  c.T = 2000;
  c.paths = 16;
  c.record_every = 2000;
  dtr::PolicyConfig p;
  p.name = "dtr";
  c.policies = {p};
  return c;
}

void simulation(benchmark::State& state) {
  const auto c = simulation_config();
  const auto mode = state.range(0) == 0 ? dtr::Execution::serial : dtr::Execution::parallel;
  for (auto _ : state) benchmark::DoNotOptimize(dtr::run_simulation(c, mode).curves.size());
  state.SetLabel(state.range(0) == 0 ? "serial" : "parallel");
}

}  // namespace

BENCHMARK(residual_serial)->RangeMultiplier(8)->Range(1 << 10, 1 << 22);
BENCHMARK(residual_blocked)->RangeMultiplier(8)->Range(1 << 10, 1 << 22);
BENCHMARK(simulation)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
