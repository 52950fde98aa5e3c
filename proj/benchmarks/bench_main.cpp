#include <benchmark/benchmark.h>

#include <string>

#include "branchmoments/estimator.hpp"
#include "branchmoments/moments.hpp"
#include "branchmoments/simulator.hpp"
#include "branchmoments/validation.hpp"

using namespace branchmoments;

namespace {

const char* kModels[] = {"a", "c", "f"};

ReadDataset dataset(const std::string& name, std::size_t n) {
  SimConfig sc;
  sc.n_lineages = n;
  sc.obs_times = default_obs_times();
  sc.sample_sizes.assign(canonical_model(name).num_matures(), 1000);
  sc.read_filter_threshold = 0;
  sc.seed = 1;
  return simulate_dataset(canonical_model(name), canonical_truth(name), sc);
}

void BM_BuildMomentSet(benchmark::State& state) {
  const std::string name = kModels[state.range(0)];
  const auto t = canonical_model(name);
  const auto p = canonical_truth(name);
  for (auto _ : state) benchmark::DoNotOptimize(build_moment_set(t, p));
  state.SetLabel("model " + name);
}
BENCHMARK(BM_BuildMomentSet)->DenseRange(0, 2);

void BM_Loss(benchmark::State& state) {
  const std::string name = kModels[state.range(0)];
  const auto t = canonical_model(name);
  const auto p = canonical_truth(name);
  const CorrelationLoss loss(t, correlation_data(dataset(name, 2000)), {});
  for (auto _ : state) benchmark::DoNotOptimize(loss(p));
  state.SetLabel("model " + name);
}
BENCHMARK(BM_Loss)->DenseRange(0, 2);

void BM_EmpiricalCorrelations(benchmark::State& state) {
  const auto data = dataset("c", static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(empirical_correlations(data));
}
BENCHMARK(BM_EmpiricalCorrelations)->Arg(2000)->Arg(20000);

void BM_SimulateLatent(benchmark::State& state) {
  const auto t = canonical_model("a");
  const auto p = canonical_truth("a");
  const std::vector<double> times = default_obs_times();
  for (auto _ : state) {
    benchmark::DoNotOptimize(simulate_latent(t, p, static_cast<std::size_t>(state.range(0)), times, 1));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_SimulateLatent)->Arg(1000)->Unit(benchmark::kMillisecond);

void BM_MultivariateHypergeometric(benchmark::State& state) {
  std::vector<std::int64_t> population(static_cast<std::size_t>(state.range(0)));
  Rng fill(3);
  for (auto& x : population) x = static_cast<std::int64_t>(fill.below(50));
  Rng rng(4);
  for (auto _ : state) benchmark::DoNotOptimize(mvhypergeom_sample(population, 1000, rng));
}
BENCHMARK(BM_MultivariateHypergeometric)->Arg(2000)->Arg(20000);

}  // namespace

BENCHMARK_MAIN();
