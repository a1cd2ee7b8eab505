#include <benchmark/benchmark.h>

#include <vector>

#include "repalloc/landscape.hpp"
#include "repalloc/multi.hpp"
#include "repalloc/rng.hpp"
#include "repalloc/sim.hpp"
#include "repalloc/single_kl.hpp"
#include "repalloc/single_l2.hpp"

using namespace repalloc;

namespace {

Landscape empirical_10k() {
  Landscape src = Landscape::lognormal(0.0, 1.0);
  Rng rng(99);
  std::vector<double> prices(10000);
  for (double& p : prices) p = src.sample_one(rng);
  return Landscape::empirical(prices);
}

ContractSet forward_pair() { return {1.0, {{0.105, 13.0 / 70.0}, {0.385, 103.0 / 330.0}}}; }

ContractSet symmetric_eight() {
  return {1.0, std::vector<ContractSpec>(8, ContractSpec{0.115, 0.47})};
}

void BM_SampleLognormal(benchmark::State& state) {
  Landscape land = Landscape::lognormal(0.0, 1.0);
  Rng rng(1);
  for (auto _ : state) benchmark::DoNotOptimize(land.sample_one(rng));
}
BENCHMARK(BM_SampleLognormal);

void BM_SampleEmpirical(benchmark::State& state) {
  Landscape land = empirical_10k();
  Rng rng(2);
  for (auto _ : state) benchmark::DoNotOptimize(land.sample_one(rng));
}
BENCHMARK(BM_SampleEmpirical);

void BM_EmpiricalCdf(benchmark::State& state) {
  Landscape land = empirical_10k();
  double p = 0.0;
  for (auto _ : state) {
    p = p < 5.0 ? p + 1e-3 : 0.0;
    benchmark::DoNotOptimize(land.cdf(p));
  }
}
BENCHMARK(BM_EmpiricalCdf);

void BM_SolveL2Saturated(benchmark::State& state) {
  Landscape land = Landscape::lognormal(0.0, 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(solve_l2(land, 0.5, 1.0, 0.65));
}
BENCHMARK(BM_SolveL2Saturated);

void BM_SolveL2Linear(benchmark::State& state) {
  Landscape land = Landscape::lognormal(0.0, 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(solve_l2(land, 0.5, 1.0, 1.4));
}
BENCHMARK(BM_SolveL2Linear);

void BM_SolveKlUnsaturated(benchmark::State& state) {
  Landscape land = Landscape::lognormal(0.0, 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(solve_kl(land, 0.5, 1.0, 0.9));
}
BENCHMARK(BM_SolveKlUnsaturated);

void BM_SolveMulti(benchmark::State& state) {
  Landscape land = Landscape::uniform(0.0, 1.0);
  ContractSet set = state.range(0) == 2 ? forward_pair() : symmetric_eight();
  for (auto _ : state) benchmark::DoNotOptimize(solve_multi(land, set));
}
BENCHMARK(BM_SolveMulti)->Arg(2)->Arg(8);

void BM_Decentralize(benchmark::State& state) {
  Landscape land = Landscape::uniform(0.0, 1.0);
  MultiAllocation multi = solve_multi(land, symmetric_eight());
  for (auto _ : state) benchmark::DoNotOptimize(decentralize(multi.allocations, multi.supply));
}
BENCHMARK(BM_Decentralize);

void BM_RunAuctions(benchmark::State& state) {
  Landscape land = Landscape::uniform(0.0, 1.0);
  MultiAllocation multi = solve_multi(land, forward_pair());
  std::vector<BidStrategy> strategies = decentralize(multi.allocations, multi.supply);
  std::vector<SimStrategy> sim_strategies;
  for (std::size_t j = 0; j < strategies.size(); ++j)
    sim_strategies.push_back({"c" + std::to_string(j), strategies[j], 0.0, 0.0});
  const std::size_t n_auctions = 8192;
  SimConfig config{land, sim_strategies, 1, n_auctions, 11};
  for (auto _ : state) benchmark::DoNotOptimize(run_auctions(config));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n_auctions));
}
BENCHMARK(BM_RunAuctions);

}  // namespace

BENCHMARK_MAIN();
