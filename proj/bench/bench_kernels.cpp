// Serial reference vs OpenMP for the two hot loops: per-replica fits in the
// sweeps and per-batch derivative sums in the Monte Carlo rate estimator.

#include <benchmark/benchmark.h>
#include <omp.h>

#include "msp/lti_core.hpp"
#include "msp/parallel.hpp"
#include "msp/predictors.hpp"
#include "msp/random.hpp"
#include "msp/theory.hpp"

namespace {

using namespace msp;

lti::LtiSystem wellspec(double a) {
  Matrix A(2, 2), B(2, 1);
  A << a, 1.0, 0.0, 0.75;
  B << 0.0, 1.0;
  return lti::LtiSystem::fully_observed(A, B, Matrix::Identity(2, 2));
}

double replica_loss(const lti::LtiSystem& sys, std::size_t r) {
  const auto data = predictors::Dataset::from(lti::simulate(sys, 1000, derive_seed(42, {r})));
  predictors::AdamOptions opts;
  opts.max_iters = 500;
  return predictors::fit_intermediate(data, 5, opts).final_loss;
}

void BM_ReplicaFitsSerial(benchmark::State& state) {
  const auto sys = wellspec(0.75);
  for (auto _ : state) {
    auto out = serial_map<double>(std::size_t(state.range(0)), [&](std::size_t r) { return replica_loss(sys, r); });
    benchmark::DoNotOptimize(out);
  }
}

void BM_ReplicaFitsParallel(benchmark::State& state) {
  const auto sys = wellspec(0.75);
  for (auto _ : state) {
    auto out = parallel_map<double>(std::size_t(state.range(0)), [&](std::size_t r) { return replica_loss(sys, r); });
    benchmark::DoNotOptimize(out);
  }
}

void monte_carlo(benchmark::State& state, int threads) {
  const auto sys = wellspec(0.75);
  theory::MonteCarloConfig mc;
  mc.T = state.range(0);
  mc.max_lag = 50;
  const int saved = omp_get_max_threads();
  omp_set_num_threads(threads > 0 ? threads : saved);
  for (auto _ : state) benchmark::DoNotOptimize(theory::intermediate_rate(sys, 5, mc).value);
  omp_set_num_threads(saved);
}

void BM_MonteCarloSerial(benchmark::State& state) { monte_carlo(state, 1); }
void BM_MonteCarloParallel(benchmark::State& state) { monte_carlo(state, 0); }

BENCHMARK(BM_ReplicaFitsSerial)->Arg(16)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ReplicaFitsParallel)->Arg(16)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_MonteCarloSerial)->Arg(100000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_MonteCarloParallel)->Arg(100000)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
