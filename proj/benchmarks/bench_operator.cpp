#include <benchmark/benchmark.h>

#include <random>

#include "shine/numkit.hpp"

namespace {

shine::LowRankInverseOperator filled_operator(std::size_t dim, std::size_t n_corrections) {
  std::mt19937_64 rng(42);
  std::normal_distribution<double> gauss(0.0, 1.0);
  shine::LowRankInverseOperator op(dim);
  for (std::size_t k = 0; k < n_corrections; ++k) {
    shine::Vector s(dim), y(dim);
    for (double& v : s) v = gauss(rng);
    for (double& v : y) v = gauss(rng);
    op.push_sherman_morrison(s, y);
  }
  return op;
}

void BM_OperatorApply(benchmark::State& state) {
  const auto dim = static_cast<std::size_t>(state.range(0));
  const auto k = static_cast<std::size_t>(state.range(1));
  const auto op = filled_operator(dim, k);
  shine::Vector x(dim, 1.0);
  for (auto _ : state) {
    auto out = op.apply(x);
    benchmark::DoNotOptimize(out);
  }
}

void BM_ShermanMorrisonPush(benchmark::State& state) {
  const auto dim = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(7);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (auto _ : state) {
    state.PauseTiming();
    auto op = filled_operator(dim, 10);
    shine::Vector s(dim), y(dim);
    for (double& v : s) v = gauss(rng);
    for (double& v : y) v = gauss(rng);
    state.ResumeTiming();
    op.push_sherman_morrison(s, y);
    benchmark::DoNotOptimize(op);
  }
}

}  // namespace

BENCHMARK(BM_OperatorApply)->Args({100, 10})->Args({100, 60})->Args({1000, 30});
BENCHMARK(BM_ShermanMorrisonPush)->Arg(100)->Arg(1000);

BENCHMARK_MAIN();
