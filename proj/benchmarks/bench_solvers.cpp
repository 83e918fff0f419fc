#include <benchmark/benchmark.h>

#include <cmath>
#include <random>

#include "shine/dataio.hpp"
#include "shine/problems.hpp"
#include "shine/qn.hpp"

namespace {

shine::BilevelProblem logreg_problem(int n, int d) {
  const auto ds = shine::synth_logreg_data(n, d, 3, 0.1);
  return shine::make_l2_logreg(shine::split_dataset(ds, 0.9, 0.05, 0.05, 3));
}

void BM_LbfgsLogreg(benchmark::State& state) {
  const auto problem = logreg_problem(static_cast<int>(state.range(0)),
                                      static_cast<int>(state.range(1)));
  shine::QNConfig cfg;
  cfg.tol = 1e-8;
  shine::WolfeParams wolfe;
  const shine::Vector theta = problem.theta0;
  for (auto _ : state) {
    auto res = shine::lbfgs_opa_solve(problem, theta,
                                      shine::zeros(static_cast<std::size_t>(problem.dim)), cfg,
                                      wolfe);
    benchmark::DoNotOptimize(res);
  }
}

void BM_BroydenLinear(benchmark::State& state) {
  const auto d = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(11);
  std::normal_distribution<double> gauss(0.0, 0.3 / std::sqrt(static_cast<double>(d)));
  shine::DenseMatrix A = shine::DenseMatrix::identity(d);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) A(i, j) += gauss(rng);
  const shine::Vector b(d, 1.0);
  auto g = [&](const shine::Vector& z) { return shine::sub(A.matvec(z), b); };
  shine::QNConfig cfg;
  cfg.tol = 1e-10;
  for (auto _ : state) {
    auto res = shine::broyden_solve(g, shine::zeros(d), cfg);
    benchmark::DoNotOptimize(res);
  }
}

}  // namespace

BENCHMARK(BM_LbfgsLogreg)->Args({500, 20})->Args({2000, 20});
BENCHMARK(BM_BroydenLinear)->Arg(20)->Arg(100);
