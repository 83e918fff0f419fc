#include <benchmark/benchmark.h>

#include "shine/dataio.hpp"
#include "shine/hypergrad.hpp"
#include "shine/problems.hpp"
#include "shine/qn.hpp"

namespace {

struct BackwardFixture {
  shine::BilevelProblem problem;
  shine::Vector theta;
  shine::SolveResult forward;
};

BackwardFixture make_fixture(int n, int d) {
  BackwardFixture fx{shine::make_l2_logreg(shine::split_dataset(
                         shine::synth_logreg_data(n, d, 5, 0.1), 0.9, 0.05, 0.05, 5)),
                     {}, {}};
  fx.theta = fx.problem.theta0;
  shine::QNConfig cfg;
  cfg.tol = 1e-10;
  fx.forward = shine::lbfgs_opa_solve(fx.problem, fx.theta,
                                      shine::zeros(static_cast<std::size_t>(fx.problem.dim)),
                                      cfg, shine::WolfeParams{});
  return fx;
}

void BM_BackwardExact(benchmark::State& state) {
  const auto fx = make_fixture(static_cast<int>(state.range(0)), static_cast<int>(state.range(1)));
  shine::HypergradMethod method;
  method.kind = shine::HypergradKind::exact;
  for (auto _ : state) {
    auto res = shine::exact_hypergradient(fx.problem, fx.theta, fx.forward.z_star, method);
    benchmark::DoNotOptimize(res);
  }
}

void BM_BackwardShine(benchmark::State& state) {
  const auto fx = make_fixture(static_cast<int>(state.range(0)), static_cast<int>(state.range(1)));
  shine::HypergradMethod method;
  method.kind = shine::HypergradKind::shine;
  for (auto _ : state) {
    auto res = shine::shine_hypergradient(fx.problem, fx.theta, fx.forward, method);
    benchmark::DoNotOptimize(res);
  }
}

void BM_BackwardJacobianFree(benchmark::State& state) {
  const auto fx = make_fixture(static_cast<int>(state.range(0)), static_cast<int>(state.range(1)));
  for (auto _ : state) {
    auto res = shine::jacobian_free_hypergradient(fx.problem, fx.theta, fx.forward.z_star);
    benchmark::DoNotOptimize(res);
  }
}

}  // namespace

BENCHMARK(BM_BackwardExact)->Args({2000, 50});
BENCHMARK(BM_BackwardShine)->Args({2000, 50});
BENCHMARK(BM_BackwardJacobianFree)->Args({2000, 50});
