#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "shine/dataio.hpp"
#include "shine/outer.hpp"
#include "shine/problems.hpp"

using namespace shine;

namespace {

OuterConfig exact_outer(int iters) {
  OuterConfig cfg;
  cfg.max_outer_iters = iters;
  cfg.method.kind = HypergradKind::exact;
  cfg.method.exact_tol = 1e-10;
  cfg.method.exact_max_iter = 200;
  cfg.tol_decrease = 0.9;
  cfg.inner.max_iter = 500;
  return cfg;
}

}  // namespace

TEST_CASE("hoag finds the quadratic oracle optimum") {
  // z*(theta) = a/(1+theta) with a=(2,0); best match to target (1,0) is theta*=1
  const auto p = make_quadratic_oracle({2.0, 0.0}, 0.0, {1.0, 0.0});
  OuterConfig cfg = exact_outer(50);
  cfg.initial_theta = {0.0};
  cfg.initial_step = 1.0;
  const RunTrace trace = hoag_run(p, cfg);
  REQUIRE(trace.rows.size() == 50);
  const double theta_final = trace.rows.back().theta[0];
  CHECK(std::abs(theta_final - 1.0) <= 1e-2);
}

TEST_CASE("the tolerance column follows tol0 * rho^k exactly") {
  const auto p = make_quadratic_oracle({1.0}, 0.5);
  OuterConfig cfg = exact_outer(8);
  cfg.tol0 = 0.1;
  cfg.tol_decrease = 0.78;
  const RunTrace trace = hoag_run(p, cfg);
  for (std::size_t k = 0; k < trace.rows.size(); ++k)
    CHECK(trace.rows[k].inner_tol == 0.1 * std::pow(0.78, static_cast<double>(k)));
}

TEST_CASE("backtracking keeps accepted validation losses non-increasing") {
  const auto split = split_dataset(synth_logreg_data(300, 10, 7, 0.3), 0.9, 0.05, 0.05, 7);
  const auto p = make_l2_logreg(split);
  OuterConfig cfg = exact_outer(15);
  cfg.step_rule = StepRule::backtracking;
  const RunTrace trace = hoag_run(p, cfg);
  double prev = std::numeric_limits<double>::infinity();
  for (const TraceRow& row : trace.rows) {
    if (row.status != "ok") continue;
    CHECK(row.val_loss <= prev * (1.0 + 1e-12));
    prev = row.val_loss;
  }
}

TEST_CASE("warm restarts do not cost more inner iterations than cold starts") {
  const auto split = split_dataset(synth_logreg_data(400, 12, 9, 0.3), 0.9, 0.05, 0.05, 9);
  const auto p = make_l2_logreg(split);
  OuterConfig warm = exact_outer(30);
  warm.warm_restart = true;
  OuterConfig cold = warm;
  cold.warm_restart = false;

  auto total_inner = [](const RunTrace& t) {
    long total = 0;
    for (const TraceRow& row : t.rows) total += row.inner_iters;
    return total;
  };
  CHECK(total_inner(hoag_run(p, warm)) <= total_inner(hoag_run(p, cold)));
}

TEST_CASE("trace columns are consistent") {
  const auto p = make_quadratic_oracle({1.5, -0.5}, 0.3);
  OuterConfig cfg = exact_outer(10);
  const RunTrace trace = hoag_run(p, cfg);
  double prev_seconds = 0.0;
  for (const TraceRow& row : trace.rows) {
    CHECK(row.cumulative_seconds >= prev_seconds);
    prev_seconds = row.cumulative_seconds;
  }
}

TEST_CASE("jacobian-free without refine reports zero backward iterations") {
  const auto p = make_quadratic_oracle({1.0, 1.0}, 0.5);
  OuterConfig cfg = exact_outer(5);
  cfg.method.kind = HypergradKind::jacobian_free;
  cfg.method.refine_steps = 0;
  const RunTrace trace = hoag_run(p, cfg);
  for (const TraceRow& row : trace.rows) CHECK(row.backward_iters == 0);
}

TEST_CASE("hoag theta sequences are deterministic") {
  const auto split = split_dataset(synth_logreg_data(200, 8, 21, 0.3), 0.9, 0.05, 0.05, 21);
  const auto p = make_l2_logreg(split);
  OuterConfig cfg = exact_outer(10);
  const RunTrace a = hoag_run(p, cfg);
  const RunTrace b = hoag_run(p, cfg);
  REQUIRE(a.rows.size() == b.rows.size());
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    CHECK(a.rows[i].theta == b.rows[i].theta);
    CHECK(a.rows[i].val_loss == b.rows[i].val_loss);
    CHECK(a.rows[i].inner_iters == b.rows[i].inner_iters);
  }
}

TEST_CASE("inner failures are recorded and skipped, never thrown") {
  // residual turns non-finite as soon as theta leaves the start value
  BilevelProblem p = make_quadratic_oracle({1.0, 0.0}, 0.5);
  auto base_residual = p.inner_residual;
  p.inner_residual = [base_residual](const Vector& theta, const Vector& z) {
    if (theta.at(0) != 0.5) return Vector{std::numeric_limits<double>::quiet_NaN(),
                                          std::numeric_limits<double>::quiet_NaN()};
    return base_residual(theta, z);
  };

  OuterConfig cfg = exact_outer(6);
  cfg.initial_theta = {2.0};  // poisoned from the start
  const RunTrace trace = hoag_run(p, cfg);
  REQUIRE(trace.rows.size() == 6);
  for (const TraceRow& row : trace.rows) CHECK(row.status == "inner_failed");
}

TEST_CASE("random search with one sample reports that sample") {
  const auto p = make_quadratic_oracle({1.0, 0.5}, 1.0);
  const RunTrace trace = random_search_run(p, 1, 0.1, 10.0, 3);
  REQUIRE(trace.rows.size() == 1);
  CHECK(trace.best_theta == trace.rows[0].theta);
  CHECK(trace.best_val_loss == trace.rows[0].val_loss);
}

TEST_CASE("random search is seed-deterministic") {
  const auto p = make_quadratic_oracle({1.0, 0.5}, 1.0);
  const RunTrace a = random_search_run(p, 20, 0.1, 10.0, 11);
  const RunTrace b = random_search_run(p, 20, 0.1, 10.0, 11);
  REQUIRE(a.rows.size() == b.rows.size());
  for (std::size_t i = 0; i < a.rows.size(); ++i) CHECK(a.rows[i].theta == b.rows[i].theta);
}

TEST_CASE("random search localizes the quadratic oracle optimum") {
  const auto p = make_quadratic_oracle({2.0, 0.0}, 0.0, {1.0, 0.0});
  const RunTrace trace = random_search_run(p, 200, 0.1, 10.0, 5);
  CHECK(std::abs(trace.best_theta[0] - 1.0) <= 0.15);
}

TEST_CASE("nonlinear least squares runs end to end through the outer loop") {
  const auto split = split_dataset(synth_logreg_data(300, 8, 23, 0.3), 0.9, 0.05, 0.05, 23);
  const auto p = make_nls(split);
  for (HypergradKind kind : {HypergradKind::exact, HypergradKind::shine}) {
    OuterConfig cfg = exact_outer(12);
    cfg.method.kind = kind;
    const RunTrace trace = hoag_run(p, cfg);
    REQUIRE(trace.rows.size() == 12);
    double prev = std::numeric_limits<double>::infinity();
    double prev_tol = 0.0;
    for (const TraceRow& row : trace.rows) {
      if (row.status != "ok") continue;
      CHECK(std::isfinite(row.val_loss));
      // acceptance compares losses at the previous iteration's inner
      // tolerance; the re-solve for the next row may drift within it
      CHECK(row.val_loss <= prev + prev_tol);
      prev = row.val_loss;
      prev_tol = row.inner_tol;
    }
  }
}

TEST_CASE("random search reports the best sample's test loss") {
  const auto p = make_quadratic_oracle({2.0, 0.0}, 0.0, {1.0, 0.0});
  const RunTrace trace = random_search_run(p, 40, 0.1, 10.0, 13);
  double best_val = std::numeric_limits<double>::infinity();
  double expected_test = std::numeric_limits<double>::quiet_NaN();
  for (const TraceRow& row : trace.rows) {
    if (row.val_loss < best_val) {
      best_val = row.val_loss;
      expected_test = row.test_loss;
    }
  }
  CHECK(trace.best_val_loss == best_val);
  CHECK(trace.best_test_loss == expected_test);
}

TEST_CASE("truncated backward config clamps the adjoint iteration budget") {
  HypergradMethod base;
  base.kind = HypergradKind::exact;
  base.exact_max_iter = 100;
  const HypergradMethod limited = truncated_backward_config(base, 5);
  CHECK(limited.exact_max_iter == 5);

  HypergradMethod shine_m;
  shine_m.kind = HypergradKind::shine;
  CHECK_THROWS_AS(truncated_backward_config(shine_m, 5), std::invalid_argument);
  CHECK_THROWS_AS(truncated_backward_config(base, 0), std::invalid_argument);
}

TEST_CASE("limited backward runs within the budget every iteration") {
  const auto split = split_dataset(synth_logreg_data(200, 12, 13, 0.3), 0.9, 0.05, 0.05, 13);
  const auto p = make_l2_logreg(split);
  OuterConfig cfg = exact_outer(8);
  cfg.method = truncated_backward_config(cfg.method, 5);
  const RunTrace trace = hoag_run(p, cfg);
  for (const TraceRow& row : trace.rows) CHECK(row.backward_iters <= 5);
}

TEST_CASE("truncated backward leaves a larger final adjoint residual") {
  // geometrically scaled feature columns spread the Hessian spectrum, so the
  // adjoint CG needs more than the truncated budget
  Dataset ds = synth_logreg_data(400, 15, 17, 0.3);
  for (SparseRow& row : ds.rows)
    for (std::size_t k = 0; k < row.values.size(); ++k)
      row.values[k] *= std::exp(4.0 * row.indices[k] / 15.0);
  auto p = make_l2_logreg(split_dataset(ds, 0.9, 0.05, 0.05, 17));
  p.theta0 = {-6.0};

  OuterConfig full = exact_outer(10);
  full.tol0 = 0.01;
  OuterConfig limited = full;
  limited.method = truncated_backward_config(full.method, 3);

  const RunTrace t_full = hoag_run(p, full);
  const RunTrace t_limited = hoag_run(p, limited);
  CHECK(t_limited.rows.back().backward_residual > t_full.rows.back().backward_residual);
}
