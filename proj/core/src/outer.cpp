#include "shine/outer.hpp"

#include <chrono>
#include <cmath>
#include <random>

namespace shine {

namespace {

using Clock = std::chrono::steady_clock;

double nan_safe(const std::function<double(const Vector&, const Vector&)>& f,
                const Vector& theta, const Vector& z) {
  return f ? f(theta, z) : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace

RunTrace hoag_run(const BilevelProblem& problem, const OuterConfig& cfg) {
  if (!(cfg.tol_decrease > 0.0 && cfg.tol_decrease <= 1.0))
    throw std::invalid_argument("tol_decrease must lie in (0, 1]");
  if (!(cfg.initial_step > 0.0)) throw std::invalid_argument("initial_step must be positive");

  RunTrace trace;
  trace.command = "hoag";
  trace.problem = problem.name;

  Vector theta = cfg.initial_theta.empty() ? problem.theta0 : cfg.initial_theta;
  Vector z = zeros(static_cast<std::size_t>(problem.dim));
  double gamma = cfg.initial_step;
  Vector warm_left;
  bool have_warm_left = false;
  const std::size_t op_cap = cfg.inner.memory == QNConfig::kUnboundedMemory
                                 ? LowRankInverseOperator::kUnbounded
                                 : 2 * cfg.inner.memory;
  // Warm restart carries the inverse operator across outer iterations along
  // with z; the solver keeps refreshing it through its own updates.
  LowRankInverseOperator warm_op(z.size(), op_cap);

  const auto t0 = Clock::now();
  for (int k = 0; k < cfg.max_outer_iters; ++k) {
    const double eps_k = cfg.tol0 * std::pow(cfg.tol_decrease, k);
    QNConfig inner_cfg = cfg.inner;
    inner_cfg.tol = eps_k;
    // the adjoint solve follows the same schedule as the inner one
    HypergradMethod method_k = cfg.method;
    if (method_k.kind == HypergradKind::exact) method_k.exact_tol = eps_k;

    TraceRow row;
    row.outer_iter = k;
    row.theta = theta;
    row.inner_tol = eps_k;

    SolveResult fwd;
    bool inner_ok = true;
    try {
      const Vector z0 = cfg.warm_restart ? z : zeros(z.size());
      LowRankInverseOperator op0 =
          cfg.warm_restart ? warm_op : LowRankInverseOperator(z.size(), op_cap);
      fwd = lbfgs_opa_solve_from(problem, theta, z0, inner_cfg, cfg.wolfe, std::move(op0));
      row.inner_iters += fwd.iterations;
    } catch (const NonFiniteIterate&) {
      inner_ok = false;
    }

    if (!inner_ok) {
      row.status = "inner_failed";
      gamma *= 0.5;
      row.cumulative_seconds = std::chrono::duration<double>(Clock::now() - t0).count();
      trace.rows.push_back(std::move(row));
      continue;
    }

    z = fwd.z_star;
    HypergradResult hg;
    try {
      hg = compute_hypergradient(problem, theta, fwd, method_k,
                                 have_warm_left ? &warm_left : nullptr);
    } catch (const NonFiniteIterate&) {
      row.status = "backward_failed";
      gamma *= 0.5;
      row.cumulative_seconds = std::chrono::duration<double>(Clock::now() - t0).count();
      trace.rows.push_back(std::move(row));
      continue;
    }
    if (cfg.warm_restart) {
      warm_left = hg.left_vector;
      have_warm_left = true;
      warm_op = fwd.inverse_op;
    }

    row.train_loss = nan_safe(problem.train_loss, theta, z);
    row.val_loss = problem.outer_loss(theta, z);
    row.test_loss = nan_safe(problem.test_loss, theta, z);
    row.backward_iters = hg.inversion_iterations;
    row.fallback_count = hg.fallback_triggered ? 1 : 0;
    row.backward_residual = hg.adjoint_residual;
    if (!fwd.converged) row.status = "inner_not_converged";

    if (cfg.step_rule == StepRule::fixed) {
      Vector next = theta;
      axpy_in_place(-gamma, hg.grad, next);
      theta = std::move(next);
    } else {
      const double val_now = row.val_loss;
      double step = gamma;
      bool accepted = false;
      bool full_step = false;
      for (int attempt = 0; attempt < 20; ++attempt) {
        Vector trial = theta;
        axpy_in_place(-step, hg.grad, trial);
        SolveResult trial_fwd;
        try {
          LowRankInverseOperator op0 =
              cfg.warm_restart ? warm_op : LowRankInverseOperator(z.size(), op_cap);
          trial_fwd = lbfgs_opa_solve_from(problem, trial,
                                           cfg.warm_restart ? z : zeros(z.size()), inner_cfg,
                                           cfg.wolfe, std::move(op0));
        } catch (const NonFiniteIterate&) {
          step *= 0.5;
          continue;
        }
        row.inner_iters += trial_fwd.iterations;
        const double val_trial = problem.outer_loss(trial, trial_fwd.z_star);
        if (val_trial <= val_now) {
          theta = std::move(trial);
          z = trial_fwd.z_star;
          if (cfg.warm_restart) warm_op = std::move(trial_fwd.inverse_op);
          accepted = true;
          full_step = attempt == 0;
          break;
        }
        step *= 0.5;
      }
      gamma = accepted && full_step ? step * 1.05 : step;
      if (!accepted) row.status = "step_rejected";
    }

    row.cumulative_seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    trace.rows.push_back(std::move(row));
  }
  return trace;
}

RunTrace random_search_run(const BilevelProblem& problem, int n_samples, double low,
                           double high, std::uint64_t seed) {
  if (n_samples < 1) throw std::invalid_argument("random search needs n_samples >= 1");
  if (!(low < high) || low <= 0.0)
    throw std::invalid_argument("random search needs 0 < low < high");

  RunTrace trace;
  trace.command = "random-search";
  trace.problem = problem.name;
  trace.seed = seed;

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(std::log(low), std::log(high));

  QNConfig tight;
  tight.tol = 1e-10;
  tight.max_iter = 2000;
  WolfeParams wolfe;

  const auto t0 = Clock::now();
  for (int i = 0; i < n_samples; ++i) {
    const double u = uni(rng);
    const Vector theta = {problem.log_parametrized ? u : std::exp(u)};

    TraceRow row;
    row.outer_iter = i;
    row.theta = theta;
    row.inner_tol = tight.tol;
    try {
      SolveResult fwd = lbfgs_opa_solve(problem, theta, zeros(static_cast<std::size_t>(problem.dim)),
                                        tight, wolfe);
      row.inner_iters = fwd.iterations;
      row.train_loss = nan_safe(problem.train_loss, theta, fwd.z_star);
      row.val_loss = problem.outer_loss(theta, fwd.z_star);
      row.test_loss = nan_safe(problem.test_loss, theta, fwd.z_star);
      if (row.val_loss < trace.best_val_loss) {
        trace.best_val_loss = row.val_loss;
        trace.best_theta = theta;
        trace.best_test_loss = row.test_loss;
      }
    } catch (const NonFiniteIterate&) {
      row.status = "inner_failed";
    }
    row.cumulative_seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    trace.rows.push_back(std::move(row));
  }
  return trace;
}

HypergradMethod truncated_backward_config(const HypergradMethod& base, int max_iters) {
  if (base.kind != HypergradKind::exact)
    throw std::invalid_argument("truncated backward applies to the exact backend");
  if (max_iters < 1) throw std::invalid_argument("max_iters must be >= 1");
  HypergradMethod out = base;
  out.exact_max_iter = max_iters;
  return out;
}

}  // namespace shine
