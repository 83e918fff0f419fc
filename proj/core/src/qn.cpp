#include "shine/qn.hpp"

#include <cmath>
#include <limits>

namespace shine {

LineSearchOutcome wolfe_line_search(const std::function<double(double)>& phi, double dphi0,
                                    const WolfeParams& params,
                                    const std::function<double(double)>& dphi) {
  if (!(0.0 < params.c1 && params.c1 < params.c2 && params.c2 < 1.0))
    throw std::invalid_argument("Wolfe constants need 0 < c1 < c2 < 1");
  if (!(dphi0 < 0.0)) throw NotDescentDirection("phi'(0) must be negative");

  int evals = 0;
  const double phi0 = phi(0.0);
  ++evals;

  auto slope = [&](double alpha) {
    if (dphi) {
      ++evals;
      return dphi(alpha);
    }
    const double h = 1e-7 * std::max(1.0, std::abs(alpha));
    const double fp = phi(alpha + h);
    const double fm = phi(alpha - h);
    evals += 2;
    return (fp - fm) / (2.0 * h);
  };

  double lo = 0.0;
  double hi = std::numeric_limits<double>::infinity();
  double alpha = 1.0;
  for (int k = 0; k < params.max_backtracks; ++k) {
    const double f = phi(alpha);
    ++evals;
    if (f > phi0 + params.c1 * alpha * dphi0) {
      hi = alpha;
      alpha = 0.5 * (lo + hi);
      continue;
    }
    if (slope(alpha) < params.c2 * dphi0) {
      lo = alpha;
      alpha = std::isinf(hi) ? 2.0 * alpha : 0.5 * (lo + hi);
      continue;
    }
    return {alpha, evals};
  }
  throw LineSearchFailed("no Wolfe point within backtrack budget");
}

namespace {

void require_finite(const Vector& v, int iteration, const std::vector<double>& trace) {
  if (!all_finite(v)) throw NonFiniteIterate(iteration, trace);
}

void validate(const QNConfig& cfg) {
  if (!(cfg.tol > 0.0)) throw std::invalid_argument("tol must be positive");
  if (cfg.memory < 1) throw std::invalid_argument("memory must be at least 1");
  if (cfg.opa_frequency && *cfg.opa_frequency < 1)
    throw std::invalid_argument("opa_frequency must be at least 1");
  if (!(cfg.opa_t0 > 0.0)) throw std::invalid_argument("opa_t0 must be positive");
}

}  // namespace

PushStatus push_inverse_bfgs(LowRankInverseOperator& op, const Vector& s, const Vector& y) {
  const double r = dot(s, y);
  if (r <= 0.0) return PushStatus::skipped_nonpositive_curvature;
  if (r < kSingularUpdateTol * norm(s) * norm(y)) return PushStatus::skipped_near_singular;

  const Vector hy = op.apply(y);
  const Vector a = sub(s, hy);
  const double ay = dot(a, y);

  // (a s^T + s a^T)/r - (a.y/r^2) s s^T  as  u1 s^T + (s/r) a^T
  Vector u1 = scaled(a, 1.0 / r);
  axpy_in_place(-ay / (r * r), s, u1);
  op.push_correction(std::move(u1), s);
  op.push_correction(scaled(s, 1.0 / r), a);
  return PushStatus::applied;
}

PushStatus push_adjoint_broyden(LowRankInverseOperator& op, const Vector& w,
                                const Vector& jac_row) {
  const Vector q = op.apply(w);
  const double denom = dot(jac_row, q);
  if (std::abs(denom) < kSingularUpdateTol * norm(jac_row) * norm(q))
    return PushStatus::skipped_near_singular;
  const Vector m = sub(op.apply_adjoint(jac_row), w);
  op.push_correction(scaled(q, -1.0 / denom), m);
  return PushStatus::applied;
}

SolveResult broyden_solve(const VectorFn& g, const Vector& z0, const QNConfig& cfg) {
  return broyden_solve_from(g, z0, cfg,
                            LowRankInverseOperator(z0.size(), cfg.memory));
}

SolveResult broyden_solve_from(const VectorFn& g, const Vector& z0, const QNConfig& cfg,
                               LowRankInverseOperator op0) {
  validate(cfg);
  SolveResult res;
  res.inverse_op = std::move(op0);
  res.op_is_symmetric = false;

  Vector z = z0;
  Vector gz = g(z);
  require_finite(z, 0, res.residual_norms);
  require_finite(gz, 0, res.residual_norms);
  res.residual_norms.push_back(norm(gz));
  res.iterates.push_back(z);

  int n = 0;
  while (res.residual_norms.back() > cfg.tol && n < cfg.max_iter) {
    Vector p = scaled(res.inverse_op.apply(gz), -1.0);

    double alpha = 1.0;
    if (cfg.line_search == LineSearchKind::wolfe) {
      auto phi = [&](double a) {
        Vector trial = z;
        axpy_in_place(a, p, trial);
        const Vector gt = g(trial);
        return 0.5 * dot(gt, gt);
      };
      // No Jacobian product available here, so estimate the merit slope.
      const double h = 1e-7;
      const double dphi0 = (phi(h) - phi(-h)) / (2.0 * h);
      if (dphi0 < 0.0) {
        try {
          alpha = wolfe_line_search(phi, dphi0, WolfeParams{}).alpha;
        } catch (const LineSearchFailed&) {
          res.line_search_failed = true;
          break;
        }
      }
    }

    Vector s = scaled(p, alpha);
    Vector z_next = add(z, s);
    Vector g_next = g(z_next);
    require_finite(z_next, n + 1, res.residual_norms);
    require_finite(g_next, n + 1, res.residual_norms);

    const Vector y = sub(g_next, gz);
    if (res.inverse_op.push_sherman_morrison(s, y) != PushStatus::applied)
      ++res.skipped_updates;

    res.step_history.emplace_back(norm(s), norm(y));
    res.last_step = s;
    z = std::move(z_next);
    gz = std::move(g_next);
    res.residual_norms.push_back(norm(gz));
    res.iterates.push_back(z);
    ++n;
  }

  res.z_star = std::move(z);
  res.iterations = n;
  res.converged = res.residual_norms.back() <= cfg.tol;
  return res;
}

SolveResult lbfgs_opa_solve(const BilevelProblem& problem, const Vector& theta,
                            const Vector& z0, const QNConfig& cfg, const WolfeParams& wolfe,
                            const VectorFn& opa_direction) {
  const std::size_t cap = cfg.memory == QNConfig::kUnboundedMemory
                              ? LowRankInverseOperator::kUnbounded
                              : 2 * cfg.memory;  // rank-two updates: 2 corrections each
  return lbfgs_opa_solve_from(problem, theta, z0, cfg, wolfe,
                              LowRankInverseOperator(z0.size(), cap), opa_direction);
}

SolveResult lbfgs_opa_solve_from(const BilevelProblem& problem, const Vector& theta,
                                 const Vector& z0, const QNConfig& cfg,
                                 const WolfeParams& wolfe, LowRankInverseOperator op0,
                                 const VectorFn& opa_direction) {
  validate(cfg);
  if (!problem.inner_objective)
    throw std::invalid_argument("lbfgs_opa_solve needs a scalar inner objective");
  if (cfg.opa_frequency && !opa_direction && problem.theta_dim != 1)
    throw std::invalid_argument("default OPA direction needs a scalar hyperparameter");

  const std::size_t d = z0.size();
  const std::size_t cap = op0.capacity();

  SolveResult res;
  res.inverse_op = std::move(op0);
  res.op_is_symmetric = true;

  auto residual = [&](const Vector& z) { return problem.inner_residual(theta, z); };

  Vector z = z0;
  Vector gz = residual(z);
  require_finite(z, 0, res.residual_norms);
  require_finite(gz, 0, res.residual_norms);
  res.residual_norms.push_back(norm(gz));
  res.iterates.push_back(z);

  double prev_step_norm = cfg.opa_t0;
  int n = 0;
  while (res.residual_norms.back() > cfg.tol && n < cfg.max_iter) {
    // Extra update: changes only the operator, in the direction the outer
    // problem will read, before the regular step is formed.
    if (cfg.opa_frequency && n % *cfg.opa_frequency == 0) {
      const Vector target =
          opa_direction ? opa_direction(z) : problem.dg_dtheta_action(theta, z, Vector{1.0});
      const double t_n = (n == 0) ? cfg.opa_t0 : prev_step_norm;
      Vector e = scaled(res.inverse_op.apply(target), t_n);
      bool accepted = false;
      if (norm(e) > 0.0) {
        Vector z_probe = add(z, e);
        const Vector y_hat = sub(residual(z_probe), gz);
        accepted = push_inverse_bfgs(res.inverse_op, e, y_hat) == PushStatus::applied;
      }
      res.opa_events.push_back({n, accepted});
    }

    Vector p = scaled(res.inverse_op.apply(gz), -1.0);
    double dphi0 = dot(gz, p);
    if (!(dphi0 < 0.0)) {
      // Curvature lost (possible after eviction); restart from the identity.
      res.inverse_op = LowRankInverseOperator(d, cap);
      p = scaled(gz, -1.0);
      dphi0 = -dot(gz, gz);
    }

    auto phi = [&](double a) {
      Vector trial = z;
      axpy_in_place(a, p, trial);
      return problem.inner_objective(theta, trial);
    };
    auto dphi = [&](double a) {
      Vector trial = z;
      axpy_in_place(a, p, trial);
      return dot(residual(trial), p);
    };

    double alpha = 1.0;
    try {
      alpha = wolfe_line_search(phi, dphi0, wolfe, dphi).alpha;
    } catch (const LineSearchFailed&) {
      // Near the floor the objective differences sit below double precision
      // and the Wolfe conditions cannot be resolved; a unit step that still
      // reduces the residual norm keeps the terminal phase going.
      Vector z_unit = add(z, p);
      if (all_finite(z_unit) && norm(residual(z_unit)) < res.residual_norms.back()) {
        alpha = 1.0;
      } else {
        res.line_search_failed = true;
        break;
      }
    }

    Vector s = scaled(p, alpha);
    Vector z_next = add(z, s);
    Vector g_next = residual(z_next);
    require_finite(z_next, n + 1, res.residual_norms);
    require_finite(g_next, n + 1, res.residual_norms);

    const Vector y = sub(g_next, gz);
    if (push_inverse_bfgs(res.inverse_op, s, y) != PushStatus::applied) ++res.skipped_updates;

    prev_step_norm = norm(s);
    res.step_history.emplace_back(prev_step_norm, norm(y));
    res.last_step = s;
    z = std::move(z_next);
    gz = std::move(g_next);
    res.residual_norms.push_back(norm(gz));
    res.iterates.push_back(z);
    ++n;
  }

  res.z_star = std::move(z);
  res.iterations = n;
  res.converged = res.residual_norms.back() <= cfg.tol;
  return res;
}

SolveResult adjoint_broyden_solve(const VectorFn& g, const VjpFn& vjp,
                                  const VectorFn& outer_grad, const Vector& z0,
                                  const QNConfig& cfg) {
  validate(cfg);
  if (cfg.opa_frequency && !outer_grad)
    throw std::invalid_argument("adjoint Broyden OPA needs the outer gradient");

  SolveResult res;
  res.inverse_op = LowRankInverseOperator(z0.size(), cfg.memory);
  res.op_is_symmetric = false;

  Vector z = z0;
  Vector gz = g(z);
  require_finite(z, 0, res.residual_norms);
  require_finite(gz, 0, res.residual_norms);
  res.residual_norms.push_back(norm(gz));
  res.iterates.push_back(z);

  int n = 0;
  while (res.residual_norms.back() > cfg.tol && n < cfg.max_iter) {
    const bool opa_now = cfg.opa_frequency && n % *cfg.opa_frequency == 0;
    // The extra-update direction reads the operator before this iteration
    // touches it.
    Vector v_extra;
    if (opa_now) v_extra = res.inverse_op.apply_adjoint(outer_grad(z));

    const Vector p = scaled(res.inverse_op.apply(gz), -1.0);
    Vector z_next = add(z, p);
    Vector g_next = g(z_next);
    require_finite(z_next, n + 1, res.residual_norms);
    require_finite(g_next, n + 1, res.residual_norms);

    // Regular update in the residual direction sigma = g(z').
    if (norm(g_next) > 0.0) {
      const Vector jac_row = vjp(g_next, z_next);
      if (push_adjoint_broyden(res.inverse_op, g_next, jac_row) != PushStatus::applied)
        ++res.skipped_updates;
    }

    if (opa_now) {
      bool accepted = false;
      if (norm(v_extra) > 0.0) {
        const Vector jac_row = vjp(v_extra, z_next);
        accepted = push_adjoint_broyden(res.inverse_op, v_extra, jac_row) == PushStatus::applied;
      }
      res.opa_events.push_back({n, accepted});
    }

    res.step_history.emplace_back(norm(p), norm(sub(g_next, gz)));
    res.last_step = p;
    z = std::move(z_next);
    gz = std::move(g_next);
    res.residual_norms.push_back(norm(gz));
    res.iterates.push_back(z);
    ++n;
  }

  res.z_star = std::move(z);
  res.iterations = n;
  res.converged = res.residual_norms.back() <= cfg.tol;
  return res;
}

}  // namespace shine
