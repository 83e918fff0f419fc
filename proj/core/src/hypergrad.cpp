#include "shine/hypergrad.hpp"

#include <chrono>
#include <cmath>

namespace shine {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct AdjointOut {
  Vector left;
  int iterations = 0;
  bool converged = true;
};

// One adjoint solve for w^T J = rhs^T, truncated at max_iter.
AdjointOut solve_adjoint(const BilevelProblem& problem, const Vector& theta,
                         const Vector& z_star, const Vector& rhs, double tol, int max_iter,
                         const Vector* warm_left, const LowRankInverseOperator* warm_op) {
  AdjointOut out;
  if (problem.symmetric_inner) {
    auto hvp = [&](const Vector& v) { return problem.inner_jvp(theta, z_star, v); };
    CgResult cg = cg_solve(hvp, rhs, tol, max_iter, warm_left);
    out.left = std::move(cg.x);
    out.iterations = cg.iterations;
    out.converged = cg.converged;
    return out;
  }
  auto adj_residual = [&](const Vector& w) {
    return sub(problem.inner_vjp(theta, z_star, w), rhs);
  };
  QNConfig cfg;
  cfg.tol = tol * norm(rhs);
  cfg.max_iter = max_iter;
  cfg.memory = 30;
  const Vector w0 = warm_left ? *warm_left : rhs;  // Jacobian-free guess when cold
  LowRankInverseOperator op0 =
      warm_op ? warm_op->adjoint() : LowRankInverseOperator(rhs.size(), cfg.memory);
  SolveResult sr = broyden_solve_from(adj_residual, w0, cfg, std::move(op0));
  out.left = std::move(sr.z_star);
  out.iterations = sr.iterations;
  out.converged = sr.converged;
  return out;
}

// Fills grad, residual diagnostic, and timing from a chosen left vector.
void finish(HypergradResult& res, const BilevelProblem& problem, const Vector& theta,
            const Vector& z_star, Vector left, Clock::time_point t0) {
  const Vector rhs = problem.outer_grad(theta, z_star);
  const Vector jtw = problem.symmetric_inner ? problem.inner_jvp(theta, z_star, left)
                                             : problem.inner_vjp(theta, z_star, left);
  res.adjoint_residual = norm(sub(jtw, rhs));
  res.grad = scaled(problem.dg_dtheta_adjoint(theta, z_star, left), -1.0);
  res.left_vector = std::move(left);
  res.wall_time = seconds_since(t0);
}

}  // namespace

HypergradResult exact_hypergradient(const BilevelProblem& problem, const Vector& theta,
                                    const Vector& z_star, const HypergradMethod& method,
                                    const Vector* warm_left,
                                    const LowRankInverseOperator* warm_op) {
  const auto t0 = Clock::now();
  HypergradResult res;
  res.method_used = "exact";
  const Vector rhs = problem.outer_grad(theta, z_star);
  AdjointOut adj = solve_adjoint(problem, theta, z_star, rhs, method.exact_tol,
                                 method.exact_max_iter, warm_left, warm_op);
  res.inversion_iterations = adj.iterations;
  res.adjoint_converged = adj.converged;
  finish(res, problem, theta, z_star, std::move(adj.left), t0);
  return res;
}

HypergradResult shine_hypergradient(const BilevelProblem& problem, const Vector& theta,
                                    const SolveResult& forward, const HypergradMethod& method) {
  const auto t0 = Clock::now();
  HypergradResult res;
  res.method_used = "shine";

  const Vector grad_l = problem.outer_grad(theta, forward.z_star);
  Vector left = forward.op_is_symmetric ? forward.inverse_op.apply(grad_l)
                                        : forward.inverse_op.apply_adjoint(grad_l);

  if (method.fallback_ratio && !(*method.fallback_ratio > 1.0))
    throw std::invalid_argument("fallback ratio must exceed 1");
  if (method.fallback_ratio) {
    auto [selected, triggered] = fallback_select(left, grad_l, *method.fallback_ratio);
    left = std::move(selected);
    res.fallback_triggered = triggered;
  }

  if (method.refine_steps > 0) {
    res.method_used += "+refine";
    AdjointOut adj = solve_adjoint(problem, theta, forward.z_star,
                                   problem.outer_grad(theta, forward.z_star), 1e-15,
                                   method.refine_steps, &left,
                                   method.warm_start_operator ? &forward.inverse_op : nullptr);
    left = std::move(adj.left);
    res.inversion_iterations = adj.iterations;
  }

  finish(res, problem, theta, forward.z_star, std::move(left), t0);
  return res;
}

HypergradResult jacobian_free_hypergradient(const BilevelProblem& problem, const Vector& theta,
                                            const Vector& z_star) {
  const auto t0 = Clock::now();
  HypergradResult res;
  res.method_used = "jacobian-free";
  res.inversion_iterations = 0;
  finish(res, problem, theta, z_star, problem.outer_grad(theta, z_star), t0);
  return res;
}

std::pair<Vector, bool> fallback_select(const Vector& shine_left, const Vector& jf_left,
                                        double ratio) {
  if (norm(shine_left) > ratio * norm(jf_left)) return {jf_left, true};
  return {shine_left, false};
}

HypergradResult refine_hypergradient(const BilevelProblem& problem, const Vector& theta,
                                     const Vector& z_star, const Vector& init_left,
                                     const LowRankInverseOperator* init_op, int steps) {
  const auto t0 = Clock::now();
  HypergradResult res;
  res.method_used = "refine";
  if (steps <= 0) {
    finish(res, problem, theta, z_star, init_left, t0);
    return res;
  }
  AdjointOut adj = solve_adjoint(problem, theta, z_star, problem.outer_grad(theta, z_star),
                                 1e-15, steps, &init_left, init_op);
  res.inversion_iterations = adj.iterations;
  res.adjoint_converged = adj.converged;
  finish(res, problem, theta, z_star, std::move(adj.left), t0);
  return res;
}

HypergradResult compute_hypergradient(const BilevelProblem& problem, const Vector& theta,
                                      const SolveResult& forward, const HypergradMethod& method,
                                      const Vector* warm_left) {
  switch (method.kind) {
    case HypergradKind::exact:
      return exact_hypergradient(problem, theta, forward.z_star, method, warm_left,
                                 method.warm_start_operator ? &forward.inverse_op : nullptr);
    case HypergradKind::shine:
      return shine_hypergradient(problem, theta, forward, method);
    case HypergradKind::jacobian_free: {
      if (method.refine_steps <= 0)
        return jacobian_free_hypergradient(problem, theta, forward.z_star);
      const Vector jf = problem.outer_grad(theta, forward.z_star);
      HypergradResult res =
          refine_hypergradient(problem, theta, forward.z_star, jf, nullptr, method.refine_steps);
      res.method_used = "jacobian-free+refine";
      return res;
    }
  }
  throw std::logic_error("unreachable");
}

}  // namespace shine
