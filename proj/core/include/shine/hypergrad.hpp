#pragma once

#include <optional>
#include <string>
#include <utility>

#include "shine/numkit.hpp"
#include "shine/problems.hpp"
#include "shine/qn.hpp"

namespace shine {

enum class HypergradKind { exact, shine, jacobian_free };

struct HypergradMethod {
  HypergradKind kind = HypergradKind::exact;
  /// Adjoint-solver iterations run on top of the approximate left vector.
  int refine_steps = 0;
  /// When set (> 1), substitute the Jacobian-free left vector whenever the
  /// approximate one is `ratio` times larger in norm.
  std::optional<double> fallback_ratio;
  int exact_max_iter = 100;
  double exact_tol = 1e-6;
  /// Seed the refine/exact adjoint solver's operator from the forward one.
  bool warm_start_operator = false;
};

struct HypergradResult {
  /// Outer gradient, theta_dim entries.
  Vector grad;
  /// The computed (grad_z L)^T J^-1 row, as a column vector.
  Vector left_vector;
  std::string method_used;
  bool fallback_triggered = false;
  int inversion_iterations = 0;
  double wall_time = 0.0;

  // Diagnostics.
  bool adjoint_converged = true;
  /// |w^T J - grad_z L^T| at the returned left vector.
  double adjoint_residual = 0.0;
};

/// Solves the adjoint system w^T J = grad_z L(z*)^T and returns the exact
/// hypergradient -(dg/dtheta)^T w. The minus sign is the implicit-function
/// theorem's, applied uniformly across every backend here; it is the
/// convention under which the result matches finite differences of the
/// resolved outer objective (the quadratic oracle pins it down in closed
/// form). Symmetric inner problems use conjugate gradient on the Hessian
/// action; others a Broyden-accelerated fixed-point iteration on the vjp.
/// Truncated at method.exact_max_iter; non-convergence is reported through
/// adjoint_converged, never an exception.
HypergradResult exact_hypergradient(const BilevelProblem& problem, const Vector& theta,
                                    const Vector& z_star, const HypergradMethod& method,
                                    const Vector* warm_left = nullptr,
                                    const LowRankInverseOperator* warm_op = nullptr);

/// Reuses the forward solver's inverse operator as the Jacobian inverse:
/// left = H grad_z L (operator symmetry for BFGS results, adjoint application
/// for Broyden-family results), then optional fallback and refine.
HypergradResult shine_hypergradient(const BilevelProblem& problem, const Vector& theta,
                                    const SolveResult& forward, const HypergradMethod& method);

/// J^-1 ~ I: left = grad_z L(z*), zero inversion iterations.
HypergradResult jacobian_free_hypergradient(const BilevelProblem& problem, const Vector& theta,
                                            const Vector& z_star);

/// Keeps `shine_left` unless its norm exceeds ratio * |jf_left|, in which
/// case `jf_left` is returned with the flag set.
std::pair<Vector, bool> fallback_select(const Vector& shine_left, const Vector& jf_left,
                                        double ratio);

/// Runs `steps` adjoint-solver iterations from init_left; the Broyden path
/// warm-starts its operator from `init_op` (transposed) when given. steps = 0
/// returns init_left unchanged.
HypergradResult refine_hypergradient(const BilevelProblem& problem, const Vector& theta,
                                     const Vector& z_star, const Vector& init_left,
                                     const LowRankInverseOperator* init_op, int steps);

/// Dispatch on method.kind; `warm_left` seeds the exact backend's adjoint
/// solve across outer iterations.
HypergradResult compute_hypergradient(const BilevelProblem& problem, const Vector& theta,
                                      const SolveResult& forward, const HypergradMethod& method,
                                      const Vector* warm_left = nullptr);

}  // namespace shine
