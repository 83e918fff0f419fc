#pragma once

#include <functional>
#include <optional>
#include <utility>
#include <vector>

#include "shine/numkit.hpp"
#include "shine/problems.hpp"

namespace shine {

enum class LineSearchKind { none, wolfe };

struct QNConfig {
  /// Residual-norm stopping threshold.
  double tol = 1e-6;
  int max_iter = 500;
  /// Number of quasi-Newton updates retained; oldest evicted first.
  std::size_t memory = 30;
  static constexpr std::size_t kUnboundedMemory = LowRankInverseOperator::kUnbounded;
  /// Extra outer-problem-aware update every M iterations (at n mod M == 0).
  std::optional<int> opa_frequency;
  /// First element of the extra-update step sequence; later ones follow the
  /// previous regular step norm.
  double opa_t0 = 1.0;
  LineSearchKind line_search = LineSearchKind::none;
};

struct OpaEvent {
  int iteration;
  bool accepted;
};

struct SolveResult {
  Vector z_star;
  LowRankInverseOperator inverse_op{1};
  int iterations = 0;
  std::vector<double> residual_norms;           // |g(z_0)| .. |g(z_N)|
  std::vector<std::pair<double, double>> step_history;  // (|s_n|, |y_n|)
  std::vector<OpaEvent> opa_events;
  bool converged = false;

  // Diagnostics beyond the core contract.
  bool op_is_symmetric = false;
  bool line_search_failed = false;
  int skipped_updates = 0;
  Vector last_step;            // z_N - z_{N-1}; empty when no step was taken
  std::vector<Vector> iterates;  // z_0 .. z_N
};

struct WolfeParams {
  double c1 = 1e-4;
  double c2 = 0.9;
  int max_backtracks = 30;
};

struct LineSearchOutcome {
  double alpha;
  int evals;
};

/// Weak Wolfe search over phi(alpha): sufficient decrease with c1 and
/// curvature phi'(alpha) >= c2 * phi'(0). Tries alpha = 1 first, then
/// bisects/expands. phi'(alpha) uses `dphi` when given, otherwise a central
/// difference of phi. Throws NotDescentDirection when dphi0 >= 0 and
/// LineSearchFailed after max_backtracks trial points.
LineSearchOutcome wolfe_line_search(const std::function<double(double)>& phi, double dphi0,
                                    const WolfeParams& params,
                                    const std::function<double(double)>& dphi = {});

using VectorFn = std::function<Vector(const Vector&)>;
/// (v, z) -> (v^T J(z))^T
using VjpFn = std::function<Vector(const Vector&, const Vector&)>;

/// Good Broyden root finder: z' = z - alpha H g(z) with the Sherman-Morrison
/// inverse update per step. alpha = 1 unless cfg asks for a Wolfe search on
/// the merit 1/2 |g|^2.
SolveResult broyden_solve(const VectorFn& g, const Vector& z0, const QNConfig& cfg);

/// Same, but the operator starts from `op0` instead of the identity
/// (adjoint-solve warm starts).
SolveResult broyden_solve_from(const VectorFn& g, const Vector& z0, const QNConfig& cfg,
                               LowRankInverseOperator op0);

/// Limited-memory BFGS on the inner objective of `problem` at fixed theta,
/// with optional outer-problem-aware extra updates: every M-th iteration the
/// operator (never the iterate) receives an additional rank-two update in the
/// direction e = t_n H (dg/dtheta), accepted only when the trial curvature
/// e . (g(z+e) - g(z)) is positive. `opa_direction`, when given, overrides
/// the dg/dtheta target (inversion-quality experiments).
SolveResult lbfgs_opa_solve(const BilevelProblem& problem, const Vector& theta,
                            const Vector& z0, const QNConfig& cfg, const WolfeParams& wolfe,
                            const VectorFn& opa_direction = {});

/// Same, with the operator warm-started from `op0` (outer loops carry the
/// previous solve's operator across iterations). op0 must be symmetric
/// (BFGS-built) with capacity matching 2 * cfg.memory.
SolveResult lbfgs_opa_solve_from(const BilevelProblem& problem, const Vector& theta,
                                 const Vector& z0, const QNConfig& cfg,
                                 const WolfeParams& wolfe, LowRankInverseOperator op0,
                                 const VectorFn& opa_direction = {});

/// Adjoint Broyden root finder: each step updates B in the row direction
/// sigma = g(z') so that sigma^T B' = sigma^T J(z'), maintained on the
/// inverse side. With cfg.opa_frequency set and `outer_grad` given, every
/// M-th iteration adds an update in the direction v = (grad L(z)^T B^-1)^T,
/// the row the hypergradient reads.
SolveResult adjoint_broyden_solve(const VectorFn& g, const VjpFn& vjp,
                                  const VectorFn& outer_grad, const Vector& z0,
                                  const QNConfig& cfg);

/// Inverse BFGS rank-two update, stored as two rank-one corrections:
///   H' = H + (a s^T + s a^T)/r - (a.y/r^2) s s^T,  a = s - H y,  r = s.y.
/// Enforces H' y = s. Skips when r <= 0 or r is negligible against |s||y|.
PushStatus push_inverse_bfgs(LowRankInverseOperator& op, const Vector& s, const Vector& y);

/// Adjoint Broyden rank-one update for a row direction w with jac_row =
/// (w^T J)^T, absorbed on the inverse side:
///   H' = H - (H w)(w^T J H - w^T) / (w^T J H w),
/// which enforces w^T B' = w^T J exactly. Skips near-singular denominators.
PushStatus push_adjoint_broyden(LowRankInverseOperator& op, const Vector& w,
                                const Vector& jac_row);

}  // namespace shine
