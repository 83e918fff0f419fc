#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "shine/hypergrad.hpp"
#include "shine/problems.hpp"
#include "shine/qn.hpp"

namespace shine {

enum class StepRule { fixed, backtracking };

struct OuterConfig {
  /// Empty means: start from problem.theta0.
  Vector initial_theta;
  double initial_step = 1.0;
  int max_outer_iters = 50;
  /// Inner/adjoint tolerance schedule eps_k = tol0 * tol_decrease^k.
  double tol0 = 0.1;
  double tol_decrease = 0.78;
  HypergradMethod method;
  bool warm_restart = true;
  StepRule step_rule = StepRule::backtracking;

  /// Inner solver knobs; the tol field is overridden by the schedule.
  QNConfig inner;
  WolfeParams wolfe;
};

struct TraceRow {
  int outer_iter = 0;
  Vector theta;
  double train_loss = std::numeric_limits<double>::quiet_NaN();
  double val_loss = std::numeric_limits<double>::quiet_NaN();
  double test_loss = std::numeric_limits<double>::quiet_NaN();
  int inner_iters = 0;
  int backward_iters = 0;
  int fallback_count = 0;
  double inner_tol = std::numeric_limits<double>::quiet_NaN();
  double backward_residual = std::numeric_limits<double>::quiet_NaN();
  /// Gradient-fidelity probe (deq traces); NaN when not sampled.
  double cosine_vs_exact = std::numeric_limits<double>::quiet_NaN();
  double cumulative_seconds = 0.0;
  std::string status = "ok";
};

struct RunTrace {
  std::string command;
  std::string method;
  std::string problem;
  std::uint64_t seed = 0;
  std::vector<TraceRow> rows;

  // Filled by random_search_run.
  Vector best_theta;
  double best_val_loss = std::numeric_limits<double>::infinity();
  double best_test_loss = std::numeric_limits<double>::quiet_NaN();
};

/// Outer gradient descent with decreasing inner/adjoint tolerances and warm
/// restarts. Each outer iteration solves the inner problem to
/// eps_k = tol0 * rho^k, computes the hypergradient with cfg.method (an exact
/// backend's adjoint solve follows the same eps_k schedule), and steps theta.
/// Under backtracking the step halves (up to 20 times) until the validation
/// loss does not increase, growing by 1.05 after an accepted full step. Inner
/// failures are recorded in the trace and skip the iteration with the step
/// halved; the loop never throws for them.
RunTrace hoag_run(const BilevelProblem& problem, const OuterConfig& cfg);

/// Log-uniform hyperparameter samples in (low, high) (the positive scale;
/// encoded through the problem's parametrization), each solved to a fixed
/// tight tolerance; keeps the best by validation loss.
RunTrace random_search_run(const BilevelProblem& problem, int n_samples, double low,
                           double high, std::uint64_t seed);

/// The limited-backward baseline: exact backend truncated at max_iters
/// adjoint iterations.
HypergradMethod truncated_backward_config(const HypergradMethod& base, int max_iters);

}  // namespace shine
