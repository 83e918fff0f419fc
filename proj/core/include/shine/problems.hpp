#pragma once

#include <functional>
#include <string>

#include "shine/dataio.hpp"
#include "shine/numkit.hpp"

namespace shine {

enum class Parametrization { log, linear };

/// Capability bundle for a bi-level problem: an inner residual g(theta, z)
/// whose root z* feeds an outer loss L(z*), together with the derivative
/// actions every hypergradient backend needs. theta is always a vector;
/// scalar hyperparameters use theta_dim == 1.
///
/// All callables are pure; a problem value can be shared across threads.
struct BilevelProblem {
  std::string name;
  int dim = 0;
  int theta_dim = 1;
  /// g is the gradient of a scalar inner objective (inner_jvp is then the
  /// symmetric Hessian action).
  bool symmetric_inner = false;
  /// theta stores the log of a positive hyperparameter.
  bool log_parametrized = false;
  /// Suggested starting hyperparameter for outer loops.
  Vector theta0;

  /// Scalar inner objective r with g = grad r; null for pure root problems.
  std::function<double(const Vector& theta, const Vector& z)> inner_objective;
  std::function<Vector(const Vector& theta, const Vector& z)> inner_residual;
  /// Action of the inner Jacobian/Hessian: v -> J v.
  std::function<Vector(const Vector& theta, const Vector& z, const Vector& v)> inner_jvp;
  /// Adjoint action: v -> (v^T J)^T.
  std::function<Vector(const Vector& theta, const Vector& z, const Vector& v)> inner_vjp;
  /// dtheta (theta_dim) -> (dg/dtheta) dtheta (dim).
  std::function<Vector(const Vector& theta, const Vector& z, const Vector& dtheta)> dg_dtheta_action;
  /// w (dim) -> (w^T dg/dtheta)^T (theta_dim).
  std::function<Vector(const Vector& theta, const Vector& z, const Vector& w)> dg_dtheta_adjoint;
  std::function<double(const Vector& theta, const Vector& z)> outer_loss;
  std::function<Vector(const Vector& theta, const Vector& z)> outer_grad;

  // Reporting only.
  std::function<double(const Vector& theta, const Vector& z)> train_loss;
  std::function<double(const Vector& theta, const Vector& z)> test_loss;
};

/// l2-regularized logistic regression: the inner residual is the gradient of
/// mean_train log(1 + exp(-y z.x)) plus 2 c z with c = exp(lambda) (log
/// parametrization, theta = lambda) or c = theta (linear). The outer loss is
/// the mean logistic loss on the validation split.
BilevelProblem make_l2_logreg(const DataSplit& split, Parametrization par = Parametrization::log);

/// Regularized nonlinear least squares with sigmoid outputs: inner objective
/// 1/2 sum_j (y_j - sigmoid(z.x_j))^2 + c/2 |z|^2 over the train split with
/// labels remapped to {0,1}; outer loss is the same data term on validation.
BilevelProblem make_nls(const DataSplit& split, Parametrization par = Parametrization::log);

/// Analytically solvable instance used as ground truth:
///   g_theta(z) = (z - a) + theta z,   z*(theta) = a / (1 + theta),
///   L(z) = 1/2 |z - target|^2 (target defaults to 0).
/// With target = 0 the outer derivative is -|a|^2 / (1+theta)^3.
BilevelProblem make_quadratic_oracle(const Vector& a, double theta0, const Vector& target = {});

/// Closed forms for the quadratic oracle.
Vector quadratic_oracle_zstar(const Vector& a, double theta);
double quadratic_oracle_hypergrad(const Vector& a, double theta, const Vector& target = {});

}  // namespace shine
