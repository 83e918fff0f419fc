#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "shine/hypergrad.hpp"
#include "shine/numkit.hpp"
#include "shine/outer.hpp"
#include "shine/qn.hpp"

namespace shine {

/// Single-layer equilibrium model z* = tanh(W z* + U x + b) with a linear
/// readout R z + c trained under squared error. Small enough that dense
/// Jacobians stay available as test oracles.
struct ToyDeqModel {
  DenseMatrix W;  // d x d
  DenseMatrix U;  // d x m
  Vector b;       // d
  DenseMatrix R;  // k x d
  Vector c;       // k
  int d = 0;
  int m = 0;
  int k = 0;
};

/// Gaussian init; W is rescaled so its spectral norm is ~ w_spectral_scale
/// (0 gives W = 0, a constant layer).
ToyDeqModel make_toy_deq(int d, int m, int k, std::uint64_t seed,
                         double w_spectral_scale = 0.9);

struct DeqBatch {
  std::vector<Vector> inputs;   // n x m
  std::vector<Vector> targets;  // n x k
};

/// Inputs are Gaussian; targets come from the teacher's own equilibrium
/// readout plus optional Gaussian noise, so the task is realizable.
DeqBatch synth_deq_batch(const ToyDeqModel& teacher, int n, std::uint64_t seed,
                         double noise = 0.0);

enum class DeqSolver { broyden, adjoint_broyden };

/// tanh pre-activation W z + U x + b.
Vector deq_preactivation(const ToyDeqModel& model, const Vector& x, const Vector& z);
/// Residual g(z) = z - tanh(W z + U x + b).
Vector deq_residual(const ToyDeqModel& model, const Vector& x, const Vector& z);
/// v -> (v^T J)^T with J = I - diag(1 - tanh^2) W.
Vector deq_vjp(const ToyDeqModel& model, const Vector& x, const Vector& z, const Vector& v);
/// u -> J u.
Vector deq_jvp(const ToyDeqModel& model, const Vector& x, const Vector& z, const Vector& u);

/// Root solve for one injection x. The adjoint Broyden path uses the analytic
/// vjp; OPA extra updates require the sample target (for grad_z of the
/// readout loss) and cfg.opa_frequency.
SolveResult deq_forward(const ToyDeqModel& model, const Vector& x, DeqSolver solver,
                        const QNConfig& cfg, const Vector* target = nullptr);

struct DeqGrads {
  DenseMatrix dW, dU, dR;
  Vector db, dc;
  double loss = 0.0;
  int forward_iterations = 0;
  int backward_iterations = 0;
  int fallback_count = 0;
  std::vector<bool> sample_converged;
};

/// Mean readout loss over the batch and its parameter gradients. Per-sample
/// left vectors come from the chosen backend; W/U/b gradients are the
/// analytic adjoint of the residual, readout gradients are explicit.
DeqGrads deq_param_grad(const ToyDeqModel& model, const DeqBatch& batch,
                        const HypergradMethod& method, const QNConfig& cfg,
                        DeqSolver solver = DeqSolver::broyden);

/// Concatenates dW, dU, db, dR, dc (gradient-fidelity probes).
Vector flatten_grads(const DeqGrads& grads);

/// Plain gradient descent on the toy model. Trace rows carry the batch loss,
/// per-step iteration counts, and a cosine-similarity probe against the exact
/// backend every 10 steps. A loss above 1e6 aborts with the trace.
RunTrace deq_train(ToyDeqModel& model, const DeqBatch& batch, const HypergradMethod& method,
                   double lr, int steps, const QNConfig& cfg,
                   DeqSolver solver = DeqSolver::broyden);

/// Normalized iteration u <- f(u)/|f(u)|; returns the final |f(u)| as the
/// growth-rate estimate. Throws ZeroImage when an image norm falls under
/// 1e-14.
double nonlinear_power_method(const std::function<Vector(const Vector&)>& f, const Vector& u0,
                              int iters);

}  // namespace shine
