#include "shine/deqtoy.hpp"

#include <chrono>
#include <cmath>
#include <random>

namespace shine {

namespace {

DenseMatrix gaussian_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng,
                            double scale) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  DenseMatrix A(rows, cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) A(i, j) = scale * gauss(rng);
  return A;
}

double spectral_norm_estimate(const DenseMatrix& A, int iters = 50) {
  if (A.rows() == 0 || A.cols() == 0) return 0.0;
  Vector v(A.cols(), 1.0);
  v = scaled(v, 1.0 / norm(v));
  double sigma2 = 0.0;
  for (int i = 0; i < iters; ++i) {
    const Vector w = A.matvec_transpose(A.matvec(v));
    sigma2 = norm(w);  // |v| = 1, so this tends to sigma^2
    if (sigma2 < 1e-30) return 0.0;
    v = scaled(w, 1.0 / sigma2);
  }
  return std::sqrt(sigma2);
}

}  // namespace

ToyDeqModel make_toy_deq(int d, int m, int k, std::uint64_t seed, double w_spectral_scale) {
  if (d < 1 || m < 1 || k < 1) throw std::invalid_argument("toy deq dims must be >= 1");
  std::mt19937_64 rng(seed);
  ToyDeqModel model;
  model.d = d;
  model.m = m;
  model.k = k;
  const auto du = static_cast<std::size_t>(d);
  const auto mu = static_cast<std::size_t>(m);
  const auto ku = static_cast<std::size_t>(k);

  model.W = gaussian_matrix(du, du, rng, 1.0 / std::sqrt(static_cast<double>(d)));
  if (w_spectral_scale <= 0.0) {
    model.W = DenseMatrix(du, du, 0.0);
  } else {
    const double sigma = spectral_norm_estimate(model.W);
    if (sigma > 0.0) {
      const double factor = w_spectral_scale / sigma;
      for (double& x : model.W.data()) x *= factor;
    }
  }
  model.U = gaussian_matrix(du, mu, rng, 1.0 / std::sqrt(static_cast<double>(m)));
  std::normal_distribution<double> gauss(0.0, 1.0);
  model.b = Vector(du);
  for (double& x : model.b) x = 0.1 * gauss(rng);
  model.R = gaussian_matrix(ku, du, rng, 1.0 / std::sqrt(static_cast<double>(d)));
  model.c = zeros(ku);
  return model;
}

DeqBatch synth_deq_batch(const ToyDeqModel& teacher, int n, std::uint64_t seed, double noise) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  DeqBatch batch;
  QNConfig cfg;
  cfg.tol = 1e-10;
  cfg.max_iter = 500;
  for (int i = 0; i < n; ++i) {
    Vector x(static_cast<std::size_t>(teacher.m));
    for (double& e : x) e = gauss(rng);
    const SolveResult fwd = deq_forward(teacher, x, DeqSolver::broyden, cfg);
    Vector t = add(teacher.R.matvec(fwd.z_star), teacher.c);
    for (double& e : t) e += noise * gauss(rng);
    batch.inputs.push_back(std::move(x));
    batch.targets.push_back(std::move(t));
  }
  return batch;
}

Vector deq_preactivation(const ToyDeqModel& model, const Vector& x, const Vector& z) {
  Vector pre = model.W.matvec(z);
  axpy_in_place(1.0, model.U.matvec(x), pre);
  axpy_in_place(1.0, model.b, pre);
  return pre;
}

Vector deq_residual(const ToyDeqModel& model, const Vector& x, const Vector& z) {
  Vector pre = deq_preactivation(model, x, z);
  Vector g(z);
  for (std::size_t i = 0; i < g.size(); ++i) g[i] -= std::tanh(pre[i]);
  return g;
}

Vector deq_vjp(const ToyDeqModel& model, const Vector& x, const Vector& z, const Vector& v) {
  const Vector pre = deq_preactivation(model, x, z);
  Vector dv(v);
  for (std::size_t i = 0; i < dv.size(); ++i) {
    const double t = std::tanh(pre[i]);
    dv[i] *= 1.0 - t * t;
  }
  Vector out(v);
  axpy_in_place(-1.0, model.W.matvec_transpose(dv), out);
  return out;
}

Vector deq_jvp(const ToyDeqModel& model, const Vector& x, const Vector& z, const Vector& u) {
  const Vector pre = deq_preactivation(model, x, z);
  Vector wu = model.W.matvec(u);
  Vector out(u);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double t = std::tanh(pre[i]);
    out[i] -= (1.0 - t * t) * wu[i];
  }
  return out;
}

SolveResult deq_forward(const ToyDeqModel& model, const Vector& x, DeqSolver solver,
                        const QNConfig& cfg, const Vector* target) {
  auto g = [&](const Vector& z) { return deq_residual(model, x, z); };
  const Vector z0 = zeros(static_cast<std::size_t>(model.d));
  if (solver == DeqSolver::broyden) {
    QNConfig plain = cfg;
    plain.opa_frequency.reset();  // OPA lives in the adjoint Broyden path
    return broyden_solve(g, z0, plain);
  }
  auto vjp = [&](const Vector& v, const Vector& z) { return deq_vjp(model, x, z, v); };
  VectorFn outer_grad;
  if (target && cfg.opa_frequency) {
    const Vector t = *target;
    outer_grad = [&model, t](const Vector& z) {
      Vector e = add(model.R.matvec(z), model.c);
      axpy_in_place(-1.0, t, e);
      return model.R.matvec_transpose(e);
    };
  }
  QNConfig ab = cfg;
  if (!outer_grad) ab.opa_frequency.reset();
  return adjoint_broyden_solve(g, vjp, outer_grad, z0, ab);
}

namespace {

struct LeftVectorOut {
  Vector w;
  int iterations = 0;
  bool fallback = false;
};

LeftVectorOut backend_left_vector(const ToyDeqModel& model, const Vector& x,
                                  const SolveResult& fwd, const Vector& grad_l,
                                  const HypergradMethod& method) {
  auto adjoint_residual = [&](const Vector& w) {
    return sub(deq_vjp(model, x, fwd.z_star, w), grad_l);
  };
  auto run_refine = [&](const Vector& init, int steps, const LowRankInverseOperator* op) {
    QNConfig cfg;
    cfg.tol = 1e-15 * norm(grad_l);
    cfg.max_iter = steps;
    cfg.memory = 30;
    LowRankInverseOperator op0 =
        op ? op->adjoint() : LowRankInverseOperator(grad_l.size(), cfg.memory);
    return broyden_solve_from(adjoint_residual, init, cfg, std::move(op0));
  };

  LeftVectorOut out;
  switch (method.kind) {
    case HypergradKind::exact: {
      QNConfig cfg;
      cfg.tol = method.exact_tol * norm(grad_l);
      cfg.max_iter = method.exact_max_iter;
      cfg.memory = 30;
      LowRankInverseOperator op0 = method.warm_start_operator
                                       ? fwd.inverse_op.adjoint()
                                       : LowRankInverseOperator(grad_l.size(), cfg.memory);
      SolveResult sr = broyden_solve_from(adjoint_residual, grad_l, cfg, std::move(op0));
      out.w = std::move(sr.z_star);
      out.iterations = sr.iterations;
      return out;
    }
    case HypergradKind::shine: {
      out.w = fwd.inverse_op.apply_adjoint(grad_l);
      if (method.fallback_ratio) {
        auto [sel, trig] = fallback_select(out.w, grad_l, *method.fallback_ratio);
        out.w = std::move(sel);
        out.fallback = trig;
      }
      if (method.refine_steps > 0) {
        SolveResult sr = run_refine(out.w, method.refine_steps,
                                    method.warm_start_operator ? &fwd.inverse_op : nullptr);
        out.w = std::move(sr.z_star);
        out.iterations = sr.iterations;
      }
      return out;
    }
    case HypergradKind::jacobian_free: {
      out.w = grad_l;
      if (method.refine_steps > 0) {
        SolveResult sr = run_refine(out.w, method.refine_steps, nullptr);
        out.w = std::move(sr.z_star);
        out.iterations = sr.iterations;
      }
      return out;
    }
  }
  throw std::logic_error("unreachable");
}

}  // namespace

DeqGrads deq_param_grad(const ToyDeqModel& model, const DeqBatch& batch,
                        const HypergradMethod& method, const QNConfig& cfg, DeqSolver solver) {
  if (batch.inputs.size() != batch.targets.size())
    throw DimensionMismatch("batch inputs/targets row mismatch");
  const auto n = batch.inputs.size();
  const auto du = static_cast<std::size_t>(model.d);
  const auto mu = static_cast<std::size_t>(model.m);
  const auto ku = static_cast<std::size_t>(model.k);

  DeqGrads grads;
  grads.dW = DenseMatrix(du, du, 0.0);
  grads.dU = DenseMatrix(du, mu, 0.0);
  grads.dR = DenseMatrix(ku, du, 0.0);
  grads.db = zeros(du);
  grads.dc = zeros(ku);

  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Vector& x = batch.inputs[i];
    const Vector& target = batch.targets[i];

    const SolveResult fwd = deq_forward(model, x, solver, cfg, &target);
    grads.forward_iterations += fwd.iterations;
    grads.sample_converged.push_back(fwd.converged);

    const Vector& zs = fwd.z_star;
    Vector err = add(model.R.matvec(zs), model.c);
    axpy_in_place(-1.0, target, err);
    grads.loss += 0.5 * dot(err, err) * inv_n;

    // Explicit readout gradients.
    for (std::size_t r = 0; r < ku; ++r) {
      for (std::size_t cidx = 0; cidx < du; ++cidx)
        grads.dR(r, cidx) += err[r] * zs[cidx] * inv_n;
      grads.dc[r] += err[r] * inv_n;
    }

    // Implicit part through the equilibrium.
    const Vector grad_l = model.R.matvec_transpose(err);
    LeftVectorOut left = backend_left_vector(model, x, fwd, grad_l, method);
    grads.backward_iterations += left.iterations;
    if (left.fallback) ++grads.fallback_count;

    const Vector pre = deq_preactivation(model, x, zs);
    Vector wd = left.w;
    for (std::size_t r = 0; r < du; ++r) {
      const double t = std::tanh(pre[r]);
      wd[r] *= 1.0 - t * t;
    }
    // -w^T dg/dW = +(w . sigma') z^T, likewise for U and b
    for (std::size_t r = 0; r < du; ++r) {
      const double coef = wd[r] * inv_n;
      for (std::size_t cidx = 0; cidx < du; ++cidx) grads.dW(r, cidx) += coef * zs[cidx];
      for (std::size_t cidx = 0; cidx < mu; ++cidx) grads.dU(r, cidx) += coef * x[cidx];
      grads.db[r] += coef;
    }
  }
  return grads;
}

Vector flatten_grads(const DeqGrads& grads) {
  Vector out;
  out.reserve(grads.dW.data().size() + grads.dU.data().size() + grads.db.size() +
              grads.dR.data().size() + grads.dc.size());
  for (double v : grads.dW.data()) out.push_back(v);
  for (double v : grads.dU.data()) out.push_back(v);
  for (double v : grads.db) out.push_back(v);
  for (double v : grads.dR.data()) out.push_back(v);
  for (double v : grads.dc) out.push_back(v);
  return out;
}

namespace {

double model_param_norm(const ToyDeqModel& model) {
  double acc = 0.0;
  for (double v : model.W.data()) acc += v * v;
  for (double v : model.U.data()) acc += v * v;
  for (double v : model.b) acc += v * v;
  for (double v : model.R.data()) acc += v * v;
  for (double v : model.c) acc += v * v;
  return std::sqrt(acc);
}

void apply_step(ToyDeqModel& model, const DeqGrads& grads, double lr) {
  for (std::size_t i = 0; i < model.W.data().size(); ++i)
    model.W.data()[i] -= lr * grads.dW.data()[i];
  for (std::size_t i = 0; i < model.U.data().size(); ++i)
    model.U.data()[i] -= lr * grads.dU.data()[i];
  for (std::size_t i = 0; i < model.b.size(); ++i) model.b[i] -= lr * grads.db[i];
  for (std::size_t i = 0; i < model.R.data().size(); ++i)
    model.R.data()[i] -= lr * grads.dR.data()[i];
  for (std::size_t i = 0; i < model.c.size(); ++i) model.c[i] -= lr * grads.dc[i];
}

}  // namespace

RunTrace deq_train(ToyDeqModel& model, const DeqBatch& batch, const HypergradMethod& method,
                   double lr, int steps, const QNConfig& cfg, DeqSolver solver) {
  if (!(lr >= 0.0)) throw std::invalid_argument("learning rate must be non-negative");
  RunTrace trace;
  trace.command = "deq-train";
  trace.problem = "toy-deq";

  HypergradMethod exact;
  exact.kind = HypergradKind::exact;
  exact.exact_tol = 1e-10;
  exact.exact_max_iter = 200;

  const auto t0 = std::chrono::steady_clock::now();
  for (int step = 0; step < steps; ++step) {
    DeqGrads grads;
    try {
      grads = deq_param_grad(model, batch, method, cfg, solver);
    } catch (const NonFiniteIterate&) {
      TraceRow row;
      row.outer_iter = step;
      row.theta = {model_param_norm(model)};
      row.status = "diverged";
      row.cumulative_seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      trace.rows.push_back(std::move(row));
      return trace;
    }

    TraceRow row;
    row.outer_iter = step;
    row.theta = {model_param_norm(model)};
    row.train_loss = grads.loss;
    row.val_loss = grads.loss;
    row.inner_iters = grads.forward_iterations;
    row.backward_iters = grads.backward_iterations;
    row.fallback_count = grads.fallback_count;
    row.inner_tol = cfg.tol;
    if (step % 10 == 0) {
      const DeqGrads exact_grads = deq_param_grad(model, batch, exact, cfg, DeqSolver::broyden);
      row.cosine_vs_exact = cosine_similarity(flatten_grads(grads), flatten_grads(exact_grads));
    }
    row.cumulative_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    if (!std::isfinite(grads.loss) || grads.loss > 1e6) {
      row.status = "diverged";
      trace.rows.push_back(std::move(row));
      return trace;
    }
    trace.rows.push_back(std::move(row));
    apply_step(model, grads, lr);
  }
  return trace;
}

double nonlinear_power_method(const std::function<Vector(const Vector&)>& f, const Vector& u0,
                              int iters) {
  const double n0 = norm(u0);
  if (n0 == 0.0) throw std::invalid_argument("power method needs a nonzero start vector");
  Vector u = scaled(u0, 1.0 / n0);
  double growth = 0.0;
  for (int i = 0; i < iters; ++i) {
    const Vector fu = f(u);
    growth = norm(fu);
    if (growth < 1e-14) throw ZeroImage("image annihilated at iteration " + std::to_string(i));
    u = scaled(fu, 1.0 / growth);
  }
  return growth;
}

}  // namespace shine
