#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <memory>
#include <random>

#include "shine/numkit.hpp"
#include "shine/problems.hpp"
#include "shine/qn.hpp"

using namespace shine;

namespace {

Vector random_vector(std::mt19937_64& rng, std::size_t d, double scale = 1.0) {
  std::normal_distribution<double> gauss(0.0, scale);
  Vector v(d);
  for (double& x : v) x = gauss(rng);
  return v;
}

// Strongly convex quadratic r(z) = 1/2 z^T A z - b^T z packaged as a
// bi-level problem; dg/dtheta is fixed to z (the regularizer pattern).
BilevelProblem quadratic_problem(DenseMatrix A, Vector b) {
  auto mat = std::make_shared<DenseMatrix>(std::move(A));
  auto rhs = std::make_shared<Vector>(std::move(b));
  BilevelProblem p;
  p.name = "test-quadratic";
  p.dim = static_cast<int>(rhs->size());
  p.theta_dim = 1;
  p.symmetric_inner = true;
  p.theta0 = {0.0};
  p.inner_objective = [mat, rhs](const Vector&, const Vector& z) {
    return 0.5 * dot(z, mat->matvec(z)) - dot(*rhs, z);
  };
  p.inner_residual = [mat, rhs](const Vector&, const Vector& z) {
    return sub(mat->matvec(z), *rhs);
  };
  p.inner_jvp = [mat](const Vector&, const Vector&, const Vector& v) { return mat->matvec(v); };
  p.inner_vjp = p.inner_jvp;
  p.dg_dtheta_action = [](const Vector&, const Vector& z, const Vector& dt) {
    return scaled(z, dt.at(0));
  };
  p.dg_dtheta_adjoint = [](const Vector&, const Vector& z, const Vector& w) {
    return Vector{dot(w, z)};
  };
  p.outer_loss = [](const Vector&, const Vector& z) { return 0.5 * dot(z, z); };
  p.outer_grad = [](const Vector&, const Vector& z) { return z; };
  return p;
}

DenseMatrix diag_matrix(const Vector& d) {
  DenseMatrix A(d.size(), d.size(), 0.0);
  for (std::size_t i = 0; i < d.size(); ++i) A(i, i) = d[i];
  return A;
}

}  // namespace

// ---------------------------------------------------------------------------
// wolfe_line_search
// ---------------------------------------------------------------------------

TEST_CASE("wolfe accepts the unit step on (alpha-1)^2") {
  auto phi = [](double a) { return (a - 1.0) * (a - 1.0); };
  const auto out = wolfe_line_search(phi, -2.0, WolfeParams{});
  CHECK(out.alpha == 1.0);
}

TEST_CASE("wolfe-accepted steps satisfy both conditions") {
  WolfeParams params;
  auto phi = [](double a) { return (a - 0.3) * (a - 0.3); };
  auto dphi = [](double a) { return 2.0 * (a - 0.3); };
  const double dphi0 = dphi(0.0);
  const auto out = wolfe_line_search(phi, dphi0, params, dphi);
  CHECK(phi(out.alpha) <= phi(0.0) + params.c1 * out.alpha * dphi0);
  CHECK(dphi(out.alpha) >= params.c2 * dphi0);
}

TEST_CASE("non-descent slope raises NotDescentDirection") {
  auto phi = [](double a) { return a * a; };
  CHECK_THROWS_AS(wolfe_line_search(phi, +1.0, WolfeParams{}), NotDescentDirection);
  CHECK_THROWS_AS(wolfe_line_search(phi, 0.0, WolfeParams{}), NotDescentDirection);
}

TEST_CASE("exhausted backtracks raise LineSearchFailed") {
  WolfeParams tight;
  tight.max_backtracks = 2;
  // Sufficient decrease fails until alpha ~ 1e-4
  auto phi = [](double a) { return a <= 1e-4 ? -a : 10.0 * a; };
  CHECK_THROWS_AS(wolfe_line_search(phi, -1.0, tight), LineSearchFailed);
}

// ---------------------------------------------------------------------------
// broyden_solve
// ---------------------------------------------------------------------------

TEST_CASE("identity Jacobian converges in one step") {
  const Vector c = {2.0, -1.0, 0.5};
  auto g = [&](const Vector& z) { return sub(z, c); };
  QNConfig cfg;
  cfg.tol = 1e-12;
  const SolveResult res = broyden_solve(g, zeros(3), cfg);
  CHECK(res.converged);
  CHECK(res.iterations == 1);
  CHECK(norm(sub(res.z_star, c)) <= 1e-14);
}

TEST_CASE("scalar 2z-4 takes the textbook two steps") {
  auto g = [](const Vector& z) { return Vector{2.0 * z[0] - 4.0}; };
  QNConfig cfg;
  cfg.tol = 1e-12;
  const SolveResult res = broyden_solve(g, {0.0}, cfg);
  CHECK(res.converged);
  CHECK(res.iterations == 2);
  REQUIRE(res.iterates.size() == 3);
  CHECK(res.iterates[1][0] == doctest::Approx(4.0));  // first step with B_0 = I
  CHECK(res.iterates[2][0] == doctest::Approx(2.0));  // B_1 = 2 fixes it
  // the operator ended at B^-1 = 0.5
  CHECK(res.inverse_op.apply({1.0})[0] == doctest::Approx(0.5));
}

TEST_CASE("mildly nonlinear 2-d system reaches the closed-form root") {
  auto g = [](const Vector& z) { return Vector{z[0] + z[1] * z[1] - 1.0, z[1]}; };
  QNConfig cfg;
  cfg.tol = 1e-10;
  cfg.max_iter = 100;
  const SolveResult res = broyden_solve(g, {0.0, 0.5}, cfg);
  CHECK(res.converged);
  CHECK(res.residual_norms.back() <= 1e-10);
  CHECK(std::abs(res.z_star[0] - 1.0) <= 1e-8);
  CHECK(std::abs(res.z_star[1]) <= 1e-8);
}

TEST_CASE("broyden inverse secant holds at the final accepted pair") {
  auto rng = std::mt19937_64(3);
  const std::size_t d = 6;
  DenseMatrix A = DenseMatrix::identity(d);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) A(i, j) += 0.2 * random_vector(rng, 1)[0];
  const Vector b = random_vector(rng, d);
  auto g = [&](const Vector& z) { return sub(A.matvec(z), b); };
  QNConfig cfg;
  cfg.tol = 1e-11;
  cfg.max_iter = 200;
  const SolveResult res = broyden_solve(g, zeros(d), cfg);
  REQUIRE(res.converged);
  REQUIRE(res.iterates.size() >= 2);
  const Vector& z_prev = res.iterates[res.iterates.size() - 2];
  const Vector& z_last = res.iterates.back();
  const Vector s = sub(z_last, z_prev);
  const Vector y = sub(g(z_last), g(z_prev));
  CHECK(norm(sub(res.inverse_op.apply(y), s)) <= 1e-10 * std::max(1.0, norm(s)));
}

TEST_CASE("non-finite residuals abort with the trace") {
  auto g = [](const Vector& z) {
    if (std::abs(z[0]) > 0.5) return Vector{std::numeric_limits<double>::quiet_NaN()};
    return Vector{z[0] + 1.0};
  };
  QNConfig cfg;
  cfg.tol = 1e-12;
  try {
    broyden_solve(g, {0.0}, cfg);
    FAIL("expected NonFiniteIterate");
  } catch (const NonFiniteIterate& e) {
    CHECK(e.iteration == 1);
    CHECK(e.residual_trace.size() == 1);
  }
}

// ---------------------------------------------------------------------------
// update rules
// ---------------------------------------------------------------------------

TEST_CASE("inverse BFGS update enforces H y = s on curvature-consistent streams") {
  auto rng = std::mt19937_64(17);
  const std::size_t d = 7;
  // pairs come from a fixed SPD model, the way a solver would produce them
  Vector eigs(d);
  std::uniform_real_distribution<double> uni(0.5, 6.0);
  for (double& e : eigs) e = uni(rng);
  const DenseMatrix A = diag_matrix(eigs);

  LowRankInverseOperator op(d);
  int accepted = 0;
  for (int k = 0; k < 200; ++k) {
    const Vector s = random_vector(rng, d);
    const Vector y = A.matvec(s);
    const auto before_size = op.size();
    const PushStatus st = push_inverse_bfgs(op, s, y);
    if (st == PushStatus::applied) {
      ++accepted;
      CHECK(norm(sub(op.apply(y), s)) <= 1e-10 * (norm(s) + norm(op.apply(y))));
    } else {
      CHECK(op.size() == before_size);
    }
  }
  CHECK(accepted == 200);

  // arbitrary pairs with negative curvature are rejected outright
  const Vector s = random_vector(rng, d);
  CHECK(push_inverse_bfgs(op, s, scaled(s, -1.0)) == PushStatus::skipped_nonpositive_curvature);
}

TEST_CASE("rejected BFGS updates leave the operator bit-identical") {
  LowRankInverseOperator op(2);
  REQUIRE(push_inverse_bfgs(op, {1.0, 0.0}, {2.0, 0.0}) == PushStatus::applied);
  const auto before = op.corrections();
  CHECK(push_inverse_bfgs(op, {1.0, 0.0}, {-1.0, 0.0}) ==
        PushStatus::skipped_nonpositive_curvature);
  REQUIRE(op.size() == before.size());
  for (std::size_t i = 0; i < before.size(); ++i) {
    CHECK(op.corrections()[i].u == before[i].u);
    CHECK(op.corrections()[i].w == before[i].w);
  }
}

TEST_CASE("BFGS operators stay symmetric as a whole") {
  auto rng = std::mt19937_64(23);
  const std::size_t d = 5;
  LowRankInverseOperator op(d);
  for (int k = 0; k < 10; ++k) {
    Vector s = random_vector(rng, d);
    Vector y = random_vector(rng, d);
    if (dot(s, y) <= 0) for (double& v : y) v = -v;
    push_inverse_bfgs(op, s, y);
  }
  const Vector a = random_vector(rng, d);
  const Vector b = random_vector(rng, d);
  CHECK(dot(a, op.apply(b)) == doctest::Approx(dot(b, op.apply(a))).epsilon(1e-10));
}

TEST_CASE("adjoint Broyden update enforces the row secant") {
  auto rng = std::mt19937_64(29);
  const std::size_t d = 5;
  DenseMatrix J = DenseMatrix::identity(d);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) J(i, j) += 0.3 * random_vector(rng, 1)[0];

  LowRankInverseOperator op(d);
  for (int k = 0; k < 8; ++k) {
    const Vector w = random_vector(rng, d);
    const Vector jac_row = J.matvec_transpose(w);  // (w^T J)^T
    if (push_adjoint_broyden(op, w, jac_row) != PushStatus::applied) continue;

    // inverse form of the secant
    CHECK(norm(sub(op.apply_adjoint(jac_row), w)) <= 1e-10 * std::max(1.0, norm(w)));

    // dense cross-check: w^T B == w^T J in that direction
    const DenseMatrix H = densify([&](const Vector& v) { return op.apply(v); }, d);
    const DenseMatrix B = dense_inverse(H);
    const Vector wtB = B.matvec_transpose(w);
    CHECK(norm(sub(wtB, jac_row)) <= 1e-8 * std::max(1.0, norm(jac_row)));
  }
}

// ---------------------------------------------------------------------------
// lbfgs_opa_solve
// ---------------------------------------------------------------------------

TEST_CASE("lbfgs minimizes the diag(1,2) quadratic quickly") {
  const auto p = quadratic_problem(diag_matrix({1.0, 2.0}), zeros(2));
  QNConfig cfg;
  cfg.tol = 1e-10;
  cfg.max_iter = 20;
  const SolveResult res = lbfgs_opa_solve(p, {0.0}, {1.0, 1.0}, cfg, WolfeParams{});
  CHECK(res.converged);
  CHECK(res.iterations <= 20);
  CHECK(norm(res.z_star) <= 1e-9);
  CHECK(res.op_is_symmetric);
}

TEST_CASE("lbfgs final operator satisfies the last regular secant") {
  const auto p = quadratic_problem(diag_matrix({1.0, 3.0, 5.0, 7.0}), {1.0, 1.0, 1.0, 1.0});
  QNConfig cfg;
  cfg.tol = 1e-11;
  const SolveResult res = lbfgs_opa_solve(p, {0.0}, {2.0, -1.0, 0.5, 1.5}, cfg, WolfeParams{});
  REQUIRE(res.converged);
  REQUIRE(res.iterates.size() >= 2);
  const Vector& z_prev = res.iterates[res.iterates.size() - 2];
  const Vector& z_last = res.iterates.back();
  const Vector s = sub(z_last, z_prev);
  const Vector y = sub(p.inner_residual({0.0}, z_last), p.inner_residual({0.0}, z_prev));
  CHECK(norm(sub(res.inverse_op.apply(y), s)) <= 1e-10 * std::max(1.0, norm(s)));
}

TEST_CASE("lbfgs operator is positive definite on random probes") {
  auto rng = std::mt19937_64(31);
  const auto p = quadratic_problem(diag_matrix({1.0, 2.0, 4.0, 8.0, 16.0}),
                                   random_vector(rng, 5));
  QNConfig cfg;
  cfg.tol = 1e-10;
  const SolveResult res = lbfgs_opa_solve(p, {0.0}, random_vector(rng, 5), cfg, WolfeParams{});
  REQUIRE(res.converged);
  for (int probe = 0; probe < 100; ++probe) {
    const Vector v = random_vector(rng, 5);
    CHECK(dot(v, res.inverse_op.apply(v)) > 0.0);
  }
}

TEST_CASE("lbfgs operator stays positive definite on logistic regression solves") {
  auto rng = std::mt19937_64(37);
  const auto split = split_dataset(synth_logreg_data(200, 10, 37, 0.3), 0.8, 0.1, 0.1, 37);
  const auto p = make_l2_logreg(split);
  for (std::optional<int> opa : {std::optional<int>{}, std::optional<int>{5}}) {
    QNConfig cfg;
    cfg.tol = 1e-10;
    cfg.opa_frequency = opa;
    const SolveResult res =
        lbfgs_opa_solve(p, {-2.0}, random_vector(rng, 10), cfg, WolfeParams{});
    REQUIRE(res.converged);
    for (int probe = 0; probe < 100; ++probe) {
      const Vector v = random_vector(rng, 10);
      CHECK(dot(v, res.inverse_op.apply(v)) > 0.0);
    }
  }
}

TEST_CASE("OPA extra updates only touch the operator: zero target reproduces the plain run") {
  auto p = quadratic_problem(diag_matrix({1.0, 2.0, 3.0}), {1.0, -1.0, 2.0});
  p.dg_dtheta_action = [](const Vector&, const Vector& z, const Vector&) {
    return zeros(z.size());
  };
  QNConfig plain;
  plain.tol = 1e-10;
  QNConfig with_opa = plain;
  with_opa.opa_frequency = 2;

  const SolveResult a = lbfgs_opa_solve(p, {0.0}, {1.0, 1.0, 1.0}, plain, WolfeParams{});
  const SolveResult b = lbfgs_opa_solve(p, {0.0}, {1.0, 1.0, 1.0}, with_opa, WolfeParams{});

  REQUIRE(a.iterates.size() == b.iterates.size());
  for (std::size_t i = 0; i < a.iterates.size(); ++i) CHECK(a.iterates[i] == b.iterates[i]);
  // the rejected extra updates are still logged on schedule
  REQUIRE_FALSE(b.opa_events.empty());
  for (const OpaEvent& ev : b.opa_events) {
    CHECK(ev.iteration % 2 == 0);
    CHECK_FALSE(ev.accepted);
  }
}

TEST_CASE("accepted OPA updates keep the extra secant") {
  const auto p = quadratic_problem(diag_matrix({1.0, 2.0, 4.0}), {1.0, 1.0, 1.0});
  QNConfig cfg;
  cfg.tol = 1e-12;
  cfg.opa_frequency = 1;
  const SolveResult res = lbfgs_opa_solve(p, {0.0}, {1.0, 0.5, -0.5}, cfg, WolfeParams{});
  REQUIRE(res.converged);
  int accepted = 0;
  for (const OpaEvent& ev : res.opa_events) accepted += ev.accepted ? 1 : 0;
  CHECK(accepted > 0);  // quadratic: e^T (A e) > 0 whenever e != 0
}

TEST_CASE("OPA improves the inverse along the prescribed direction (18/20 seeds)") {
  int improved = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto rng = std::mt19937_64(seed);
    const std::size_t d = 10;
    Vector eigs(d);
    std::uniform_real_distribution<double> uni(0.5, 8.0);
    for (double& e : eigs) e = uni(rng);
    const DenseMatrix A = diag_matrix(eigs);
    const Vector b = random_vector(rng, d);
    const auto p = quadratic_problem(A, b);
    const Vector z0 = random_vector(rng, d);

    QNConfig cfg;
    cfg.tol = 1e-16;  // run the full budget
    cfg.max_iter = 12;
    cfg.memory = QNConfig::kUnboundedMemory;
    QNConfig cfg_opa = cfg;
    cfg_opa.opa_frequency = 5;

    const SolveResult plain = lbfgs_opa_solve(p, {0.0}, z0, cfg, WolfeParams{});
    const SolveResult opa = lbfgs_opa_solve(p, {0.0}, z0, cfg_opa, WolfeParams{});

    auto direction_error = [&](const SolveResult& res) {
      const Vector v = res.z_star;  // dg/dtheta at the final iterate
      const Vector approx = res.inverse_op.apply(v);
      const Vector exact = dense_solve(A, v);
      return norm(sub(approx, exact));
    };
    if (direction_error(opa) < direction_error(plain)) ++improved;
  }
  CHECK(improved >= 18);
}

TEST_CASE("line search failure returns best-so-far with converged=false") {
  // Steep quartic: the unit step from z=2 overshoots to z=-30 and inflates
  // the residual, so a zero-budget search has no recourse.
  BilevelProblem p;
  p.dim = 1;
  p.theta_dim = 1;
  p.symmetric_inner = true;
  p.theta0 = {0.0};
  p.inner_objective = [](const Vector&, const Vector& z) { return std::pow(z[0], 4.0); };
  p.inner_residual = [](const Vector&, const Vector& z) {
    return Vector{4.0 * z[0] * z[0] * z[0]};
  };
  p.inner_jvp = [](const Vector&, const Vector& z, const Vector& v) {
    return Vector{12.0 * z[0] * z[0] * v[0]};
  };
  p.inner_vjp = p.inner_jvp;
  p.dg_dtheta_action = [](const Vector&, const Vector& z, const Vector&) { return z; };
  p.dg_dtheta_adjoint = [](const Vector&, const Vector& z, const Vector& w) {
    return Vector{dot(w, z)};
  };
  p.outer_loss = [](const Vector&, const Vector& z) { return 0.5 * dot(z, z); };
  p.outer_grad = [](const Vector&, const Vector& z) { return z; };

  QNConfig cfg;
  cfg.tol = 1e-12;
  WolfeParams broken;
  broken.max_backtracks = 0;
  const SolveResult res = lbfgs_opa_solve(p, {0.0}, {2.0}, cfg, broken);
  CHECK_FALSE(res.converged);
  CHECK(res.line_search_failed);
  CHECK(res.z_star == Vector{2.0});
}

// ---------------------------------------------------------------------------
// adjoint_broyden_solve
// ---------------------------------------------------------------------------

TEST_CASE("adjoint Broyden solves diag(1,3) z = (1,3)") {
  DenseMatrix A = diag_matrix({1.0, 3.0});
  const Vector b = {1.0, 3.0};
  auto g = [&](const Vector& z) { return sub(A.matvec(z), b); };
  auto vjp = [&](const Vector& v, const Vector&) { return A.matvec_transpose(v); };
  QNConfig cfg;
  cfg.tol = 1e-10;
  cfg.max_iter = 100;
  const SolveResult res = adjoint_broyden_solve(g, vjp, {}, zeros(2), cfg);
  CHECK(res.converged);
  CHECK(std::abs(res.z_star[0] - 1.0) <= 1e-8);
  CHECK(std::abs(res.z_star[1] - 1.0) <= 1e-8);
  CHECK_FALSE(res.op_is_symmetric);
}

TEST_CASE("adjoint Broyden with OPA M=1 drives the SHINE left vector to the dense row") {
  auto rng = std::mt19937_64(101);
  const std::size_t d = 5;
  DenseMatrix A = DenseMatrix::identity(d);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) A(i, j) += 0.4 * random_vector(rng, 1)[0];
  const Vector b = random_vector(rng, d);
  const Vector grad_l = random_vector(rng, d);

  auto g = [&](const Vector& z) { return sub(A.matvec(z), b); };
  auto vjp = [&](const Vector& v, const Vector&) { return A.matvec_transpose(v); };
  auto outer = [&](const Vector&) { return grad_l; };

  QNConfig cfg;
  cfg.tol = 1e-12;
  cfg.max_iter = 300;
  cfg.memory = QNConfig::kUnboundedMemory;
  cfg.opa_frequency = 1;
  const SolveResult res = adjoint_broyden_solve(g, vjp, outer, zeros(d), cfg);
  REQUIRE(res.converged);

  const Vector left = res.inverse_op.apply_adjoint(grad_l);
  // dense oracle for grad_l^T J^-1
  DenseMatrix At(d, d, 0.0);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) At(i, j) = A(j, i);
  const Vector exact = dense_solve(At, grad_l);
  CHECK(norm(sub(left, exact)) <= 1e-6 * norm(exact));
}

TEST_CASE("adjoint Broyden OPA needs the outer gradient") {
  auto g = [](const Vector& z) { return z; };
  auto vjp = [](const Vector& v, const Vector&) { return v; };
  QNConfig cfg;
  cfg.opa_frequency = 1;
  CHECK_THROWS_AS(adjoint_broyden_solve(g, vjp, {}, {1.0}, cfg), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// empirical q-superlinear convergence
// ---------------------------------------------------------------------------

namespace {

// Per-step error ratios oscillate for quasi-Newton methods even on
// quadratics, so the superlinear signature is asserted on 5-step windows:
// the geometric-mean contraction factor of the final window must undercut an
// earlier window's and show clear contraction.
std::vector<double> clean_errors(const std::vector<Vector>& iterates, const Vector& z_true,
                                 double floor) {
  std::vector<double> errs;
  for (const Vector& z : iterates) {
    const double e = norm(sub(z, z_true));
    if (e > floor) errs.push_back(e);
  }
  return errs;
}

double window_contraction(const std::vector<double>& errs, std::size_t end, std::size_t w) {
  return std::pow(errs[end] / errs[end - w], 1.0 / static_cast<double>(w));
}

void check_superlinear_tail(const std::vector<Vector>& iterates, const Vector& z_true,
                            double floor, bool against_first_window) {
  const auto errs = clean_errors(iterates, z_true, floor);
  REQUIRE(errs.size() >= 11);
  const std::size_t last = errs.size() - 1;
  const double tail = window_contraction(errs, last, 5);
  const double earlier =
      against_first_window ? window_contraction(errs, 5, 5) : window_contraction(errs, last - 5, 5);
  CHECK(tail < earlier);
  CHECK(tail < 0.5);
}

// Smooth non-contractive tanh layer; a long superlinear trajectory for the
// Broyden-family solvers.
struct TanhLayer {
  DenseMatrix W;
  Vector c;

  Vector residual(const Vector& z) const {
    Vector pre = W.matvec(z);
    axpy_in_place(1.0, c, pre);
    Vector out(z);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= std::tanh(pre[i]);
    return out;
  }
  Vector vjp(const Vector& v, const Vector& z) const {
    Vector pre = W.matvec(z);
    axpy_in_place(1.0, c, pre);
    Vector dv(v);
    for (std::size_t i = 0; i < dv.size(); ++i) {
      const double t = std::tanh(pre[i]);
      dv[i] *= 1.0 - t * t;
    }
    Vector out(v);
    axpy_in_place(-1.0, W.matvec_transpose(dv), out);
    return out;
  }
};

TanhLayer make_tanh_layer(std::size_t d, std::uint64_t seed, double scale) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  TanhLayer s;
  s.W = DenseMatrix(d, d, 0.0);
  s.c = Vector(d);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j)
      s.W(i, j) = scale * gauss(rng) / std::sqrt(static_cast<double>(d));
  for (double& x : s.c) x = gauss(rng);
  return s;
}

}  // namespace

TEST_CASE("lbfgs converges q-superlinearly on a strongly convex quadratic") {
  const Vector eigs = {1.0, 1.7, 2.9, 4.2, 5.5, 6.1, 7.3, 8.8, 9.4, 10.0};
  const DenseMatrix A = diag_matrix(eigs);
  auto rng = std::mt19937_64(7);
  const Vector b = random_vector(rng, 10);
  const Vector z_true = dense_solve(A, b);
  const auto p = quadratic_problem(A, b);

  QNConfig cfg;
  cfg.tol = 1e-10;
  cfg.max_iter = 300;
  for (const bool with_opa : {false, true}) {
    QNConfig run_cfg = cfg;
    if (with_opa) run_cfg.opa_frequency = 5;
    const SolveResult res =
        lbfgs_opa_solve(p, {0.0}, random_vector(rng, 10, 20.0), run_cfg, WolfeParams{});
    REQUIRE(res.converged);
    check_superlinear_tail(res.iterates, z_true, 1e-9, false);
  }
}

TEST_CASE("broyden converges q-superlinearly on a smooth nonlinear system") {
  const auto sys = make_tanh_layer(16, 5, 1.2);
  auto g = [&](const Vector& z) { return sys.residual(z); };
  QNConfig cfg;
  cfg.tol = 1e-12;
  cfg.max_iter = 300;
  cfg.memory = QNConfig::kUnboundedMemory;
  const SolveResult res = broyden_solve(g, zeros(16), cfg);
  REQUIRE(res.converged);
  check_superlinear_tail(res.iterates, res.z_star, 1e-10, true);
}

TEST_CASE("solvers stay well-behaved across a randomized problem sweep") {
  // No crashes, finite outputs, and converged results honoring their
  // tolerance, across benign and hostile fixtures alike.
  auto rng = std::mt19937_64(71);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t d = 2 + static_cast<std::size_t>(trial % 7);
    const double scale = (trial % 5 == 0) ? 3.0 : 0.9;  // occasionally expansive maps
    const auto sys = make_tanh_layer(d, 1000 + static_cast<std::uint64_t>(trial), scale);
    auto g = [&](const Vector& z) { return sys.residual(z); };
    auto vjp = [&](const Vector& v, const Vector& z) { return sys.vjp(v, z); };
    const Vector gl = random_vector(rng, d);
    auto outer = [&](const Vector&) { return gl; };

    QNConfig cfg;
    cfg.tol = 1e-8;
    cfg.max_iter = 60;
    cfg.memory = 1 + static_cast<std::size_t>(trial % 12);
    if (trial % 3 == 0) cfg.opa_frequency = 1 + trial % 4;

    QNConfig broyden_cfg = cfg;
    broyden_cfg.opa_frequency.reset();
    broyden_cfg.line_search = trial % 2 ? LineSearchKind::wolfe : LineSearchKind::none;
    try {
      const SolveResult res = broyden_solve(g, random_vector(rng, d), broyden_cfg);
      CHECK(all_finite(res.z_star));
      CHECK(res.converged == (res.residual_norms.back() <= broyden_cfg.tol));
    } catch (const NonFiniteIterate&) {
      // expansive fixtures may legitimately blow up under unit steps
    }

    try {
      const SolveResult res = adjoint_broyden_solve(
          g, vjp, cfg.opa_frequency ? VectorFn(outer) : VectorFn{}, random_vector(rng, d), cfg);
      CHECK(all_finite(res.z_star));
      CHECK(res.converged == (res.residual_norms.back() <= cfg.tol));
    } catch (const NonFiniteIterate&) {
    }

    // random strongly convex quadratic for the BFGS path
    Vector eigs(d);
    std::uniform_real_distribution<double> uni(0.1, 20.0);
    for (double& e : eigs) e = uni(rng);
    const auto p = quadratic_problem(diag_matrix(eigs), random_vector(rng, d));
    const SolveResult res = lbfgs_opa_solve(p, {0.0}, random_vector(rng, d, 5.0), cfg,
                                            WolfeParams{});
    CHECK(all_finite(res.z_star));
    CHECK(res.converged == (res.residual_norms.back() <= cfg.tol));
    if (cfg.opa_frequency) {
      for (const OpaEvent& ev : res.opa_events) CHECK(ev.iteration % *cfg.opa_frequency == 0);
    }
  }
}

TEST_CASE("adjoint broyden converges q-superlinearly with and without OPA") {
  const auto sys = make_tanh_layer(16, 9, 1.2);
  auto rng = std::mt19937_64(9);
  const Vector grad_l = random_vector(rng, 16);
  auto g = [&](const Vector& z) { return sys.residual(z); };
  auto vjp = [&](const Vector& v, const Vector& z) { return sys.vjp(v, z); };
  auto outer = [&](const Vector&) { return grad_l; };
  for (const bool with_opa : {false, true}) {
    QNConfig cfg;
    cfg.tol = 1e-12;
    cfg.max_iter = 300;
    cfg.memory = QNConfig::kUnboundedMemory;
    if (with_opa) cfg.opa_frequency = 5;
    const SolveResult res =
        adjoint_broyden_solve(g, vjp, with_opa ? VectorFn(outer) : VectorFn{}, zeros(16), cfg);
    REQUIRE(res.converged);
    check_superlinear_tail(res.iterates, res.z_star, 1e-10, false);
  }
}
