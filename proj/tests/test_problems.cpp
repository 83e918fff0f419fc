#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "shine/dataio.hpp"
#include "shine/problems.hpp"

using namespace shine;

namespace {

DataSplit small_split(int n, int d, std::uint64_t seed, double noise = 0.2) {
  return split_dataset(synth_logreg_data(n, d, seed, noise), 0.8, 0.1, 0.1, seed);
}

Vector random_vector(std::mt19937_64& rng, std::size_t d, double scale = 1.0) {
  std::normal_distribution<double> gauss(0.0, scale);
  Vector v(d);
  for (double& x : v) x = gauss(rng);
  return v;
}

void check_adjoint_consistency(const BilevelProblem& p, const Vector& theta, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const auto d = static_cast<std::size_t>(p.dim);
  for (int probe = 0; probe < 100; ++probe) {
    const Vector z = random_vector(rng, d);
    const Vector u = random_vector(rng, d);
    const Vector v = random_vector(rng, d);
    const double lhs = dot(v, p.inner_jvp(theta, z, u));
    const double rhs = dot(p.inner_vjp(theta, z, v), u);
    CHECK(std::abs(lhs - rhs) <= 1e-10 * std::max(1.0, std::abs(lhs)));
  }
}

void check_hessian_symmetry(const BilevelProblem& p, const Vector& theta, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const auto d = static_cast<std::size_t>(p.dim);
  for (int probe = 0; probe < 20; ++probe) {
    const Vector z = random_vector(rng, d);
    const Vector a = random_vector(rng, d);
    const Vector b = random_vector(rng, d);
    const double ab = dot(a, p.inner_jvp(theta, z, b));
    const double ba = dot(b, p.inner_jvp(theta, z, a));
    CHECK(std::abs(ab - ba) <= 1e-8 * std::max(1.0, std::abs(ab)));
  }
}

}  // namespace

TEST_CASE("logreg dg/dlambda at z = e1, lambda = 0 is 2 e1") {
  const auto p = make_l2_logreg(small_split(60, 4, 1), Parametrization::log);
  const Vector out = p.dg_dtheta_action({0.0}, unit(4, 0), {1.0});
  CHECK(out[0] == doctest::Approx(2.0));
  for (std::size_t i = 1; i < 4; ++i) CHECK(out[i] == doctest::Approx(0.0));
}

TEST_CASE("logreg residual at the origin matches the closed form") {
  const auto split = small_split(80, 5, 3);
  const auto p = make_l2_logreg(split, Parametrization::linear);
  // sigma(0) = 1/2 and the regularizer vanishes at z = 0:
  // g(0) = -(1/2N) sum y_i x_i
  const Vector g0 = p.inner_residual({0.7}, zeros(5));
  Vector expected(5, 0.0);
  for (const SparseRow& row : split.train.rows) row_axpy(-0.5 * row.label, row, expected);
  for (double& x : expected) x /= static_cast<double>(split.train.rows.size());
  CHECK(norm(sub(g0, expected)) <= 1e-12);
}

TEST_CASE("logreg Hessian action matches finite differences of the residual") {
  const auto p = make_l2_logreg(small_split(50, 4, 5), Parametrization::log);
  std::mt19937_64 rng(5);
  const Vector z = random_vector(rng, 4, 0.5);
  const Vector v = random_vector(rng, 4);
  const Vector theta = {-0.3};
  const Vector hv = p.inner_jvp(theta, z, v);
  const double h = 1e-6;
  Vector zp = z, zm = z;
  axpy_in_place(h, v, zp);
  axpy_in_place(-h, v, zm);
  const Vector fd = scaled(sub(p.inner_residual(theta, zp), p.inner_residual(theta, zm)),
                           0.5 / h);
  for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(hv[i] - fd[i]) <= 1e-4);
}

TEST_CASE("logreg residual is the gradient of the inner objective") {
  const auto p = make_l2_logreg(small_split(40, 3, 9), Parametrization::log);
  std::mt19937_64 rng(11);
  const Vector z = random_vector(rng, 3, 0.4);
  const Vector theta = {0.2};
  const Vector g = p.inner_residual(theta, z);
  const Vector fd = finite_diff_grad(
      [&](const Vector& zz) { return p.inner_objective(theta, zz); }, z, 1e-6);
  CHECK(norm(sub(g, fd)) <= 1e-5 * std::max(1.0, norm(g)));
}

TEST_CASE("logreg curvature is bounded below by the regularizer") {
  const auto p = make_l2_logreg(small_split(60, 4, 13), Parametrization::log);
  std::mt19937_64 rng(13);
  const Vector theta = {0.5};  // lambda; coefficient 2 e^lambda
  const double floor_coef = 2.0 * std::exp(theta[0]);
  for (int probe = 0; probe < 50; ++probe) {
    const Vector z = random_vector(rng, 4);
    const Vector d = random_vector(rng, 4);
    const double curv = dot(d, p.inner_jvp(theta, z, d));
    CHECK(curv >= floor_coef * dot(d, d) - 1e-10);
  }
}

TEST_CASE("logreg adjoint consistency and symmetry") {
  const auto p = make_l2_logreg(small_split(50, 6, 17));
  check_adjoint_consistency(p, {0.1}, 21);
  check_hessian_symmetry(p, {0.1}, 22);
}

TEST_CASE("nls dg/dtheta under the linear parametrization is z") {
  const auto p = make_nls(small_split(50, 2, 19), Parametrization::linear);
  const Vector out = p.dg_dtheta_action({0.4}, {1.0, 2.0}, {1.0});
  CHECK(out[0] == doctest::Approx(1.0));
  CHECK(out[1] == doctest::Approx(2.0));
}

TEST_CASE("nls data gradient at the origin with all-positive labels") {
  // take a split, force labels positive, rebuild
  DataSplit split = small_split(30, 3, 23);
  for (auto* part : {&split.train, &split.validation, &split.test})
    for (SparseRow& row : part->rows) row.label = 1;
  const auto p = make_nls(split, Parametrization::linear);
  // sigma(0) = 1/2, sigma'(0) = 1/4: gradient = sum (0.5 - 1) * 0.25 * x_j
  const Vector g0 = p.inner_residual({0.0}, zeros(3));
  Vector expected(3, 0.0);
  for (const SparseRow& row : split.train.rows) row_axpy(-0.125, row, expected);
  CHECK(norm(sub(g0, expected)) <= 1e-12);
}

TEST_CASE("nls residual is the gradient of the scalar inner objective") {
  const auto p = make_nls(small_split(40, 4, 29), Parametrization::log);
  std::mt19937_64 rng(29);
  const Vector z = random_vector(rng, 4, 0.3);
  const Vector theta = {-0.5};
  const Vector g = p.inner_residual(theta, z);
  const Vector fd = finite_diff_grad(
      [&](const Vector& zz) { return p.inner_objective(theta, zz); }, z, 1e-6);
  for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(g[i] - fd[i]) <= 1e-4);
}

TEST_CASE("nls adjoint consistency and symmetry") {
  const auto p = make_nls(small_split(40, 5, 31));
  check_adjoint_consistency(p, {-1.0}, 33);
  check_hessian_symmetry(p, {-1.0}, 34);
}

TEST_CASE("quadratic oracle closed forms") {
  const Vector a = {1.0, 0.0};
  const auto p = make_quadratic_oracle(a, 1.0);

  const Vector zs = quadratic_oracle_zstar(a, 1.0);
  CHECK(zs[0] == doctest::Approx(0.5));
  CHECK(zs[1] == doctest::Approx(0.0));
  CHECK(norm(p.inner_residual({1.0}, zs)) <= 1e-14);

  // hand-differentiated 1/2 |a|^2 / (1+theta)^2
  CHECK(quadratic_oracle_hypergrad(a, 1.0) == doctest::Approx(-0.125));

  // J action at theta = 1 doubles any vector
  const Vector jv = p.inner_jvp({1.0}, zs, {3.0, -2.0});
  CHECK(jv[0] == doctest::Approx(6.0));
  CHECK(jv[1] == doctest::Approx(-4.0));
}

TEST_CASE("quadratic oracle adjoint consistency") {
  const auto p = make_quadratic_oracle({1.0, 2.0, -1.0}, 0.5);
  check_adjoint_consistency(p, {0.5}, 41);
}

TEST_CASE("quadratic oracle with a target shifts the optimum") {
  // z*(theta) = a/(1+theta); with a = (2,0) and target (1,0) the best theta is 1
  const Vector a = {2.0, 0.0};
  const Vector target = {1.0, 0.0};
  CHECK(std::abs(quadratic_oracle_hypergrad(a, 1.0, target)) <= 1e-14);
  CHECK(quadratic_oracle_hypergrad(a, 0.5, target) < 0.0);
  CHECK(quadratic_oracle_hypergrad(a, 2.0, target) > 0.0);
}

TEST_CASE("empty splits are rejected") {
  DataSplit empty;
  CHECK_THROWS_AS(make_l2_logreg(empty), EmptySplit);
  CHECK_THROWS_AS(make_nls(empty), EmptySplit);
}
