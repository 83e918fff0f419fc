#include "shine/numkit.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

namespace shine {

double dot(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) throw DimensionMismatch("dot: size mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double norm(const Vector& v) { return std::sqrt(dot(v, v)); }

double inf_norm(const Vector& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

bool all_finite(const Vector& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

Vector zeros(std::size_t d) { return Vector(d, 0.0); }

Vector unit(std::size_t d, std::size_t i) {
  Vector e(d, 0.0);
  e[i] = 1.0;
  return e;
}

Vector scaled(const Vector& v, double alpha) {
  Vector out(v);
  for (double& x : out) x *= alpha;
  return out;
}

Vector add(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) throw DimensionMismatch("add: size mismatch");
  Vector out(a);
  for (std::size_t i = 0; i < b.size(); ++i) out[i] += b[i];
  return out;
}

Vector sub(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) throw DimensionMismatch("sub: size mismatch");
  Vector out(a);
  for (std::size_t i = 0; i < b.size(); ++i) out[i] -= b[i];
  return out;
}

void axpy_in_place(double alpha, const Vector& x, Vector& y) {
  if (x.size() != y.size()) throw DimensionMismatch("axpy: size mismatch");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

double cosine_similarity(const Vector& a, const Vector& b) {
  const double na = norm(a);
  const double nb = norm(b);
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot(a, b) / (na * nb);
}

// ---------------------------------------------------------------------------
// DenseMatrix
// ---------------------------------------------------------------------------

DenseMatrix DenseMatrix::identity(std::size_t n) {
  DenseMatrix I(n, n, 0.0);
  for (std::size_t i = 0; i < n; ++i) I(i, i) = 1.0;
  return I;
}

Vector DenseMatrix::matvec(const Vector& x) const {
  if (x.size() != cols_) throw DimensionMismatch("matvec: size mismatch");
  Vector out(rows_, 0.0);
  for (std::size_t i = 0; i < rows_; ++i) {
    double acc = 0.0;
    const double* row = entries_.data() + i * cols_;
    for (std::size_t j = 0; j < cols_; ++j) acc += row[j] * x[j];
    out[i] = acc;
  }
  return out;
}

Vector DenseMatrix::matvec_transpose(const Vector& x) const {
  if (x.size() != rows_) throw DimensionMismatch("matvec_transpose: size mismatch");
  Vector out(cols_, 0.0);
  for (std::size_t i = 0; i < rows_; ++i) {
    const double* row = entries_.data() + i * cols_;
    for (std::size_t j = 0; j < cols_; ++j) out[j] += row[j] * x[i];
  }
  return out;
}

DenseMatrix densify(const std::function<Vector(const Vector&)>& apply, std::size_t dim) {
  DenseMatrix A(dim, dim, 0.0);
  for (std::size_t j = 0; j < dim; ++j) {
    Vector col = apply(unit(dim, j));
    if (col.size() != dim) throw DimensionMismatch("densify: map is not square");
    for (std::size_t i = 0; i < dim; ++i) A(i, j) = col[i];
  }
  return A;
}

namespace {

// LU with partial pivoting; factors in place, returns the row permutation.
std::vector<std::size_t> lu_factor(DenseMatrix& A) {
  const std::size_t n = A.rows();
  if (A.cols() != n) throw DimensionMismatch("dense_solve: matrix must be square");
  double scale = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) scale = std::max(scale, std::abs(A(i, j)));
  const double pivot_tol = 1e-13 * std::max(scale, 1.0);

  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;

  for (std::size_t k = 0; k < n; ++k) {
    std::size_t p = k;
    double best = std::abs(A(k, k));
    for (std::size_t i = k + 1; i < n; ++i) {
      if (std::abs(A(i, k)) > best) {
        best = std::abs(A(i, k));
        p = i;
      }
    }
    if (best < pivot_tol) throw SingularMatrix("pivot below tolerance");
    if (p != k) {
      for (std::size_t j = 0; j < n; ++j) std::swap(A(k, j), A(p, j));
      std::swap(perm[k], perm[p]);
    }
    for (std::size_t i = k + 1; i < n; ++i) {
      A(i, k) /= A(k, k);
      const double lik = A(i, k);
      for (std::size_t j = k + 1; j < n; ++j) A(i, j) -= lik * A(k, j);
    }
  }
  return perm;
}

Vector lu_solve(const DenseMatrix& LU, const std::vector<std::size_t>& perm, const Vector& b) {
  const std::size_t n = LU.rows();
  Vector x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = b[perm[i]];
  for (std::size_t i = 1; i < n; ++i) {
    double acc = x[i];
    for (std::size_t j = 0; j < i; ++j) acc -= LU(i, j) * x[j];
    x[i] = acc;
  }
  for (std::size_t ii = n; ii-- > 0;) {
    double acc = x[ii];
    for (std::size_t j = ii + 1; j < n; ++j) acc -= LU(ii, j) * x[j];
    x[ii] = acc / LU(ii, ii);
  }
  return x;
}

}  // namespace

Vector dense_solve(const DenseMatrix& A, const Vector& b) {
  if (b.size() != A.rows()) throw DimensionMismatch("dense_solve: rhs size mismatch");
  DenseMatrix LU(A);
  const auto perm = lu_factor(LU);
  return lu_solve(LU, perm, b);
}

DenseMatrix dense_inverse(const DenseMatrix& A) {
  const std::size_t n = A.rows();
  DenseMatrix LU(A);
  const auto perm = lu_factor(LU);
  DenseMatrix inv(n, n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    Vector col = lu_solve(LU, perm, unit(n, j));
    for (std::size_t i = 0; i < n; ++i) inv(i, j) = col[i];
  }
  return inv;
}

// ---------------------------------------------------------------------------
// LowRankInverseOperator
// ---------------------------------------------------------------------------

LowRankInverseOperator::LowRankInverseOperator(std::size_t dim, std::size_t capacity)
    : dim_(dim), capacity_(capacity) {
  if (capacity_ == 0) throw DimensionMismatch("operator capacity must be positive");
}

Vector LowRankInverseOperator::apply(const Vector& x) const {
  if (x.size() != dim_) throw DimensionMismatch("apply: size mismatch");
  Vector out(x);
  for (const Correction& c : corrections_) axpy_in_place(dot(c.w, x), c.u, out);
  return out;
}

Vector LowRankInverseOperator::apply_adjoint(const Vector& x) const {
  if (x.size() != dim_) throw DimensionMismatch("apply_adjoint: size mismatch");
  Vector out(x);
  for (const Correction& c : corrections_) axpy_in_place(dot(c.u, x), c.w, out);
  return out;
}

LowRankInverseOperator LowRankInverseOperator::adjoint() const {
  LowRankInverseOperator out(dim_, capacity_);
  for (const Correction& c : corrections_) out.corrections_.push_back({c.w, c.u});
  return out;
}

void LowRankInverseOperator::push_correction(Vector u, Vector w) {
  if (u.size() != dim_ || w.size() != dim_)
    throw DimensionMismatch("push_correction: size mismatch");
  corrections_.push_back({std::move(u), std::move(w)});
  while (corrections_.size() > capacity_) corrections_.pop_front();
}

PushStatus LowRankInverseOperator::push_sherman_morrison(const Vector& s, const Vector& y) {
  const Vector hy = apply(y);
  const double denom = dot(s, hy);
  if (std::abs(denom) < kSingularUpdateTol * norm(s) * norm(hy))
    return PushStatus::skipped_near_singular;
  Vector u = sub(s, hy);
  for (double& x : u) x /= denom;
  push_correction(std::move(u), apply_adjoint(s));
  return PushStatus::applied;
}

// ---------------------------------------------------------------------------
// Conjugate gradient
// ---------------------------------------------------------------------------

CgResult cg_solve(const std::function<Vector(const Vector&)>& hvp, const Vector& rhs,
                  double tol, int max_iter, const Vector* x0) {
  const std::size_t d = rhs.size();
  CgResult out;
  const double rhs_norm = norm(rhs);
  if (rhs_norm == 0.0) {
    out.x = zeros(d);
    out.converged = true;
    return out;
  }

  Vector x = x0 ? *x0 : zeros(d);
  Vector r = sub(rhs, hvp(x));
  double rho = dot(r, r);
  const double stop = tol * rhs_norm;
  if (std::sqrt(rho) <= stop) {
    out.x = std::move(x);
    out.converged = true;
    return out;
  }
  Vector p = r;
  int it = 0;
  while (it < max_iter) {
    ++it;
    const Vector ap = hvp(p);
    const double pap = dot(p, ap);
    if (pap <= 0.0 || !std::isfinite(pap)) break;  // lost positive definiteness
    const double alpha = rho / pap;
    axpy_in_place(alpha, p, x);
    axpy_in_place(-alpha, ap, r);
    const double rho_next = dot(r, r);
    if (std::sqrt(rho_next) <= stop) {
      rho = rho_next;
      break;
    }
    const double beta = rho_next / rho;
    rho = rho_next;
    for (std::size_t i = 0; i < d; ++i) p[i] = r[i] + beta * p[i];
  }
  out.x = std::move(x);
  out.iterations = it;
  out.converged = std::sqrt(rho) <= stop;
  return out;
}

// ---------------------------------------------------------------------------
// Finite differences
// ---------------------------------------------------------------------------

Vector finite_diff_grad(const std::function<double(const Vector&)>& f, const Vector& x,
                        double h) {
  Vector g(x.size(), 0.0);
  Vector probe(x);
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + h;
    const double fp = f(probe);
    probe[i] = x[i] - h;
    const double fm = f(probe);
    probe[i] = x[i];
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

Vector finite_diff_grad(const std::function<double(const Vector&)>& f, const Vector& x) {
  return finite_diff_grad(f, x, 1e-6 * (1.0 + inf_norm(x)));
}

}  // namespace shine
