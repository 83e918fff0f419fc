#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <limits>
#include <vector>

#include "shine/errors.hpp"

namespace shine {

using Vector = std::vector<double>;

// ---------------------------------------------------------------------------
// Dense vector kernels
// ---------------------------------------------------------------------------

double dot(const Vector& a, const Vector& b);
double norm(const Vector& v);
double inf_norm(const Vector& v);
bool all_finite(const Vector& v);

Vector zeros(std::size_t d);
Vector unit(std::size_t d, std::size_t i);
Vector scaled(const Vector& v, double alpha);
Vector add(const Vector& a, const Vector& b);
Vector sub(const Vector& a, const Vector& b);

/// y += alpha * x
void axpy_in_place(double alpha, const Vector& x, Vector& y);

/// dot(a,b) / (|a| |b|); zero if either norm vanishes.
double cosine_similarity(const Vector& a, const Vector& b);

// ---------------------------------------------------------------------------
// Dense matrices (desk-scale oracles and toy models)
// ---------------------------------------------------------------------------

class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), entries_(rows * cols, fill) {}

  static DenseMatrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  double& operator()(std::size_t i, std::size_t j) { return entries_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return entries_[i * cols_ + j]; }

  Vector matvec(const Vector& x) const;
  /// A^T x
  Vector matvec_transpose(const Vector& x) const;

  const std::vector<double>& data() const { return entries_; }
  std::vector<double>& data() { return entries_; }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> entries_;
};

/// Materializes a linear map column by column. Test-oracle helper, also used
/// by the desk-scale inversion-quality experiment.
DenseMatrix densify(const std::function<Vector(const Vector&)>& apply, std::size_t dim);

/// LU solve with partial pivoting. Throws SingularMatrix when a pivot falls
/// below 1e-13 * max|A|.
Vector dense_solve(const DenseMatrix& A, const Vector& b);

DenseMatrix dense_inverse(const DenseMatrix& A);

// ---------------------------------------------------------------------------
// Low-rank inverse operator
// ---------------------------------------------------------------------------

enum class PushStatus {
  applied,
  skipped_near_singular,
  skipped_nonpositive_curvature,
};

/// Relative threshold below which a quasi-Newton update denominator is
/// treated as degenerate and the update is skipped.
inline constexpr double kSingularUpdateTol = 1e-10;

/// Identity plus an ordered list of rank-one corrections u w^T, representing
/// the inverse of an incrementally updated matrix with B_0 = I.
///
/// apply(x)          = x + sum_i u_i (w_i . x)
/// apply_adjoint(x)  = x + sum_i w_i (u_i . x)
///
/// The correction list is bounded by `capacity`; pushing beyond it evicts the
/// oldest correction (FIFO).
class LowRankInverseOperator {
 public:
  struct Correction {
    Vector u;
    Vector w;
  };

  static constexpr std::size_t kUnbounded = std::numeric_limits<std::size_t>::max();

  explicit LowRankInverseOperator(std::size_t dim, std::size_t capacity = kUnbounded);

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return corrections_.size(); }
  std::size_t capacity() const { return capacity_; }
  const std::deque<Correction>& corrections() const { return corrections_; }

  Vector apply(const Vector& x) const;
  Vector apply_adjoint(const Vector& x) const;

  /// The transposed operator: corrections (u,w) become (w,u).
  LowRankInverseOperator adjoint() const;

  /// Appends one correction, evicting the oldest when over capacity.
  void push_correction(Vector u, Vector w);

  /// Good-Broyden step: absorbs the forward update
  ///   B' = B + (y - B s) s^T / (s^T s)
  /// on the inverse side via Sherman-Morrison,
  ///   H' = H - (H y - s)(s^T H) / (s^T H y),
  /// which enforces the inverse secant condition H' y = s.
  /// Skips (operator unchanged) when |s^T H y| < tol * |s| * |H y|.
  PushStatus push_sherman_morrison(const Vector& s, const Vector& y);

 private:
  std::size_t dim_;
  std::size_t capacity_;
  std::deque<Correction> corrections_;
};

// ---------------------------------------------------------------------------
// Conjugate gradient
// ---------------------------------------------------------------------------

struct CgResult {
  Vector x;
  int iterations = 0;
  bool converged = false;
};

/// Solves hvp(x) = rhs for a symmetric positive definite map. Stops when
/// |hvp(x) - rhs| <= tol * |rhs| or after max_iter iterations; non-convergence
/// is reported through the iteration count, never an exception. An optional
/// x0 warm-starts the iteration.
CgResult cg_solve(const std::function<Vector(const Vector&)>& hvp, const Vector& rhs,
                  double tol, int max_iter, const Vector* x0 = nullptr);

// ---------------------------------------------------------------------------
// Finite differences (test oracle)
// ---------------------------------------------------------------------------

/// Central differences (f(x + h e_i) - f(x - h e_i)) / (2h) per coordinate.
Vector finite_diff_grad(const std::function<double(const Vector&)>& f, const Vector& x,
                        double h);

/// Same with h = 1e-6 * (1 + |x|_inf).
Vector finite_diff_grad(const std::function<double(const Vector&)>& f, const Vector& x);

}  // namespace shine
