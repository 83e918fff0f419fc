#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace shine {

/// A vector or matrix argument does not match the expected shape.
struct DimensionMismatch : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Dense factorization hit a pivot below tolerance.
struct SingularMatrix : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A solver produced a NaN/Inf iterate or residual. Carries the residual
/// norms recorded up to the failure as a diagnostic trace.
struct NonFiniteIterate : std::runtime_error {
  NonFiniteIterate(int iteration_, std::vector<double> residual_trace_)
      : std::runtime_error("non-finite iterate at iteration " +
                           std::to_string(iteration_)),
        iteration(iteration_),
        residual_trace(std::move(residual_trace_)) {}

  int iteration;
  std::vector<double> residual_trace;
};

struct LineSearchFailed : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NotDescentDirection : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct MalformedLine : std::runtime_error {
  MalformedLine(int line_no_, const std::string& detail)
      : std::runtime_error("line " + std::to_string(line_no_) + ": " + detail),
        line_no(line_no_) {}

  int line_no;
};

struct NonMonotonicIndex : std::runtime_error {
  explicit NonMonotonicIndex(int line_no_)
      : std::runtime_error("line " + std::to_string(line_no_) +
                           ": feature indices must be strictly increasing"),
        line_no(line_no_) {}

  int line_no;
};

struct EmptyDataset : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TooFewSamples : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct EmptySplit : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// The nonlinear power iteration hit a (numerically) zero image.
struct ZeroImage : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace shine
