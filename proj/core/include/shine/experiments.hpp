#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "shine/outer.hpp"
#include "shine/problems.hpp"

namespace shine {

/// A bi-level method descriptor as accepted on the command line:
///   hoag | hoag-limited:<k> | shine | shine-opa | shine-fallback |
///   shine-refine:<k> | jacobian-free | jf-refine:<k> | random-search
/// Carries the backend plus the solver defaults tied to it (inner memory,
/// OPA cadence, tolerance decrease).
struct MethodSpec {
  std::string name;
  HypergradMethod hypergrad;
  bool random_search = false;
  std::size_t inner_memory = 30;
  std::optional<int> opa_frequency;
  double default_tol_decrease = 0.78;
};

/// Throws std::invalid_argument on an unknown descriptor.
MethodSpec parse_method_descriptor(const std::string& descriptor);

/// Applies a MethodSpec on top of an OuterConfig (method, memory, OPA, rho).
void apply_method_spec(OuterConfig& cfg, const MethodSpec& spec);

struct OpaQualityRow {
  std::uint64_t seed = 0;
  std::string direction;  // prescribed | krylov | random
  double cosine = 0.0;
  double norm_ratio = 0.0;  // |H v| / |J^-1 v|
};

/// One seeded inversion-quality measurement: solves the inner problem with
/// extra updates aimed at a random prescribed direction, then compares the
/// operator's action against the dense Jacobian inverse in the prescribed,
/// Krylov (J * last step), and a fresh random direction.
std::vector<OpaQualityRow> opa_quality_rows(const BilevelProblem& problem, const Vector& theta,
                                            std::uint64_t seed, const QNConfig& cfg,
                                            const WolfeParams& wolfe);

}  // namespace shine
