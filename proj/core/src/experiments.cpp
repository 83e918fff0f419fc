#include "shine/experiments.hpp"

#include <random>
#include <stdexcept>

#include "shine/qn.hpp"

namespace shine {

namespace {

// "name:<int>" suffix parser; returns -1 when absent.
int trailing_int(const std::string& s, const std::string& prefix) {
  if (s.size() <= prefix.size() || s.compare(0, prefix.size(), prefix) != 0) return -1;
  try {
    std::size_t used = 0;
    const int v = std::stoi(s.substr(prefix.size()), &used);
    if (used != s.size() - prefix.size() || v < 1) return -1;
    return v;
  } catch (const std::exception&) {
    return -1;
  }
}

}  // namespace

MethodSpec parse_method_descriptor(const std::string& descriptor) {
  MethodSpec spec;
  spec.name = descriptor;

  if (descriptor == "hoag") {
    spec.hypergrad.kind = HypergradKind::exact;
    spec.inner_memory = 10;
    spec.default_tol_decrease = 0.99;
    return spec;
  }
  if (int k = trailing_int(descriptor, "hoag-limited:"); k > 0) {
    spec.hypergrad.kind = HypergradKind::exact;
    spec.hypergrad.exact_max_iter = k;
    spec.inner_memory = 10;
    spec.default_tol_decrease = 0.99;
    return spec;
  }
  if (descriptor == "shine") {
    spec.hypergrad.kind = HypergradKind::shine;
    return spec;
  }
  if (descriptor == "shine-opa") {
    spec.hypergrad.kind = HypergradKind::shine;
    spec.inner_memory = 60;
    spec.opa_frequency = 5;
    return spec;
  }
  if (descriptor == "shine-fallback") {
    spec.hypergrad.kind = HypergradKind::shine;
    spec.hypergrad.fallback_ratio = 1.3;
    return spec;
  }
  if (int k = trailing_int(descriptor, "shine-refine:"); k > 0) {
    spec.hypergrad.kind = HypergradKind::shine;
    spec.hypergrad.refine_steps = k;
    spec.hypergrad.warm_start_operator = true;
    return spec;
  }
  if (descriptor == "jacobian-free") {
    spec.hypergrad.kind = HypergradKind::jacobian_free;
    return spec;
  }
  if (int k = trailing_int(descriptor, "jf-refine:"); k > 0) {
    spec.hypergrad.kind = HypergradKind::jacobian_free;
    spec.hypergrad.refine_steps = k;
    return spec;
  }
  if (descriptor == "random-search") {
    spec.random_search = true;
    return spec;
  }
  throw std::invalid_argument("unknown method descriptor '" + descriptor + "'");
}

void apply_method_spec(OuterConfig& cfg, const MethodSpec& spec) {
  cfg.method = spec.hypergrad;
  cfg.inner.memory = spec.inner_memory;
  cfg.inner.opa_frequency = spec.opa_frequency;
  cfg.tol_decrease = spec.default_tol_decrease;
}

std::vector<OpaQualityRow> opa_quality_rows(const BilevelProblem& problem, const Vector& theta,
                                            std::uint64_t seed, const QNConfig& cfg,
                                            const WolfeParams& wolfe) {
  const auto d = static_cast<std::size_t>(problem.dim);
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto random_unit = [&]() {
    Vector v(d);
    double n = 0.0;
    do {
      for (double& e : v) e = gauss(rng);
      n = norm(v);
    } while (n == 0.0);
    return scaled(v, 1.0 / n);
  };

  const Vector prescribed = random_unit();
  const SolveResult fwd =
      lbfgs_opa_solve(problem, theta, zeros(d), cfg, wolfe,
                      [prescribed](const Vector&) { return prescribed; });

  const DenseMatrix J = densify(
      [&](const Vector& v) { return problem.inner_jvp(theta, fwd.z_star, v); }, d);

  Vector krylov = fwd.last_step.empty() ? random_unit()
                                        : problem.inner_jvp(theta, fwd.z_star, fwd.last_step);
  if (norm(krylov) == 0.0) krylov = random_unit();
  const Vector random_dir = random_unit();

  std::vector<OpaQualityRow> rows;
  auto emit = [&](const std::string& tag, const Vector& v) {
    const Vector approx = fwd.inverse_op.apply(v);
    const Vector exact = dense_solve(J, v);
    OpaQualityRow row;
    row.seed = seed;
    row.direction = tag;
    row.cosine = cosine_similarity(approx, exact);
    row.norm_ratio = norm(exact) > 0.0 ? norm(approx) / norm(exact)
                                       : std::numeric_limits<double>::quiet_NaN();
    rows.push_back(std::move(row));
  };
  emit("prescribed", prescribed);
  emit("krylov", krylov);
  emit("random", random_dir);
  return rows;
}

}  // namespace shine
