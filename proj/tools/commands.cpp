#include "commands.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <random>
#include <thread>
#include <vector>

#include "shine/dataio.hpp"
#include "shine/deqtoy.hpp"
#include "shine/experiments.hpp"
#include "shine/hypergrad.hpp"
#include "shine/outer.hpp"
#include "shine/problems.hpp"
#include "shine/qn.hpp"
#include "shine/trace_io.hpp"

namespace shine_cli {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumerical = 4;

std::uint64_t seed_offset() {
  const char* env = std::getenv("SHINE_SEED_OFFSET");
  if (!env) return 0;
  return static_cast<std::uint64_t>(std::strtoll(env, nullptr, 10));
}

// "0..4", "0,3,7" or "5"
std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  if (const auto dots = text.find(".."); dots != std::string::npos) {
    const long lo = std::stol(text.substr(0, dots));
    const long hi = std::stol(text.substr(dots + 2));
    if (hi < lo) throw std::invalid_argument("empty seed range");
    for (long s = lo; s <= hi; ++s) seeds.push_back(static_cast<std::uint64_t>(s));
    return seeds;
  }
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto comma = text.find(',', pos);
    if (comma == std::string::npos) comma = text.size();
    seeds.push_back(std::stoull(text.substr(pos, comma - pos)));
    pos = comma + 1;
  }
  if (seeds.empty()) throw std::invalid_argument("no seeds given");
  return seeds;
}

struct DataSpec {
  bool synthetic = false;
  int n = 0;
  int d = 0;
  std::string path;
};

DataSpec parse_data_spec(const std::string& text) {
  DataSpec spec;
  if (text.rfind("synth:", 0) == 0) {
    const auto x = text.find('x', 6);
    if (x == std::string::npos) throw std::invalid_argument("expected synth:<n>x<d>");
    spec.synthetic = true;
    spec.n = std::stoi(text.substr(6, x - 6));
    spec.d = std::stoi(text.substr(x + 1));
    if (spec.n < 1 || spec.d < 1) throw std::invalid_argument("synth sizes must be positive");
    return spec;
  }
  spec.path = text;
  return spec;
}

shine::Dataset realize_dataset(const DataSpec& spec, std::uint64_t seed) {
  if (spec.synthetic) return shine::synth_logreg_data(spec.n, spec.d, seed, 0.1);
  return shine::load_dataset(spec.path);
}

void ensure_output_dir(const std::string& dir) {
  if (!dir.empty()) fs::create_directories(dir);
}

json trace_to_json(const shine::RunTrace& trace) {
  json rows = json::array();
  for (const shine::TraceRow& r : trace.rows) {
    rows.push_back({{"outer_iter", r.outer_iter},
                    {"theta", r.theta},
                    {"train_loss", r.train_loss},
                    {"val_loss", r.val_loss},
                    {"test_loss", r.test_loss},
                    {"inner_iters", r.inner_iters},
                    {"backward_iters", r.backward_iters},
                    {"fallback_count", r.fallback_count},
                    {"inner_tol", r.inner_tol},
                    {"backward_residual", r.backward_residual},
                    {"cosine_vs_exact", r.cosine_vs_exact},
                    {"cumulative_seconds", r.cumulative_seconds},
                    {"status", r.status}});
  }
  return json{{"schema", 1},
              {"command", trace.command},
              {"method", trace.method},
              {"problem", trace.problem},
              {"seed", trace.seed},
              {"rows", rows}};
}

void write_trace(const shine::RunTrace& trace, const std::string& path,
                 const std::string& format) {
  if (format == "json") {
    std::ofstream out(path);
    out << trace_to_json(trace).dump(2) << '\n';
    return;
  }
  shine::write_trace_csv_file(trace, path);
}

double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t mid = v.size() / 2;
  return v.size() % 2 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
}

// Runs `work(seed_index)` for every seed on a small pool; results land in
// caller-owned slots, file writing stays on the calling thread.
void for_each_seed(std::size_t count, int jobs, const std::function<void(std::size_t)>& work) {
  const int n_threads = std::max(1, std::min<int>(jobs, static_cast<int>(count)));
  if (n_threads == 1) {
    for (std::size_t i = 0; i < count; ++i) work(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(n_threads));
  for (int t = 0; t < n_threads; ++t) {
    pool.emplace_back([&]() {
      for (std::size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) work(i);
    });
  }
  for (std::thread& t : pool) t.join();
}

// ---------------------------------------------------------------------------
// bilevel
// ---------------------------------------------------------------------------

struct BilevelOptions {
  std::string data = "synth:2000x20";
  std::string problem = "logreg";
  std::string method = "shine";
  std::string seeds = "0..4";
  std::string output = ".";
  std::string format = "csv";
  int outer_iters = 30;
  double tol0 = 0.1;
  double rho = 0.0;  // 0: use the method default
  double initial_step = 1.0;
  int jobs = 1;
  int repeat = 1;
  double rs_low = 1e-4;
  double rs_high = 1e2;
  int rs_samples = 50;
};

struct SeedOutcome {
  std::uint64_t seed = 0;
  shine::RunTrace trace;
  double final_test_loss = std::numeric_limits<double>::quiet_NaN();
  double final_val_loss = std::numeric_limits<double>::quiet_NaN();
  long total_inner = 0;
  long total_backward = 0;
  double seconds = 0.0;
  bool failed = false;
  std::string error;
};

int cmd_bilevel(const BilevelOptions& opt) {
  DataSpec data_spec;
  shine::MethodSpec method_spec;
  try {
    data_spec = parse_data_spec(opt.data);
    method_spec = shine::parse_method_descriptor(opt.method);
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  }
  if (opt.problem != "logreg" && opt.problem != "nls") {
    std::cerr << "config error: unknown problem '" << opt.problem << "'\n";
    return kExitConfig;
  }
  if (opt.rho < 0.0 || opt.rho > 1.0) {
    std::cerr << "config error: --rho must lie in (0, 1]\n";
    return kExitConfig;
  }
  try {
    ensure_output_dir(opt.output);
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  }

  std::vector<std::uint64_t> seeds;
  try {
    seeds = parse_seeds(opt.seeds);
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  }
  const std::uint64_t offset = seed_offset();
  for (std::uint64_t& s : seeds) s += offset;

  // Files are validated once up front so a bad path fails fast.
  if (!data_spec.synthetic) {
    try {
      (void)shine::load_dataset(data_spec.path);
    } catch (const std::exception& e) {
      std::cerr << "data error: " << e.what() << "\n";
      return kExitData;
    }
  }

  std::vector<SeedOutcome> outcomes(seeds.size());
  std::mutex log_mutex;

  for_each_seed(seeds.size(), opt.jobs, [&](std::size_t i) {
    SeedOutcome& out = outcomes[i];
    out.seed = seeds[i];
    try {
      const shine::Dataset ds = realize_dataset(data_spec, out.seed);
      const shine::DataSplit split = shine::split_dataset(ds, 0.9, 0.05, 0.05, out.seed);
      const shine::BilevelProblem problem = opt.problem == "nls"
                                                ? shine::make_nls(split)
                                                : shine::make_l2_logreg(split);

      std::vector<double> times;
      for (int rep = 0; rep < std::max(1, opt.repeat); ++rep) {
        const auto t0 = std::chrono::steady_clock::now();
        shine::RunTrace trace;
        if (method_spec.random_search) {
          trace = shine::random_search_run(problem, opt.rs_samples, opt.rs_low, opt.rs_high,
                                           out.seed);
        } else {
          shine::OuterConfig cfg;
          shine::apply_method_spec(cfg, method_spec);
          cfg.max_outer_iters = opt.outer_iters;
          cfg.tol0 = opt.tol0;
          if (opt.rho > 0.0) cfg.tol_decrease = opt.rho;
          cfg.initial_step = opt.initial_step;
          trace = shine::hoag_run(problem, cfg);
        }
        times.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                            .count());
        if (rep == 0) {
          trace.method = method_spec.name;
          trace.seed = out.seed;
          out.trace = std::move(trace);
        }
      }
      out.seconds = median(times);
      for (const shine::TraceRow& row : out.trace.rows) {
        out.total_inner += row.inner_iters;
        out.total_backward += row.backward_iters;
      }
      if (!out.trace.rows.empty()) {
        out.final_test_loss = out.trace.rows.back().test_loss;
        out.final_val_loss = out.trace.rows.back().val_loss;
      }
      if (method_spec.random_search) {
        // running best, not the last sample
        out.final_val_loss = out.trace.best_val_loss;
        out.final_test_loss = out.trace.best_test_loss;
      }
    } catch (const std::exception& e) {
      out.failed = true;
      out.error = e.what();
      std::lock_guard<std::mutex> lock(log_mutex);
      std::cerr << "seed " << out.seed << " failed: " << e.what() << "\n";
    }
  });

  // single-threaded collection and writing
  json per_seed = json::array();
  std::vector<double> final_losses;
  double total_seconds = 0.0;
  int failures = 0;
  for (const SeedOutcome& out : outcomes) {
    if (out.failed) {
      ++failures;
      per_seed.push_back({{"seed", out.seed}, {"status", "failed"}, {"error", out.error}});
      continue;
    }
    const std::string ext = opt.format == "json" ? ".json" : ".csv";
    const std::string trace_path =
        (fs::path(opt.output) /
         ("bilevel_" + method_spec.name + "_seed" + std::to_string(out.seed) + ext))
            .string();
    write_trace(out.trace, trace_path, opt.format);
    if (std::isfinite(out.final_test_loss)) final_losses.push_back(out.final_test_loss);
    total_seconds += out.seconds;
    per_seed.push_back({{"seed", out.seed},
                        {"status", "ok"},
                        {"final_test_loss", out.final_test_loss},
                        {"final_val_loss", out.final_val_loss},
                        {"total_inner_iters", out.total_inner},
                        {"total_backward_iters", out.total_backward},
                        {"seconds", out.seconds},
                        {"trace", trace_path}});
  }

  const json summary = {{"schema", 1},
                        {"command", "bilevel"},
                        {"method", method_spec.name},
                        {"problem", opt.problem},
                        {"data", opt.data},
                        {"seeds", seeds},
                        {"median_final_test_loss", median(final_losses)},
                        {"total_seconds", total_seconds},
                        {"failures", failures},
                        {"per_seed", per_seed}};
  const std::string summary_path =
      (fs::path(opt.output) / ("bilevel_" + method_spec.name + "_summary.json")).string();
  std::ofstream(summary_path) << summary.dump(2) << '\n';
  std::cout << summary_path << "\n";
  // individual failures are recorded and the run continues, but a run where
  // no seed produced anything is a data problem
  return failures == static_cast<int>(seeds.size()) ? kExitData : kExitOk;
}

// ---------------------------------------------------------------------------
// opa-quality
// ---------------------------------------------------------------------------

struct OpaQualityOptions {
  std::string data = "synth:300x50";
  std::string seeds = "0..99";
  std::string output = ".";
  double theta = std::log(1e-2);
  int jobs = 1;
};

int cmd_opa_quality(const OpaQualityOptions& opt) {
  DataSpec data_spec;
  std::vector<std::uint64_t> seeds;
  try {
    data_spec = parse_data_spec(opt.data);
    seeds = parse_seeds(opt.seeds);
    ensure_output_dir(opt.output);
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  }
  const std::uint64_t offset = seed_offset();
  for (std::uint64_t& s : seeds) s += offset;

  try {
    const shine::Dataset probe = realize_dataset(data_spec, seeds.front());
    if (probe.n_features > 500) {
      std::cerr << "data error: " << probe.n_features
                << " features exceed the dense-oracle limit (500)\n";
      return kExitData;
    }
  } catch (const std::exception& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  }

  std::vector<std::vector<shine::OpaQualityRow>> rows(seeds.size());
  std::atomic<bool> failed{false};
  for_each_seed(seeds.size(), opt.jobs, [&](std::size_t i) {
    try {
      const shine::Dataset ds = realize_dataset(data_spec, seeds[i]);
      const shine::DataSplit split = shine::split_dataset(ds, 0.9, 0.05, 0.05, seeds[i]);
      const shine::BilevelProblem problem = shine::make_l2_logreg(split);
      shine::QNConfig cfg;
      cfg.tol = 1e-6;
      cfg.max_iter = 500;
      cfg.memory = 60;
      cfg.opa_frequency = 5;
      rows[i] = shine::opa_quality_rows(problem, {opt.theta}, seeds[i], cfg,
                                        shine::WolfeParams{});
    } catch (const std::exception& e) {
      std::cerr << "seed " << seeds[i] << " failed: " << e.what() << "\n";
      failed = true;
    }
  });
  if (failed) return kExitNumerical;

  const std::string path = (fs::path(opt.output) / "opa_quality.csv").string();
  std::ofstream out(path);
  out << "schema=1\n";
  out << "seed,direction,cosine,norm_ratio,status\n";
  std::vector<double> cos_prescribed, cos_random;
  for (const auto& seed_rows : rows) {
    for (const shine::OpaQualityRow& r : seed_rows) {
      out << r.seed << ',' << r.direction << ',' << r.cosine << ',' << r.norm_ratio << ",ok\n";
      if (r.direction == "prescribed") cos_prescribed.push_back(r.cosine);
      if (r.direction == "random") cos_random.push_back(r.cosine);
    }
  }
  out.close();

  const json summary = {{"schema", 1},
                        {"command", "opa-quality"},
                        {"rows", path},
                        {"median_cosine_prescribed", median(cos_prescribed)},
                        {"median_cosine_random", median(cos_random)}};
  const std::string summary_path = (fs::path(opt.output) / "opa_quality_summary.json").string();
  std::ofstream(summary_path) << summary.dump(2) << '\n';
  std::cout << summary_path << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// deq-toy
// ---------------------------------------------------------------------------

struct DeqToyOptions {
  std::string method = "exact";
  std::string seeds = "0";
  std::string output = ".";
  std::string format = "csv";
  int steps = 200;
  int dim = 8;
  int inputs = 4;
  int outputs = 2;
  int samples = 16;
  double lr = 0.05;
  double tol = 1e-9;
  int jobs = 1;
};

int cmd_deq_toy(const DeqToyOptions& opt) {
  shine::MethodSpec method_spec;
  std::vector<std::uint64_t> seeds;
  try {
    method_spec = shine::parse_method_descriptor(opt.method == "exact" ? "hoag" : opt.method);
    if (method_spec.random_search)
      throw std::invalid_argument("random-search is not a deq training method");
    if (opt.dim < 1 || opt.inputs < 1 || opt.outputs < 1 || opt.samples < 1 || opt.steps < 1)
      throw std::invalid_argument("deq sizes and steps must be positive");
    seeds = parse_seeds(opt.seeds);
    ensure_output_dir(opt.output);
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  }
  const std::uint64_t offset = seed_offset();
  for (std::uint64_t& s : seeds) s += offset;

  std::atomic<bool> diverged{false};
  std::atomic<bool> failed{false};
  std::vector<shine::RunTrace> traces(seeds.size());
  std::mutex log_mutex;
  for_each_seed(seeds.size(), opt.jobs, [&](std::size_t i) {
    const std::uint64_t seed = seeds[i];
    try {
      shine::ToyDeqModel teacher =
          shine::make_toy_deq(opt.dim, opt.inputs, opt.outputs, seed * 2 + 1, 0.9);
      shine::ToyDeqModel model =
          shine::make_toy_deq(opt.dim, opt.inputs, opt.outputs, seed * 2 + 2, 0.9);
      const shine::DeqBatch batch = shine::synth_deq_batch(teacher, opt.samples, seed, 0.05);

      shine::QNConfig cfg;
      cfg.tol = opt.tol;
      cfg.max_iter = 500;
      cfg.memory = method_spec.inner_memory;
      cfg.opa_frequency = method_spec.opa_frequency;
      const shine::DeqSolver solver = method_spec.opa_frequency
                                          ? shine::DeqSolver::adjoint_broyden
                                          : shine::DeqSolver::broyden;

      shine::RunTrace trace =
          shine::deq_train(model, batch, method_spec.hypergrad, opt.lr, opt.steps, cfg, solver);
      trace.command = "deq-toy";
      trace.method = opt.method;
      trace.seed = seed;
      if (!trace.rows.empty() && trace.rows.back().status == "diverged") diverged = true;
      traces[i] = std::move(trace);
    } catch (const std::exception& e) {
      std::lock_guard<std::mutex> lock(log_mutex);
      std::cerr << "seed " << seed << " failed: " << e.what() << "\n";
      failed = true;
    }
  });
  if (failed) return kExitNumerical;

  for (std::size_t i = 0; i < seeds.size(); ++i) {
    const std::string ext = opt.format == "json" ? ".json" : ".csv";
    const std::string path =
        (fs::path(opt.output) /
         ("deqtoy_" + opt.method + "_seed" + std::to_string(seeds[i]) + ext))
            .string();
    write_trace(traces[i], path, opt.format);
    std::cout << path << "\n";
  }
  return diverged ? kExitNumerical : kExitOk;
}

// ---------------------------------------------------------------------------
// spectral
// ---------------------------------------------------------------------------

struct SpectralOptions {
  int dim = 8;
  int inputs = 4;
  std::uint64_t seed = 0;
  double w_scale = 0.9;
  int iters = 100;
  std::string probe = "model";
};

int cmd_spectral(const SpectralOptions& opt) {
  const std::uint64_t seed = opt.seed + seed_offset();

  std::function<shine::Vector(const shine::Vector&)> map;
  std::size_t dim = static_cast<std::size_t>(opt.dim);
  if (opt.dim < 1 || opt.inputs < 1) {
    std::cerr << "config error: --dim and --inputs must be positive\n";
    return kExitConfig;
  }
  if (opt.probe.rfind("linear:", 0) == 0) {
    double c = 0.0;
    try {
      c = std::stod(opt.probe.substr(7));
    } catch (const std::exception&) {
      std::cerr << "config error: bad linear probe factor in '" << opt.probe << "'\n";
      return kExitConfig;
    }
    map = [c](const shine::Vector& z) { return shine::scaled(z, c); };
  } else if (opt.probe == "model") {
    shine::ToyDeqModel model = shine::make_toy_deq(opt.dim, opt.inputs, 1, seed, opt.w_scale);
    std::mt19937_64 rng(seed ^ 0xabcdefull);
    std::normal_distribution<double> gauss(0.0, 1.0);
    shine::Vector x(static_cast<std::size_t>(opt.inputs));
    for (double& e : x) e = gauss(rng);
    // growth of the layer around the origin: u -> f(u) - f(0)
    const shine::Vector base = shine::zeros(dim);
    auto layer = [model, x](const shine::Vector& z) {
      shine::Vector pre = model.W.matvec(z);
      shine::axpy_in_place(1.0, model.U.matvec(x), pre);
      shine::axpy_in_place(1.0, model.b, pre);
      for (double& v : pre) v = std::tanh(v);
      return pre;
    };
    const shine::Vector f0 = layer(base);
    map = [layer, f0](const shine::Vector& z) { return shine::sub(layer(z), f0); };
  } else {
    std::cerr << "config error: unknown probe '" << opt.probe << "'\n";
    return kExitConfig;
  }

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  shine::Vector u0(dim);
  for (double& e : u0) e = gauss(rng);
  u0 = shine::scaled(u0, 1.0 / shine::norm(u0));

  // A constant layer annihilates the centered probe immediately; that is a
  // zero growth rate, not a failure.
  if (shine::norm(map(u0)) < 1e-14) {
    std::cout << "nonlinear_spectral_radius=0\n";
    return kExitOk;
  }
  try {
    const double radius = shine::nonlinear_power_method(map, u0, opt.iters);
    std::cout << "nonlinear_spectral_radius=" << radius << "\n";
  } catch (const shine::ZeroImage& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  }
  return kExitOk;
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"Bi-level optimization with quasi-Newton forward solvers whose low-rank "
               "inverse byproducts drive the backward pass"};
  app.require_subcommand(1);

  BilevelOptions bl;
  CLI::App* bilevel = app.add_subcommand(
      "bilevel", "Hyperparameter-optimization runs with per-seed traces and a summary");
  bilevel->add_option("--data", bl.data, "Dataset path (libsvm[.gz]) or synth:<n>x<d>");
  bilevel->add_option("--problem", bl.problem, "logreg | nls");
  bilevel->add_option("--method", bl.method,
                      "hoag | hoag-limited:<k> | shine | shine-opa | shine-fallback | "
                      "shine-refine:<k> | jacobian-free | jf-refine:<k> | random-search");
  bilevel->add_option("--seeds", bl.seeds, "Seed list: 0..4 or 0,1,2");
  bilevel->add_option("--output,-o", bl.output, "Output directory");
  bilevel->add_option("--format", bl.format)->check(CLI::IsMember({"csv", "json"}));
  bilevel->add_option("--outer-iters", bl.outer_iters);
  bilevel->add_option("--tol0", bl.tol0);
  bilevel->add_option("--rho", bl.rho, "Tolerance decrease (0 = method default)");
  bilevel->add_option("--step", bl.initial_step);
  bilevel->add_option("--jobs", bl.jobs);
  bilevel->add_option("--repeat", bl.repeat, "Repeats per seed; median timing reported");
  bilevel->add_option("--rs-samples", bl.rs_samples);
  bilevel->add_option("--rs-low", bl.rs_low);
  bilevel->add_option("--rs-high", bl.rs_high);

  OpaQualityOptions oq;
  CLI::App* opaq = app.add_subcommand(
      "opa-quality", "Inversion quality in prescribed/Krylov/random directions");
  opaq->add_option("--data", oq.data, "Dataset path or synth:<n>x<d> (at most 500 features)");
  opaq->add_option("--seeds", oq.seeds);
  opaq->add_option("--output,-o", oq.output);
  opaq->add_option("--theta", oq.theta, "log-regularization strength lambda");
  opaq->add_option("--jobs", oq.jobs);

  DeqToyOptions dt;
  CLI::App* deq = app.add_subcommand("deq-toy", "Train the toy equilibrium model");
  deq->add_option("--method", dt.method,
                  "exact | shine | shine-opa | shine-fallback | shine-refine:<k> | "
                  "jacobian-free | jf-refine:<k>");
  deq->add_option("--seeds", dt.seeds);
  deq->add_option("--output,-o", dt.output);
  deq->add_option("--format", dt.format)->check(CLI::IsMember({"csv", "json"}));
  deq->add_option("--steps", dt.steps);
  deq->add_option("--dim", dt.dim);
  deq->add_option("--inputs", dt.inputs);
  deq->add_option("--outputs", dt.outputs);
  deq->add_option("--samples", dt.samples);
  deq->add_option("--lr", dt.lr);
  deq->add_option("--tol", dt.tol);
  deq->add_option("--jobs", dt.jobs);

  SpectralOptions sp;
  CLI::App* spectral =
      app.add_subcommand("spectral", "Nonlinear growth-rate estimate of the layer map");
  spectral->add_option("--dim", sp.dim);
  spectral->add_option("--inputs", sp.inputs);
  spectral->add_option("--seed", sp.seed);
  spectral->add_option("--w-scale", sp.w_scale, "Spectral scale of W (0: constant layer)");
  spectral->add_option("--iters", sp.iters);
  spectral->add_option("--probe", sp.probe, "model | linear:<c>");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (bilevel->parsed()) return cmd_bilevel(bl);
    if (opaq->parsed()) return cmd_opa_quality(oq);
    if (deq->parsed()) return cmd_deq_toy(dt);
    if (spectral->parsed()) return cmd_spectral(sp);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  }
  return kExitConfig;
}

}  // namespace shine_cli
