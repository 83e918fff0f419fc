#include "shine/trace_io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <stdexcept>

namespace shine {

namespace {

std::string fmt(double v) {
  if (!std::isfinite(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void write_trace_csv(const RunTrace& trace, std::ostream& out) {
  const std::size_t theta_dim = trace.rows.empty() ? 1 : trace.rows.front().theta.size();
  out << "schema=1\n";
  out << "outer_iter";
  for (std::size_t j = 0; j < theta_dim; ++j) out << ",theta_" << j;
  out << ",train_loss,val_loss,test_loss,inner_iters,backward_iters,fallback_count,"
         "inner_tol,backward_residual,cosine_vs_exact,cumulative_seconds,status\n";
  for (const TraceRow& row : trace.rows) {
    out << row.outer_iter;
    for (std::size_t j = 0; j < theta_dim; ++j)
      out << ',' << fmt(j < row.theta.size() ? row.theta[j] : std::nan(""));
    out << ',' << fmt(row.train_loss) << ',' << fmt(row.val_loss) << ',' << fmt(row.test_loss)
        << ',' << row.inner_iters << ',' << row.backward_iters << ',' << row.fallback_count
        << ',' << fmt(row.inner_tol) << ',' << fmt(row.backward_residual) << ','
        << fmt(row.cosine_vs_exact) << ',' << fmt(row.cumulative_seconds) << ',' << row.status
        << '\n';
  }
}

void write_trace_csv_file(const RunTrace& trace, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  write_trace_csv(trace, out);
}

}  // namespace shine
