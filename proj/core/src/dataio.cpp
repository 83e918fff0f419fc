#include "shine/dataio.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

namespace shine {

double row_dot(const SparseRow& row, const Vector& z) {
  double acc = 0.0;
  for (std::size_t k = 0; k < row.indices.size(); ++k) {
    const std::size_t j = static_cast<std::size_t>(row.indices[k]);
    if (j < z.size()) acc += row.values[k] * z[j];
  }
  return acc;
}

void row_axpy(double coef, const SparseRow& row, Vector& out) {
  for (std::size_t k = 0; k < row.indices.size(); ++k) {
    const std::size_t j = static_cast<std::size_t>(row.indices[k]);
    if (j < out.size()) out[j] += coef * row.values[k];
  }
}

namespace {

bool parse_double(const std::string& tok, double& out) {
  const char* begin = tok.c_str();
  char* end = nullptr;
  out = std::strtod(begin, &end);
  return end == begin + tok.size() && tok.size() > 0;
}

int coerce_label(double raw) {
  // 0/1 labelled files are remapped; anything positive counts as +1.
  return raw > 0.0 ? 1 : -1;
}

}  // namespace

Dataset parse_libsvm(std::istream& in, const std::string& name) {
  Dataset ds;
  ds.name = name;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    // strip trailing CR and comments
    if (auto pos = line.find('#'); pos != std::string::npos) line.resize(pos);
    std::istringstream ls(line);
    std::string tok;
    if (!(ls >> tok)) continue;  // blank line

    SparseRow row;
    double raw_label = 0.0;
    if (!parse_double(tok, raw_label)) throw MalformedLine(line_no, "bad label token '" + tok + "'");
    row.label = coerce_label(raw_label);

    int prev_index = 0;
    while (ls >> tok) {
      const auto colon = tok.find(':');
      if (colon == std::string::npos) throw MalformedLine(line_no, "expected idx:val, got '" + tok + "'");
      double idx_raw = 0.0, val = 0.0;
      if (!parse_double(tok.substr(0, colon), idx_raw) || idx_raw != std::floor(idx_raw) || idx_raw < 1.0)
        throw MalformedLine(line_no, "bad feature index in '" + tok + "'");
      if (!parse_double(tok.substr(colon + 1), val))
        throw MalformedLine(line_no, "bad feature value in '" + tok + "'");
      const int idx = static_cast<int>(idx_raw);
      if (idx <= prev_index) throw NonMonotonicIndex(line_no);
      prev_index = idx;
      row.indices.push_back(idx - 1);  // stored 0-based
      row.values.push_back(val);
      ds.n_features = std::max(ds.n_features, idx);
    }
    ds.rows.push_back(std::move(row));
  }
  if (ds.rows.empty()) throw EmptyDataset("no data rows in stream");
  return ds;
}

namespace {

std::string read_gz_file(const std::string& path) {
  gzFile gz = gzopen(path.c_str(), "rb");
  if (!gz) throw std::runtime_error("cannot open " + path);
  std::string content;
  char buf[1 << 16];
  int got = 0;
  while ((got = gzread(gz, buf, sizeof(buf))) > 0) content.append(buf, static_cast<std::size_t>(got));
  gzclose(gz);
  return content;
}

}  // namespace

Dataset load_dataset(const std::string& path) {
  if (path.size() > 3 && path.compare(path.size() - 3, 3, ".gz") == 0) {
    std::istringstream in(read_gz_file(path));
    return parse_libsvm(in, path);
  }
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return parse_libsvm(in, path);
}

void write_libsvm(const Dataset& ds, std::ostream& out) {
  char buf[64];
  for (const SparseRow& row : ds.rows) {
    out << (row.label > 0 ? "+1" : "-1");
    for (std::size_t k = 0; k < row.indices.size(); ++k) {
      if (row.values[k] == 0.0) continue;
      std::snprintf(buf, sizeof(buf), " %d:%.17g", row.indices[k] + 1, row.values[k]);
      out << buf;
    }
    out << '\n';
  }
}

DataSplit split_dataset(const Dataset& ds, double f_train, double f_val, double f_test,
                        std::uint64_t seed) {
  if (f_train <= 0.0 || f_val <= 0.0 || f_test <= 0.0 ||
      std::abs(f_train + f_val + f_test - 1.0) > 1e-9)
    throw std::invalid_argument("split fractions must be positive and sum to 1");

  const std::size_t n = ds.rows.size();
  const auto n_val = static_cast<std::size_t>(std::lround(static_cast<double>(n) * f_val));
  const auto n_test = static_cast<std::size_t>(std::lround(static_cast<double>(n) * f_test));
  if (n_val == 0 || n_test == 0 || n_val + n_test >= n)
    throw TooFewSamples("split would leave an empty part");
  const std::size_t n_train = n - n_val - n_test;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  auto take = [&](std::size_t begin, std::size_t count, const char* tag) {
    Dataset part;
    part.n_features = ds.n_features;
    part.name = ds.name.empty() ? tag : ds.name + ":" + tag;
    part.rows.reserve(count);
    for (std::size_t i = 0; i < count; ++i) part.rows.push_back(ds.rows[order[begin + i]]);
    return part;
  };

  DataSplit split;
  split.train = take(0, n_train, "train");
  split.validation = take(n_train, n_val, "val");
  split.test = take(n_train + n_val, n_test, "test");
  return split;
}

Dataset synth_logreg_data(int n, int d, std::uint64_t seed, double noise) {
  if (n < 1 || d < 1) throw std::invalid_argument("synth_logreg_data: n, d must be positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  Vector w(static_cast<std::size_t>(d));
  for (double& x : w) x = gauss(rng) / std::sqrt(static_cast<double>(d));

  Dataset ds;
  ds.n_features = d;
  {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "synth:%dx%d", n, d);
    ds.name = buf;
  }
  ds.rows.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    SparseRow row;
    row.indices.resize(static_cast<std::size_t>(d));
    row.values.resize(static_cast<std::size_t>(d));
    double margin = 0.0;
    for (int j = 0; j < d; ++j) {
      const double x = gauss(rng);
      row.indices[static_cast<std::size_t>(j)] = j;
      row.values[static_cast<std::size_t>(j)] = x;
      margin += x * w[static_cast<std::size_t>(j)];
    }
    margin += noise * gauss(rng);
    row.label = margin >= 0.0 ? 1 : -1;
    ds.rows.push_back(std::move(row));
  }
  return ds;
}

}  // namespace shine
