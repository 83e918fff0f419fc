#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "shine/errors.hpp"
#include "shine/numkit.hpp"

namespace shine {

/// One sample in compressed form; indices are 0-based and strictly
/// increasing. Dense data simply lists every index.
struct SparseRow {
  std::vector<int> indices;
  std::vector<double> values;
  int label = 1;  // +1 or -1
};

double row_dot(const SparseRow& row, const Vector& z);
void row_axpy(double coef, const SparseRow& row, Vector& out);

struct Dataset {
  std::vector<SparseRow> rows;
  int n_features = 0;
  std::string name;

  std::size_t size() const { return rows.size(); }
};

struct DataSplit {
  Dataset train;
  Dataset validation;
  Dataset test;
};

/// Parses LIBSVM text: `<label> <idx>:<val> ...` with 1-based, strictly
/// increasing indices. Labels are coerced to +-1 (0/1 inputs remapped,
/// 0 -> -1). Blank lines are skipped; a stream with no data rows raises
/// EmptyDataset.
Dataset parse_libsvm(std::istream& in, const std::string& name = "");

/// Loads a LIBSVM file; paths ending in `.gz` are decompressed on the fly.
Dataset load_dataset(const std::string& path);

/// Writes LIBSVM text (1-based indices, zero entries omitted).
void write_libsvm(const Dataset& ds, std::ostream& out);

/// Seeded shuffle followed by contiguous slicing. Validation/test sizes are
/// round(n * f); the remainder goes to train.
DataSplit split_dataset(const Dataset& ds, double f_train, double f_val, double f_test,
                        std::uint64_t seed);

/// Gaussian features, ground-truth weights w, labels sign(x.w + noise * g).
Dataset synth_logreg_data(int n, int d, std::uint64_t seed, double noise);

}  // namespace shine
