#pragma once

#include <iosfwd>
#include <string>

#include "shine/outer.hpp"

namespace shine {

/// Versioned CSV: first line `schema=1`, then a header row, then one line per
/// trace row. Non-finite numerics are written as the literal `nan`; the
/// status column carries per-row state. Columns are documented in
/// docs/schema.md.
void write_trace_csv(const RunTrace& trace, std::ostream& out);
void write_trace_csv_file(const RunTrace& trace, const std::string& path);

}  // namespace shine
