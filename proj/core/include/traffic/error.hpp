#pragma once

#include <stdexcept>
#include <string>

namespace traffic {

// Shape/dimension violations (bad dims, mismatched operands).
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed file contents (PPM headers, weight containers). Messages name
// the byte offset where decoding failed.
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Invalid run configuration; message lists every offending key.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Filesystem failures, always carrying the path involved.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Undefined metrics (empty class rows) and degenerate inputs (rank-0 PCA
// data, stale transfer-value caches).
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace traffic
