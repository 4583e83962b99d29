#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "traffic/dataset.hpp"
#include "traffic/model.hpp"

namespace traffic {

struct TransferValues {
  Tensor matrix;  // [n_samples, n_features]
  std::vector<CongestionLabel> labels;
  std::string model_name;
  std::string layer_name;
};

// Runs the model truncated at `layer_name` over the given samples and
// flattens each activation into one row. With a cache path, results are
// stored in the weight-container format (pseudo-layer "transfer_values"
// holding the matrix and labels, plus a fingerprint record over model name,
// layer, weights, preprocess mode, and dataset content). A second call with
// identical inputs reads the cache back bit-identically; a fingerprint
// mismatch is an error, never a silent reuse.
TransferValues extract_transfer_values(const Model& model, const std::string& layer_name,
                                       const DatasetIndex& index,
                                       const std::vector<int64_t>& sample_ids,
                                       const PreprocessMode& pre,
                                       const std::optional<std::filesystem::path>& cache_path);

struct PCAResult {
  std::vector<double> mean;         // d
  std::vector<double> components;   // 2 x d, row-major, orthonormal rows
  std::array<double, 2> explained_variance{0, 0};  // descending, /(n-1)
  std::vector<std::array<double, 2>> projected;    // n x 2

  int64_t dim() const { return static_cast<int64_t>(mean.size()); }
};

// Deterministic 2-component PCA: center by column means, take the top-2
// right singular directions (covariance eigenvectors when d <= n, Gram
// matrix otherwise), and fix signs so each component's largest-magnitude
// coordinate is positive. All rows identical is a degenerate-data error.
PCAResult pca_fit(const TransferValues& values, int n_components = 2);

// (X - mean) * components^T for new rows of matching width.
std::vector<std::array<double, 2>> pca_project(const PCAResult& result, const Tensor& values);

// CSV columns (pc1,pc2,label) with 12 significant digits; SVG renders one
// color per class with a legend. Both byte-deterministic.
void scatter_export_csv(const std::vector<std::array<double, 2>>& projected,
                        const std::vector<CongestionLabel>& labels,
                        const std::filesystem::path& path);
void scatter_export_svg(const std::vector<std::array<double, 2>>& projected,
                        const std::vector<CongestionLabel>& labels,
                        const std::filesystem::path& path);

// Centroid distance divided by the mean within-class RMS spread; higher =
// more separable. Class sets let callers score e.g. Low vs Medium+Heavy.
double separation_metric(const std::vector<std::array<double, 2>>& projected,
                         const std::vector<CongestionLabel>& labels,
                         const std::set<CongestionLabel>& a, const std::set<CongestionLabel>& b);

}  // namespace traffic
