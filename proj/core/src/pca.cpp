#include "traffic/pca.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>

#include "traffic/error.hpp"
#include "traffic/optimizer.hpp"
#include "traffic/weights_io.hpp"

namespace traffic {

namespace {

uint64_t fnv1a(uint64_t h, const void* data, size_t n) {
  const uint8_t* p = static_cast<const uint8_t*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

uint64_t fnv1a_str(uint64_t h, const std::string& s) { return fnv1a(h, s.data(), s.size()); }

uint64_t fingerprint(const Model& truncated, const std::string& layer_name,
                     const DatasetIndex& index, const std::vector<int64_t>& sample_ids,
                     const PreprocessMode& pre) {
  uint64_t h = 14695981039346656037ull;
  h = fnv1a_str(h, truncated.name);
  h = fnv1a_str(h, layer_name);
  h = fnv1a_str(h, pre.tag());
  for (const auto& layer : truncated.layers)
    if (layer.tensors.present) {
      h = fnv1a_str(h, layer.spec.name);
      h = fnv1a(h, layer.tensors.weights.data.data(), layer.tensors.weights.data.size() * 4);
      h = fnv1a(h, layer.tensors.bias.data.data(), layer.tensors.bias.data.size() * 4);
    }
  int64_t n = static_cast<int64_t>(sample_ids.size());
  h = fnv1a(h, &n, sizeof n);
  for (int64_t sid : sample_ids) {
    const FrameSample& s = index.samples[static_cast<size_t>(sid)];
    h = fnv1a_str(h, s.video_id);
    h = fnv1a(h, &s.frame_index, sizeof s.frame_index);
    int lbl = static_cast<int>(s.label);
    h = fnv1a(h, &lbl, sizeof lbl);
    h = fnv1a(h, s.image.data.data(), s.image.data.size() * 4);
  }
  return h;
}

std::string fingerprint_record_name(uint64_t h) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "fingerprint/%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// Cyclic Jacobi eigendecomposition of a symmetric matrix (row-major n x n).
// Eigenpairs come back sorted by eigenvalue descending (ties by index).
struct EigenResult {
  std::vector<double> values;
  std::vector<std::vector<double>> vectors;
};

EigenResult jacobi_eigen(std::vector<double> a, int64_t n) {
  std::vector<double> v(static_cast<size_t>(n * n), 0.0);
  for (int64_t i = 0; i < n; ++i) v[static_cast<size_t>(i * n + i)] = 1.0;
  auto A = [&](int64_t r, int64_t c) -> double& { return a[static_cast<size_t>(r * n + c)]; };
  auto V = [&](int64_t r, int64_t c) -> double& { return v[static_cast<size_t>(r * n + c)]; };
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0, total = 0;
    for (int64_t p = 0; p < n; ++p)
      for (int64_t q = 0; q < n; ++q) {
        double v = A(p, q) * A(p, q);
        total += v;
        if (q > p) off += v;
      }
    if (off <= 1e-28 * total + 1e-300) break;
    for (int64_t p = 0; p < n; ++p)
      for (int64_t q = p + 1; q < n; ++q) {
        double apq = A(p, q);
        if (std::abs(apq) < 1e-300) continue;
        double theta = (A(q, q) - A(p, p)) / (2.0 * apq);
        double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
        for (int64_t k = 0; k < n; ++k) {
          double akp = A(k, p), akq = A(k, q);
          A(k, p) = c * akp - s * akq;
          A(k, q) = s * akp + c * akq;
        }
        for (int64_t k = 0; k < n; ++k) {
          double apk = A(p, k), aqk = A(q, k);
          A(p, k) = c * apk - s * aqk;
          A(q, k) = s * apk + c * aqk;
        }
        for (int64_t k = 0; k < n; ++k) {
          double vkp = V(k, p), vkq = V(k, q);
          V(k, p) = c * vkp - s * vkq;
          V(k, q) = s * vkp + c * vkq;
        }
      }
  }
  std::vector<int64_t> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int64_t x, int64_t y) {
    if (A(x, x) != A(y, y)) return A(x, x) > A(y, y);
    return x < y;
  });
  EigenResult res;
  for (int64_t r = 0; r < n; ++r) {
    res.values.push_back(A(order[static_cast<size_t>(r)], order[static_cast<size_t>(r)]));
    std::vector<double> vec(static_cast<size_t>(n));
    for (int64_t k = 0; k < n; ++k) vec[static_cast<size_t>(k)] = V(k, order[static_cast<size_t>(r)]);
    res.vectors.push_back(std::move(vec));
  }
  return res;
}

void fix_sign(std::vector<double>& component) {
  size_t best = 0;
  for (size_t i = 1; i < component.size(); ++i)
    if (std::abs(component[i]) > std::abs(component[best])) best = i;
  if (component[best] < 0)
    for (auto& c : component) c = -c;
}

// Deterministic unit vector orthogonal to v1 (rank-deficient fallback).
std::vector<double> orthogonal_completion(const std::vector<double>& v1) {
  size_t d = v1.size();
  size_t k = 0;
  for (size_t i = 1; i < d; ++i)
    if (std::abs(v1[i]) < std::abs(v1[k])) k = i;
  std::vector<double> v2(d, 0.0);
  v2[k] = 1.0;
  double dot = v1[k];
  double norm = 0;
  for (size_t i = 0; i < d; ++i) {
    v2[i] -= dot * v1[i];
    norm += v2[i] * v2[i];
  }
  norm = std::sqrt(norm);
  for (auto& c : v2) c /= norm;
  return v2;
}

}  // namespace

TransferValues extract_transfer_values(const Model& model, const std::string& layer_name,
                                       const DatasetIndex& index,
                                       const std::vector<int64_t>& sample_ids,
                                       const PreprocessMode& pre,
                                       const std::optional<std::filesystem::path>& cache_path) {
  Model extractor = truncate_at(model, layer_name);
  uint64_t fp = fingerprint(extractor, layer_name, index, sample_ids, pre);
  std::string fp_record = fingerprint_record_name(fp);

  TransferValues values;
  values.model_name = model.name;
  values.layer_name = layer_name;
  for (int64_t sid : sample_ids)
    values.labels.push_back(index.samples[static_cast<size_t>(sid)].label);

  if (cache_path && std::filesystem::exists(*cache_path)) {
    auto records = read_weight_container(*cache_path);
    const WeightRecord* data = nullptr;
    const WeightRecord* fprec = nullptr;
    for (const auto& r : records) {
      if (r.name == "transfer_values") data = &r;
      if (r.name.rfind("fingerprint/", 0) == 0) fprec = &r;
    }
    if (!data || !fprec || data->tensors.size() != 2)
      throw DataError("stale transfer-value cache (malformed): " + cache_path->string());
    if (fprec->name != fp_record)
      throw DataError("stale transfer-value cache (fingerprint mismatch, expected " + fp_record +
                      ", found " + fprec->name + "): " + cache_path->string());
    values.matrix = data->tensors[0];
    return values;
  }

  int64_t n = static_cast<int64_t>(sample_ids.size());
  if (n < 1) throw DataError("extract_transfer_values: empty sample set");
  int64_t width = shape_numel(extractor.layers.back().output_shape);
  values.matrix = Tensor({n, width});
  constexpr int64_t kChunk = 64;
  for (int64_t at = 0; at < n; at += kChunk) {
    int64_t take = std::min(kChunk, n - at);
    std::vector<int64_t> ids(sample_ids.begin() + at, sample_ids.begin() + at + take);
    TrainData batch = materialize(index, ids, pre, model.input_shape[0], model.input_shape[1]);
    Tensor out = predict(extractor, batch.x);
    std::copy(out.data.begin(), out.data.end(), values.matrix.data.begin() + at * width);
  }

  if (cache_path) {
    Tensor label_row({n});
    for (int64_t i = 0; i < n; ++i)
      label_row.data[static_cast<size_t>(i)] = static_cast<float>(values.labels[static_cast<size_t>(i)]);
    write_weight_container(*cache_path,
                           {{"transfer_values", {values.matrix, label_row}}, {fp_record, {}}});
  }
  return values;
}

PCAResult pca_fit(const TransferValues& values, int n_components) {
  if (n_components != 2) throw ConfigError("pca_fit supports exactly 2 components");
  int64_t n = values.matrix.dims[0], d = values.matrix.dims[1];
  if (n < 2) throw DataError("pca_fit: need at least 2 samples");
  PCAResult res;
  res.mean.assign(static_cast<size_t>(d), 0.0);
  for (int64_t r = 0; r < n; ++r)
    for (int64_t c = 0; c < d; ++c)
      res.mean[static_cast<size_t>(c)] += static_cast<double>(values.matrix.at2(r, c));
  for (auto& m : res.mean) m /= static_cast<double>(n);

  // centered matrix in double
  std::vector<double> x(static_cast<size_t>(n * d));
  double max_abs = 0;
  for (int64_t r = 0; r < n; ++r)
    for (int64_t c = 0; c < d; ++c) {
      double v = static_cast<double>(values.matrix.at2(r, c)) - res.mean[static_cast<size_t>(c)];
      x[static_cast<size_t>(r * d + c)] = v;
      max_abs = std::max(max_abs, std::abs(v));
    }
  if (max_abs == 0.0) throw DataError("pca_fit: degenerate data (all rows identical)");

  std::vector<std::vector<double>> comps(2);
  std::array<double, 2> ev{0, 0};
  if (d <= n) {
    // covariance route: C = X^T X / (n-1), d x d
    std::vector<double> cov(static_cast<size_t>(d * d), 0.0);
    for (int64_t r = 0; r < n; ++r)
      for (int64_t i = 0; i < d; ++i) {
        double xi = x[static_cast<size_t>(r * d + i)];
        if (xi == 0.0) continue;
        for (int64_t j = 0; j < d; ++j)
          cov[static_cast<size_t>(i * d + j)] += xi * x[static_cast<size_t>(r * d + j)];
      }
    for (auto& c : cov) c /= static_cast<double>(n - 1);
    EigenResult eig = jacobi_eigen(std::move(cov), d);
    for (int k = 0; k < 2; ++k) {
      ev[static_cast<size_t>(k)] = std::max(0.0, eig.values[static_cast<size_t>(k)]);
      comps[static_cast<size_t>(k)] = eig.vectors[static_cast<size_t>(k)];
    }
  } else {
    // Gram route: G = X X^T, n x n; v = X^T u / sqrt(lambda)
    std::vector<double> gram(static_cast<size_t>(n * n), 0.0);
    for (int64_t r = 0; r < n; ++r)
      for (int64_t s = r; s < n; ++s) {
        double acc = 0;
        for (int64_t c = 0; c < d; ++c)
          acc += x[static_cast<size_t>(r * d + c)] * x[static_cast<size_t>(s * d + c)];
        gram[static_cast<size_t>(r * n + s)] = acc;
        gram[static_cast<size_t>(s * n + r)] = acc;
      }
    EigenResult eig = jacobi_eigen(std::move(gram), n);
    double lead = std::max(eig.values[0], 0.0);
    for (int k = 0; k < 2; ++k) {
      double lambda = std::max(0.0, eig.values[static_cast<size_t>(k)]);
      ev[static_cast<size_t>(k)] = lambda / static_cast<double>(n - 1);
      std::vector<double> v(static_cast<size_t>(d), 0.0);
      if (lambda > lead * 1e-24 && lambda > 0) {
        double inv = 1.0 / std::sqrt(lambda);
        for (int64_t r = 0; r < n; ++r) {
          double u = eig.vectors[static_cast<size_t>(k)][static_cast<size_t>(r)];
          if (u == 0.0) continue;
          for (int64_t c = 0; c < d; ++c)
            v[static_cast<size_t>(c)] += u * x[static_cast<size_t>(r * d + c)] * inv;
        }
      }
      comps[static_cast<size_t>(k)] = std::move(v);
    }
    ev[1] = std::min(ev[1], ev[0]);
  }

  // re-orthonormalize (exact no-op for the covariance route, cleans up the
  // Gram route and fills rank-deficient directions)
  auto norm_of = [](const std::vector<double>& v) {
    double s = 0;
    for (double c : v) s += c * c;
    return std::sqrt(s);
  };
  double n1 = norm_of(comps[0]);
  if (n1 < 1e-12) throw DataError("pca_fit: degenerate leading component");
  for (auto& c : comps[0]) c /= n1;
  double dot = 0;
  for (size_t i = 0; i < comps[1].size(); ++i) dot += comps[0][i] * comps[1][i];
  for (size_t i = 0; i < comps[1].size(); ++i) comps[1][i] -= dot * comps[0][i];
  double n2 = norm_of(comps[1]);
  if (n2 < 1e-9) {
    comps[1] = orthogonal_completion(comps[0]);
    ev[1] = 0.0;
  } else {
    for (auto& c : comps[1]) c /= n2;
  }
  fix_sign(comps[0]);
  fix_sign(comps[1]);

  res.components.resize(static_cast<size_t>(2 * d));
  for (int k = 0; k < 2; ++k)
    std::copy(comps[static_cast<size_t>(k)].begin(), comps[static_cast<size_t>(k)].end(),
              res.components.begin() + k * d);
  res.explained_variance = ev;
  res.projected.resize(static_cast<size_t>(n));
  for (int64_t r = 0; r < n; ++r)
    for (int k = 0; k < 2; ++k) {
      double acc = 0;
      for (int64_t c = 0; c < d; ++c)
        acc += x[static_cast<size_t>(r * d + c)] * res.components[static_cast<size_t>(k * d + c)];
      res.projected[static_cast<size_t>(r)][static_cast<size_t>(k)] = acc;
    }
  return res;
}

std::vector<std::array<double, 2>> pca_project(const PCAResult& result, const Tensor& values) {
  if (values.rank() != 2 || values.dims[1] != result.dim())
    throw ShapeError("pca_project: feature width does not match the fit");
  int64_t n = values.dims[0], d = values.dims[1];
  std::vector<std::array<double, 2>> out(static_cast<size_t>(n));
  for (int64_t r = 0; r < n; ++r)
    for (int k = 0; k < 2; ++k) {
      double acc = 0;
      for (int64_t c = 0; c < d; ++c)
        acc += (static_cast<double>(values.at2(r, c)) - result.mean[static_cast<size_t>(c)]) *
               result.components[static_cast<size_t>(k * d + c)];
      out[static_cast<size_t>(r)][static_cast<size_t>(k)] = acc;
    }
  return out;
}

void scatter_export_csv(const std::vector<std::array<double, 2>>& projected,
                        const std::vector<CongestionLabel>& labels,
                        const std::filesystem::path& path) {
  if (projected.size() != labels.size()) throw ShapeError("scatter export: size mismatch");
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << "pc1,pc2,label\n";
  char buf[96];
  for (size_t i = 0; i < projected.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.12g,%.12g,%s\n", projected[i][0], projected[i][1],
                  label_name(labels[i]));
    out << buf;
  }
  if (!out) throw IoError("write failed: " + path.string());
}

void scatter_export_svg(const std::vector<std::array<double, 2>>& projected,
                        const std::vector<CongestionLabel>& labels,
                        const std::filesystem::path& path) {
  if (projected.size() != labels.size()) throw ShapeError("scatter export: size mismatch");
  const int width = 640, height = 480, margin = 40;
  double min_x = std::numeric_limits<double>::max(), max_x = std::numeric_limits<double>::lowest();
  double min_y = min_x, max_y = max_x;
  for (const auto& p : projected) {
    min_x = std::min(min_x, p[0]);
    max_x = std::max(max_x, p[0]);
    min_y = std::min(min_y, p[1]);
    max_y = std::max(max_y, p[1]);
  }
  if (projected.empty()) min_x = max_x = min_y = max_y = 0;
  double span_x = max_x - min_x > 0 ? max_x - min_x : 1.0;
  double span_y = max_y - min_y > 0 ? max_y - min_y : 1.0;
  static const char* kColors[3] = {"#2ca02c", "#d62728", "#9467bd"};  // L green, M red, H purple
  static const char* kNames[3] = {"Low", "Medium", "Heavy"};

  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << " " << height << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  char buf[160];
  for (size_t i = 0; i < projected.size(); ++i) {
    double px = margin + (projected[i][0] - min_x) / span_x * (width - 2 * margin);
    double py = height - margin - (projected[i][1] - min_y) / span_y * (height - 2 * margin);
    std::snprintf(buf, sizeof buf,
                  "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"3\" fill=\"%s\" fill-opacity=\"0.7\"/>\n",
                  px, py, kColors[static_cast<size_t>(labels[i])]);
    out << buf;
  }
  for (int c = 0; c < 3; ++c) {
    int ly = margin + 18 * c;
    std::snprintf(buf, sizeof buf,
                  "<circle cx=\"%d\" cy=\"%d\" r=\"5\" fill=\"%s\"/>"
                  "<text x=\"%d\" y=\"%d\" font-family=\"sans-serif\" font-size=\"12\">%s</text>\n",
                  width - 110, ly, kColors[c], width - 98, ly + 4, kNames[c]);
    out << buf;
  }
  out << "</svg>\n";
  if (!out) throw IoError("write failed: " + path.string());
}

double separation_metric(const std::vector<std::array<double, 2>>& projected,
                         const std::vector<CongestionLabel>& labels,
                         const std::set<CongestionLabel>& a, const std::set<CongestionLabel>& b) {
  if (projected.size() != labels.size()) throw ShapeError("separation_metric: size mismatch");
  auto stats = [&](const std::set<CongestionLabel>& cls, std::array<double, 2>& centroid) {
    int64_t count = 0;
    centroid = {0, 0};
    for (size_t i = 0; i < labels.size(); ++i)
      if (cls.count(labels[i])) {
        centroid[0] += projected[i][0];
        centroid[1] += projected[i][1];
        ++count;
      }
    if (count == 0) throw DataError("separation_metric: class set has no samples");
    centroid[0] /= static_cast<double>(count);
    centroid[1] /= static_cast<double>(count);
    double ss = 0;
    for (size_t i = 0; i < labels.size(); ++i)
      if (cls.count(labels[i])) {
        double dx = projected[i][0] - centroid[0], dy = projected[i][1] - centroid[1];
        ss += dx * dx + dy * dy;
      }
    return std::sqrt(ss / static_cast<double>(count));
  };
  std::array<double, 2> ca{}, cb{};
  double ra = stats(a, ca), rb = stats(b, cb);
  double dist = std::hypot(ca[0] - cb[0], ca[1] - cb[1]);
  double denom = 0.5 * (ra + rb);
  if (denom == 0) return dist == 0 ? 0.0 : std::numeric_limits<double>::infinity();
  return dist / denom;
}

}  // namespace traffic
