#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "oracles.hpp"
#include "traffic/pca.hpp"

using namespace traffic;
namespace fs = std::filesystem;

namespace {
TransferValues values_from(const std::vector<std::vector<double>>& rows,
                           std::vector<CongestionLabel> labels = {}) {
  TransferValues tv;
  int64_t n = static_cast<int64_t>(rows.size());
  int64_t d = static_cast<int64_t>(rows[0].size());
  tv.matrix = Tensor({n, d});
  for (int64_t r = 0; r < n; ++r)
    for (int64_t c = 0; c < d; ++c)
      tv.matrix.at2(r, c) = static_cast<float>(rows[static_cast<size_t>(r)][static_cast<size_t>(c)]);
  if (labels.empty()) labels.assign(static_cast<size_t>(n), CongestionLabel::Low);
  tv.labels = std::move(labels);
  return tv;
}

double dot2(const std::vector<double>& a, const std::vector<double>& b, size_t off_a, size_t off_b,
            size_t d) {
  double s = 0;
  for (size_t i = 0; i < d; ++i) s += a[off_a + i] * b[off_b + i];
  return s;
}
}  // namespace

TEST_CASE("collinear data: zero second variance, PC1 parallel to the line") {
  std::vector<std::vector<double>> rows;
  double dir[3] = {2.0 / 3.0, -2.0 / 3.0, 1.0 / 3.0};  // unit vector
  for (int i = 0; i < 6; ++i)
    rows.push_back({i * dir[0] + 1, i * dir[1] - 2, i * dir[2] + 0.5});
  auto res = pca_fit(values_from(rows));
  CHECK(res.explained_variance[1] == doctest::Approx(0.0).epsilon(1e-10));
  double align = std::abs(res.components[0] * dir[0] + res.components[1] * dir[1] +
                          res.components[2] * dir[2]);
  CHECK(align == doctest::Approx(1.0).epsilon(1e-8));
}

TEST_CASE("components are orthonormal within 1e-8") {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    int64_t n = 4 + static_cast<int64_t>(rng.next_below(8));
    int64_t d = 2 + static_cast<int64_t>(rng.next_below(7));
    std::vector<std::vector<double>> rows(static_cast<size_t>(n),
                                          std::vector<double>(static_cast<size_t>(d)));
    for (auto& r : rows)
      for (auto& v : r) v = rng.next_double() * 10 - 5;
    auto res = pca_fit(values_from(rows));
    size_t dd = static_cast<size_t>(d);
    CHECK(std::abs(dot2(res.components, res.components, 0, 0, dd) - 1.0) < 1e-8);
    CHECK(std::abs(dot2(res.components, res.components, dd, dd, dd) - 1.0) < 1e-8);
    CHECK(std::abs(dot2(res.components, res.components, 0, dd, dd)) < 1e-8);
  }
}

TEST_CASE("pca matches the covariance eigendecomposition oracle (d <= n)") {
  Rng rng(7);
  std::vector<double> flat;
  std::vector<std::vector<double>> rows;
  for (int r = 0; r < 6; ++r) {
    std::vector<double> row;
    // round through float so both routes consume identical values
    for (int c = 0; c < 4; ++c) row.push_back(static_cast<float>(rng.next_double() * 4 - 2));
    flat.insert(flat.end(), row.begin(), row.end());
    rows.push_back(row);
  }
  auto res = pca_fit(values_from(rows));
  auto oracle = oracles::pca_covariance_oracle(flat, 6, 4);
  for (int k = 0; k < 2; ++k) {
    CHECK(std::abs(res.explained_variance[static_cast<size_t>(k)] -
                   oracle.explained[static_cast<size_t>(k)]) < 1e-8);
    for (int c = 0; c < 4; ++c)
      CHECK(std::abs(res.components[static_cast<size_t>(k * 4 + c)] -
                     oracle.components[static_cast<size_t>(k)][static_cast<size_t>(c)]) < 1e-8);
  }
}

TEST_CASE("the Gram route (d > n) agrees with the covariance oracle") {
  Rng rng(11);
  std::vector<double> flat;
  std::vector<std::vector<double>> rows;
  for (int r = 0; r < 4; ++r) {
    std::vector<double> row;
    for (int c = 0; c < 7; ++c) row.push_back(static_cast<float>(rng.next_double() * 2 - 1));
    flat.insert(flat.end(), row.begin(), row.end());
    rows.push_back(row);
  }
  auto res = pca_fit(values_from(rows));
  auto oracle = oracles::pca_covariance_oracle(flat, 4, 7);
  for (int k = 0; k < 2; ++k) {
    CHECK(std::abs(res.explained_variance[static_cast<size_t>(k)] -
                   oracle.explained[static_cast<size_t>(k)]) < 1e-8);
    for (int c = 0; c < 7; ++c)
      CHECK(std::abs(res.components[static_cast<size_t>(k * 7 + c)] -
                     oracle.components[static_cast<size_t>(k)][static_cast<size_t>(c)]) < 1e-8);
  }
}

TEST_CASE("identical rows are a degenerate-data error") {
  std::vector<std::vector<double>> rows(5, {1.0, 2.0, 3.0});
  CHECK_THROWS_AS(pca_fit(values_from(rows)), DataError);
}

TEST_CASE("pca_fit needs at least 2 samples and exactly 2 components") {
  std::vector<std::vector<double>> one(1, {1.0, 2.0});
  CHECK_THROWS_AS(pca_fit(values_from(one)), DataError);
  std::vector<std::vector<double>> rows{{1, 2}, {3, 4}, {5, 7}};
  CHECK_THROWS_AS(pca_fit(values_from(rows), 3), ConfigError);
}

TEST_CASE("projecting the fit's own data reproduces projected; mean maps to origin") {
  Rng rng(13);
  std::vector<std::vector<double>> rows;
  for (int r = 0; r < 8; ++r) {
    std::vector<double> row;
    for (int c = 0; c < 5; ++c) row.push_back(rng.next_double() * 6 - 3);
    rows.push_back(row);
  }
  auto tv = values_from(rows);
  auto res = pca_fit(tv);
  auto again = pca_project(res, tv.matrix);
  for (size_t i = 0; i < again.size(); ++i) {
    CHECK(again[i][0] == doctest::Approx(res.projected[i][0]).epsilon(1e-9));
    CHECK(again[i][1] == doctest::Approx(res.projected[i][1]).epsilon(1e-9));
  }
  Tensor mean_row({1, 5});
  for (int c = 0; c < 5; ++c) mean_row.at2(0, c) = static_cast<float>(res.mean[static_cast<size_t>(c)]);
  auto origin = pca_project(res, mean_row);
  CHECK(std::abs(origin[0][0]) < 1e-5);  // float storage of the mean row
  CHECK(std::abs(origin[0][1]) < 1e-5);

  CHECK_THROWS_AS(pca_project(res, Tensor({1, 4})), ShapeError);
}

TEST_CASE("row permutation permutes projections and keeps components") {
  Rng rng(17);
  std::vector<std::vector<double>> rows;
  for (int r = 0; r < 7; ++r) {
    std::vector<double> row;
    for (int c = 0; c < 3; ++c) row.push_back(rng.next_double());
    rows.push_back(row);
  }
  auto res = pca_fit(values_from(rows));
  auto rotated = rows;
  std::rotate(rotated.begin(), rotated.begin() + 3, rotated.end());
  auto res2 = pca_fit(values_from(rotated));
  for (size_t i = 0; i < res.components.size(); ++i)
    CHECK(res.components[i] == doctest::Approx(res2.components[i]).epsilon(1e-9));
  for (size_t i = 0; i < rows.size(); ++i) {
    size_t j = (i + rows.size() - 3) % rows.size();
    CHECK(res.projected[i][0] == doctest::Approx(res2.projected[j][0]).epsilon(1e-9));
    CHECK(res.projected[i][1] == doctest::Approx(res2.projected[j][1]).epsilon(1e-9));
  }
}

TEST_CASE("data in a 2-D subspace reconstructs exactly") {
  Rng rng(19);
  double u[4] = {0.5, 0.5, 0.5, 0.5};
  double v[4] = {0.5, -0.5, 0.5, -0.5};
  std::vector<std::vector<double>> rows;
  for (int r = 0; r < 10; ++r) {
    double a = rng.next_double() * 4 - 2, b = rng.next_double() * 2 - 1;
    std::vector<double> row(4);
    for (int c = 0; c < 4; ++c) row[static_cast<size_t>(c)] = a * u[c] + b * v[c] + 3.0;
    rows.push_back(row);
  }
  auto tv = values_from(rows);
  auto res = pca_fit(tv);
  // inverse map: centered ~= projected * components
  for (size_t r = 0; r < rows.size(); ++r)
    for (size_t c = 0; c < 4; ++c) {
      double centered = rows[r][c] - res.mean[c];
      double rebuilt = res.projected[r][0] * res.components[c] +
                       res.projected[r][1] * res.components[4 + c];
      CHECK(std::abs(centered - rebuilt) < 1e-6);  // float matrix storage limits this
    }
}

TEST_CASE("total variance dominates the explained variance") {
  Rng rng(23);
  std::vector<std::vector<double>> rows;
  for (int r = 0; r < 9; ++r) {
    std::vector<double> row;
    for (int c = 0; c < 6; ++c) row.push_back(rng.next_double() * 8);
    rows.push_back(row);
  }
  auto tv = values_from(rows);
  auto res = pca_fit(tv);
  double total = 0;
  for (int c = 0; c < 6; ++c) {
    double col_mean = res.mean[static_cast<size_t>(c)];
    for (int r = 0; r < 9; ++r) {
      double v = static_cast<double>(tv.matrix.at2(r, c)) - col_mean;
      total += v * v;
    }
  }
  total /= 8.0;
  CHECK(total + 1e-9 >= res.explained_variance[0] + res.explained_variance[1]);
  CHECK(res.explained_variance[0] >= res.explained_variance[1]);
}

TEST_CASE("scatter CSV round-trips within formatting precision") {
  std::vector<std::array<double, 2>> pts{{1.23456789012345, -9.87654321e-3}, {0.5, 2.0}};
  std::vector<CongestionLabel> labels{CongestionLabel::Low, CongestionLabel::Heavy};
  auto path = fs::temp_directory_path() / "traffic_scatter.csv";
  scatter_export_csv(pts, labels, path);
  std::ifstream in(path);
  std::string header, l1, l2;
  std::getline(in, header);
  std::getline(in, l1);
  std::getline(in, l2);
  CHECK(header == "pc1,pc2,label");
  double a, b;
  char lbl[16];
  REQUIRE(std::sscanf(l1.c_str(), "%lf,%lf,%15s", &a, &b, lbl) == 3);
  CHECK(std::abs(a - pts[0][0]) < 1e-9);
  CHECK(std::abs(b - pts[0][1]) < 1e-9);
  CHECK(std::string(lbl) == "low");
}

TEST_CASE("scatter SVG is deterministic and colors all three classes") {
  std::vector<std::array<double, 2>> pts{{0, 0}, {1, 1}, {2, 0}};
  std::vector<CongestionLabel> labels{CongestionLabel::Low, CongestionLabel::Medium,
                                      CongestionLabel::Heavy};
  auto path = fs::temp_directory_path() / "traffic_scatter.svg";
  scatter_export_svg(pts, labels, path);
  std::ifstream in(path);
  std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  CHECK(text.find("#2ca02c") != std::string::npos);
  CHECK(text.find("#d62728") != std::string::npos);
  CHECK(text.find("#9467bd") != std::string::npos);
  CHECK(text.find("Heavy") != std::string::npos);

  scatter_export_svg(pts, labels, path);
  std::ifstream in2(path);
  std::string text2{std::istreambuf_iterator<char>(in2), std::istreambuf_iterator<char>()};
  CHECK(text == text2);
}

namespace {
DatasetIndex tiny_image_index(int64_t n, uint64_t seed) {
  DatasetIndex index;
  Rng rng(seed);
  for (int64_t i = 0; i < n; ++i) {
    FrameSample s;
    s.image = Tensor({64, 64, 3});
    for (auto& v : s.image.data) v = static_cast<float>(rng.next_below(256));
    s.label = static_cast<CongestionLabel>(i % 3);
    s.video_id = "v" + std::to_string(i);
    s.frame_index = 0;
    index.class_counts[static_cast<size_t>(i % 3)]++;
    index.videos[s.video_id].push_back(i);
    index.samples.push_back(std::move(s));
  }
  return index;
}
}  // namespace

TEST_CASE("transfer-value extraction: width, cache round-trip, stale detection") {
  Model m = build_model(CatalogId::VGGSmall, {}, Rng(31));
  auto index = tiny_image_index(6, 32);
  std::vector<int64_t> ids{0, 1, 2, 3, 4, 5};
  auto cache = fs::temp_directory_path() / "traffic_tv_cache.nnwt";
  fs::remove(cache);

  auto tv = extract_transfer_values(m, "flatten", index, ids, PreprocessMode::scale_pm1(), cache);
  CHECK(tv.matrix.dims == Shape{6, 256});  // VGG_S bottleneck width
  CHECK(tv.labels.size() == 6);
  REQUIRE(fs::exists(cache));

  auto tv2 = extract_transfer_values(m, "flatten", index, ids, PreprocessMode::scale_pm1(), cache);
  CHECK(tv2.matrix.data == tv.matrix.data);  // bit-identical from cache

  // retrained model -> fingerprint mismatch -> stale-cache error
  Model other = build_model(CatalogId::VGGSmall, {}, Rng(99));
  CHECK_THROWS_WITH_AS(
      extract_transfer_values(other, "flatten", index, ids, PreprocessMode::scale_pm1(), cache),
      doctest::Contains("stale"), DataError);
  CHECK_THROWS_AS(
      extract_transfer_values(m, "missing", index, ids, PreprocessMode::scale_pm1(), std::nullopt),
      ConfigError);
}

TEST_CASE("separation metric: coincident clouds score 0, far tight clusters score high") {
  std::vector<std::array<double, 2>> pts;
  std::vector<CongestionLabel> labels;
  Rng rng(29);
  for (int i = 0; i < 20; ++i) {
    double x = rng.next_double(), y = rng.next_double();
    pts.push_back({x, y});
    labels.push_back(CongestionLabel::Low);
    pts.push_back({x, y});
    labels.push_back(CongestionLabel::Medium);
  }
  CHECK(separation_metric(pts, labels, {CongestionLabel::Low}, {CongestionLabel::Medium}) ==
        doctest::Approx(0.0).epsilon(1e-9));

  pts.clear();
  labels.clear();
  for (int i = 0; i < 50; ++i) {
    pts.push_back({rng.next_normal(), rng.next_normal()});
    labels.push_back(CongestionLabel::Low);
    pts.push_back({100 + rng.next_normal(), rng.next_normal()});
    labels.push_back(CongestionLabel::Heavy);
  }
  double score = separation_metric(pts, labels, {CongestionLabel::Low}, {CongestionLabel::Heavy});
  CHECK(score > 50);
  CHECK(score < 200);

  CHECK_THROWS_AS(separation_metric(pts, labels, {CongestionLabel::Medium}, {CongestionLabel::Low}),
                  DataError);
}
