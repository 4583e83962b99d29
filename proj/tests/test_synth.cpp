#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "traffic/baseline.hpp"
#include "traffic/dataset.hpp"
#include "traffic/synth.hpp"

using namespace traffic;
namespace fs = std::filesystem;

namespace {
double pixel_std(const Tensor& img) {
  double mean = 0;
  for (float v : img.data) mean += v;
  mean /= static_cast<double>(img.numel());
  double ss = 0;
  for (float v : img.data) ss += (static_cast<double>(v) - mean) * (static_cast<double>(v) - mean);
  return std::sqrt(ss / static_cast<double>(img.numel()));
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}
}  // namespace

TEST_CASE("a forced single vehicle yields exactly one blob per frame") {
  SceneConfig cfg;
  cfg.non_overlap = true;
  cfg.count_range = {{{1, 1}, {9, 20}, {18, 35}}};
  auto video = generate_video(CongestionLabel::Low, 10, cfg, WeatherEffect::clear(), 5, "t0");
  CHECK(video.truth.true_count == 1);
  for (const auto& frame : video.frames) CHECK(count_blobs(frame).count == 1);
}

TEST_CASE("same seed regenerates bit-identical frames") {
  SceneConfig cfg;
  auto a = generate_video(CongestionLabel::Medium, 6, cfg, WeatherEffect::rain(30, 235), 17, "a");
  auto b = generate_video(CongestionLabel::Medium, 6, cfg, WeatherEffect::rain(30, 235), 17, "a");
  REQUIRE(a.frames.size() == b.frames.size());
  for (size_t f = 0; f < a.frames.size(); ++f) CHECK(a.frames[f].data == b.frames[f].data);
}

TEST_CASE("heavy videos carry a constant count in [18,35]") {
  SceneConfig cfg;
  auto video = generate_video(CongestionLabel::Heavy, 8, cfg, WeatherEffect::clear(), 23, "h0");
  CHECK(video.truth.true_count >= 18);
  CHECK(video.truth.true_count <= 35);
  for (const auto& boxes : video.frame_boxes)
    CHECK(static_cast<int64_t>(boxes.size()) == video.truth.true_count);
}

TEST_CASE("non_overlap mode: ground truth equals connected components") {
  SceneConfig cfg;
  cfg.non_overlap = true;
  for (uint64_t seed : {1u, 2u, 3u}) {
    auto video = generate_video(CongestionLabel::Medium, 12, cfg, WeatherEffect::clear(), seed,
                                "m" + std::to_string(seed));
    for (const auto& frame : video.frames)
      CHECK(count_blobs(frame).count == video.truth.true_count);
  }
}

TEST_CASE("non_overlap mode rejects counts beyond lane capacity") {
  SceneConfig cfg;
  cfg.non_overlap = true;
  cfg.count_range = {{{500, 500}, {9, 20}, {18, 35}}};
  CHECK_THROWS_AS(generate_video(CongestionLabel::Low, 2, cfg, WeatherEffect::clear(), 1, "x"),
                  ConfigError);
}

TEST_CASE("a 50-frame non_overlap video keeps its mean count within 1") {
  SceneConfig cfg;
  cfg.non_overlap = true;
  auto video = generate_video(CongestionLabel::Low, 50, cfg, WeatherEffect::clear(), 31, "l0");
  std::vector<int64_t> counts;
  for (const auto& frame : video.frames) counts.push_back(count_blobs(frame).count);
  CHECK(std::abs(video_mean_count(counts) - static_cast<double>(video.truth.true_count)) <= 1.0);
}

TEST_CASE("fog: density 0 is identity, density 1 is constant gray 200") {
  SceneConfig cfg;
  auto video = generate_video(CongestionLabel::Low, 1, cfg, WeatherEffect::clear(), 3, "f");
  Tensor original = video.frames[0];

  Tensor zero = original;
  apply_fog(zero, 0.0);
  CHECK(zero.data == original.data);

  Tensor full = original;
  apply_fog(full, 1.0);
  for (float v : full.data) CHECK(v == 200.0f);
}

TEST_CASE("fog density 0.5 halves the pixel standard deviation") {
  SceneConfig cfg;
  auto video = generate_video(CongestionLabel::Medium, 1, cfg, WeatherEffect::clear(), 7, "f2");
  Tensor frame = video.frames[0];
  double before = pixel_std(frame);
  REQUIRE(before > 0);
  apply_fog(frame, 0.5);
  CHECK(pixel_std(frame) / before == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("corruption with jump probability 1 repeats the first frame") {
  SceneConfig cfg;
  auto video = generate_video(CongestionLabel::Low, 5, cfg, WeatherEffect::clear(), 9, "c");
  Rng rng(4);
  apply_corruption(video.frames, 2, 1.0, rng);
  for (size_t f = 1; f < video.frames.size(); ++f)
    CHECK(video.frames[f].data == video.frames[0].data);
}

TEST_CASE("class count ranges order statistically") {
  SceneConfig cfg;
  double means[3] = {0, 0, 0};
  for (int c = 0; c < 3; ++c) {
    for (uint64_t s = 0; s < 30; ++s)
      means[c] += static_cast<double>(
          draw_video_count(static_cast<CongestionLabel>(c), cfg, 1000 + 31 * s + static_cast<uint64_t>(c)));
    means[c] /= 30.0;
  }
  CHECK(means[0] < means[1]);
  CHECK(means[1] < means[2]);
}

TEST_CASE("generate_corpus writes the directory layout, manifest, and reloads") {
  fs::path root = fs::temp_directory_path() / "traffic_corpus_test";
  fs::remove_all(root);
  CorpusConfig cfg;
  cfg.videos_per_class = 2;
  cfg.frames_per_video = 5;
  cfg.weather_mix = 0.5;
  generate_corpus(cfg, 42, root);

  int64_t files = 0;
  for (const char* d : {"low", "medium", "heavy"})
    for (const auto& e : fs::directory_iterator(root / d))
      if (e.is_regular_file()) ++files;
  CHECK(files == 30);

  auto manifest = read_manifest(root / "manifest.csv");
  CHECK(manifest.size() == 6);

  auto index = load_directory_dataset(root);
  CHECK(index.class_counts == std::array<int64_t, 3>{10, 10, 10});
  CHECK(index.videos.size() == 6);
}

TEST_CASE("regenerating a corpus with the same seed is byte-identical") {
  fs::path a = fs::temp_directory_path() / "traffic_corpus_a";
  fs::path b = fs::temp_directory_path() / "traffic_corpus_b";
  fs::remove_all(a);
  fs::remove_all(b);
  CorpusConfig cfg;
  cfg.videos_per_class = 2;
  cfg.frames_per_video = 3;
  cfg.weather_mix = 0.5;
  generate_corpus(cfg, 7, a);
  generate_corpus(cfg, 7, b);
  for (const char* d : {"low", "medium", "heavy"}) {
    for (const auto& e : fs::directory_iterator(a / d)) {
      auto other = b / d / e.path().filename();
      REQUIRE(fs::exists(other));
      CHECK(slurp(e.path()) == slurp(other));
    }
  }
  CHECK(slurp(a / "manifest.csv") == slurp(b / "manifest.csv"));
}

TEST_CASE("weather never alters labels or counts in the manifest") {
  fs::path a = fs::temp_directory_path() / "traffic_corpus_w0";
  fs::path b = fs::temp_directory_path() / "traffic_corpus_w1";
  fs::remove_all(a);
  fs::remove_all(b);
  CorpusConfig cfg;
  cfg.videos_per_class = 3;
  cfg.frames_per_video = 2;
  cfg.weather_mix = 0.0;
  generate_corpus(cfg, 11, a);
  cfg.weather_mix = 1.0;
  generate_corpus(cfg, 11, b);
  auto ma = read_manifest(a / "manifest.csv");
  auto mb = read_manifest(b / "manifest.csv");
  REQUIRE(ma.size() == mb.size());
  for (size_t i = 0; i < ma.size(); ++i) {
    CHECK(ma[i].video_id == mb[i].video_id);
    CHECK(ma[i].label == mb[i].label);
    CHECK(ma[i].true_count == mb[i].true_count);
  }
}

TEST_CASE("count_tercile mode relabels by count terciles") {
  fs::path root = fs::temp_directory_path() / "traffic_corpus_tercile";
  fs::remove_all(root);
  CorpusConfig cfg;
  cfg.videos_per_class = 4;
  cfg.frames_per_video = 2;
  cfg.weather_mix = 0.0;
  cfg.label_mode = CorpusConfig::LabelMode::CountTercile;
  generate_corpus(cfg, 13, root);
  auto manifest = read_manifest(root / "manifest.csv");
  // labels must be monotone in true_count
  int64_t max_low = -1, min_med = 1 << 20, max_med = -1, min_heavy = 1 << 20;
  for (const auto& r : manifest) {
    if (r.label == CongestionLabel::Low) max_low = std::max(max_low, r.true_count);
    if (r.label == CongestionLabel::Medium) {
      min_med = std::min(min_med, r.true_count);
      max_med = std::max(max_med, r.true_count);
    }
    if (r.label == CongestionLabel::Heavy) min_heavy = std::min(min_heavy, r.true_count);
  }
  CHECK(max_low <= min_med);
  CHECK(max_med <= min_heavy);
  auto index = load_directory_dataset(root);
  CHECK(index.class_counts == std::array<int64_t, 3>{8, 8, 8});
}
