#include "traffic/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "traffic/error.hpp"
#include "traffic/rng.hpp"

namespace traffic {

namespace fs = std::filesystem;

CongestionLabel parse_label(const std::string& s) {
  if (s == "low") return CongestionLabel::Low;
  if (s == "medium") return CongestionLabel::Medium;
  if (s == "heavy") return CongestionLabel::Heavy;
  throw ConfigError("unknown class label '" + s + "'");
}

namespace {

// {video_id}_f{frame_index}.ppm
bool parse_frame_filename(const std::string& name, std::string& video_id, int64_t& frame) {
  if (name.size() < 8 || name.substr(name.size() - 4) != ".ppm") return false;
  std::string stem = name.substr(0, name.size() - 4);
  size_t sep = stem.rfind("_f");
  if (sep == std::string::npos || sep == 0 || sep + 2 >= stem.size()) return false;
  std::string digits = stem.substr(sep + 2);
  for (char c : digits)
    if (c < '0' || c > '9') return false;
  video_id = stem.substr(0, sep);
  frame = std::stoll(digits);
  return true;
}

}  // namespace

DatasetIndex load_directory_dataset(const fs::path& root) {
  if (!fs::is_directory(root)) throw IoError("dataset root is not a directory: " + root.string());
  static const char* kDirs[3] = {"low", "medium", "heavy"};
  for (const auto& entry : fs::directory_iterator(root)) {
    if (!entry.is_directory()) continue;
    std::string name = entry.path().filename().string();
    if (name != "low" && name != "medium" && name != "heavy")
      throw IoError("unknown class subdirectory: " + entry.path().string());
  }
  DatasetIndex index;
  for (int c = 0; c < 3; ++c) {
    fs::path dir = root / kDirs[c];
    if (!fs::is_directory(dir)) throw IoError("missing class subdirectory: " + dir.string());
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(dir))
      if (entry.is_regular_file()) files.push_back(entry.path().filename().string());
    std::sort(files.begin(), files.end());
    for (const auto& name : files) {
      FrameSample s;
      if (!parse_frame_filename(name, s.video_id, s.frame_index))
        throw FormatError("malformed frame filename (want {video_id}_f{n}.ppm): " +
                          (dir / name).string());
      try {
        s.image = read_image(dir / name);
      } catch (const FormatError& e) {
        throw FormatError("undecodable image " + (dir / name).string() + ": " + e.what());
      }
      s.label = static_cast<CongestionLabel>(c);
      index.class_counts[static_cast<size_t>(c)]++;
      index.videos[s.video_id].push_back(static_cast<int64_t>(index.samples.size()));
      index.samples.push_back(std::move(s));
    }
  }
  return index;
}

std::string SplitPlan::tag() const {
  char buf[128];
  if (kind == Kind::Holdout)
    std::snprintf(buf, sizeof buf, "holdout:%g,%g,%g", train, val, test);
  else
    std::snprintf(buf, sizeof buf, "kfold:%lld", static_cast<long long>(k));
  return std::string(buf) + (mode == Mode::ByVideo ? "/by_video" : "/by_frame");
}

SplitPlan SplitPlan::parse(const std::string& kind_spec, const std::string& mode_spec,
                           uint64_t seed) {
  SplitPlan p;
  p.seed = seed;
  if (mode_spec == "by_video") p.mode = Mode::ByVideo;
  else if (mode_spec == "by_frame") p.mode = Mode::ByFrame;
  else throw ConfigError("split_mode must be by_video or by_frame, got '" + mode_spec + "'");
  if (kind_spec.rfind("holdout:", 0) == 0) {
    p.kind = Kind::Holdout;
    double a, b, c;
    if (std::sscanf(kind_spec.c_str() + 8, "%lf,%lf,%lf", &a, &b, &c) != 3)
      throw ConfigError("holdout split wants 'holdout:train,val,test', got '" + kind_spec + "'");
    p.train = a;
    p.val = b;
    p.test = c;
    if (std::abs(a + b + c - 1.0) > 1e-9 || a < 0 || b < 0 || c < 0)
      throw ConfigError("holdout fractions must be non-negative and sum to 1");
  } else if (kind_spec.rfind("kfold:", 0) == 0) {
    p.kind = Kind::KFold;
    p.k = std::stoll(kind_spec.substr(6));
    if (p.k < 2) throw ConfigError("kfold k must be >= 2");
  } else {
    throw ConfigError("split must be 'holdout:a,b,c' or 'kfold:k', got '" + kind_spec + "'");
  }
  return p;
}

namespace {

// Split units: video ids (by_video) or single samples (by_frame), each
// carrying its sample indices. Shuffled with the plan seed.
std::vector<std::vector<int64_t>> split_units(const DatasetIndex& index, const SplitPlan& plan) {
  std::vector<std::vector<int64_t>> units;
  if (plan.mode == SplitPlan::Mode::ByVideo) {
    for (const auto& [id, samples] : index.videos) units.push_back(samples);
  } else {
    for (int64_t i = 0; i < static_cast<int64_t>(index.samples.size()); ++i) units.push_back({i});
  }
  Rng rng(plan.seed, 0xD5u);
  shuffle(units, rng);
  return units;
}

std::vector<int64_t> flatten_units(const std::vector<std::vector<int64_t>>& units, size_t b,
                                   size_t e) {
  std::vector<int64_t> out;
  for (size_t i = b; i < e; ++i) out.insert(out.end(), units[i].begin(), units[i].end());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

HoldoutSplits make_holdout(const DatasetIndex& index, const SplitPlan& plan) {
  if (plan.kind != SplitPlan::Kind::Holdout) throw ConfigError("make_holdout needs a holdout plan");
  auto units = split_units(index, plan);
  size_t n = units.size();
  size_t c1 = static_cast<size_t>(std::llround(plan.train * static_cast<double>(n)));
  size_t c2 = static_cast<size_t>(std::llround((plan.train + plan.val) * static_cast<double>(n)));
  c1 = std::min(c1, n);
  c2 = std::min(std::max(c2, c1), n);
  HoldoutSplits s;
  s.train = flatten_units(units, 0, c1);
  s.val = flatten_units(units, c1, c2);
  s.test = flatten_units(units, c2, n);
  return s;
}

std::vector<std::vector<int64_t>> make_kfold(const DatasetIndex& index, const SplitPlan& plan) {
  if (plan.kind != SplitPlan::Kind::KFold) throw ConfigError("make_kfold needs a kfold plan");
  auto units = split_units(index, plan);
  int64_t n = static_cast<int64_t>(units.size());
  if (plan.k > n)
    throw ConfigError("kfold k=" + std::to_string(plan.k) + " exceeds unit count " +
                      std::to_string(n));
  std::vector<std::vector<int64_t>> folds;
  int64_t base = n / plan.k, extra = n % plan.k, at = 0;
  for (int64_t f = 0; f < plan.k; ++f) {
    int64_t size = base + (f < extra ? 1 : 0);
    folds.push_back(flatten_units(units, static_cast<size_t>(at), static_cast<size_t>(at + size)));
    at += size;
  }
  return folds;
}

TrainData materialize(const DatasetIndex& index, const std::vector<int64_t>& sample_ids,
                      const PreprocessMode& pre, int64_t h, int64_t w) {
  if (sample_ids.empty()) throw DataError("materialize: empty sample set");
  int64_t n = static_cast<int64_t>(sample_ids.size());
  TrainData out;
  out.sample_ids = sample_ids;
  out.x = Tensor({n, h, w, 3});
  out.y = Tensor({n, kClassCount});
  int64_t stride = h * w * 3;
  for (int64_t r = 0; r < n; ++r) {
    const FrameSample& s = index.samples[static_cast<size_t>(sample_ids[static_cast<size_t>(r)])];
    Tensor img = s.image;
    if (img.dims[0] != h || img.dims[1] != w) img = resize_bilinear(img, h, w);
    img = preprocess(img, pre);
    std::copy(img.data.begin(), img.data.end(), out.x.data.begin() + r * stride);
    out.y.at2(r, static_cast<int64_t>(s.label)) = 1.0f;
  }
  return out;
}

std::vector<std::string> videos_of(const DatasetIndex& index,
                                   const std::vector<int64_t>& sample_ids) {
  std::vector<std::string> out;
  for (int64_t id : sample_ids) {
    const auto& v = index.samples[static_cast<size_t>(id)].video_id;
    if (out.empty() || out.back() != v) out.push_back(v);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

}  // namespace traffic
