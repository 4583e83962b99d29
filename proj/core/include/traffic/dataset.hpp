#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "traffic/image.hpp"
#include "traffic/tensor.hpp"

namespace traffic {

enum class CongestionLabel { Low = 0, Medium = 1, Heavy = 2 };
inline constexpr int kClassCount = 3;

inline const char* label_name(CongestionLabel l) {
  switch (l) {
    case CongestionLabel::Low: return "low";
    case CongestionLabel::Medium: return "medium";
    case CongestionLabel::Heavy: return "heavy";
  }
  return "?";
}
CongestionLabel parse_label(const std::string& s);

struct FrameSample {
  Tensor image;  // [h,w,3], raw 0-255 values
  CongestionLabel label = CongestionLabel::Low;
  std::string video_id;
  int64_t frame_index = 0;
};

struct DatasetIndex {
  std::vector<FrameSample> samples;                    // lexicographic (class dir, filename)
  std::array<int64_t, 3> class_counts{0, 0, 0};
  std::map<std::string, std::vector<int64_t>> videos;  // video_id -> sample indices
};

// Loads root/{low,medium,heavy}/{video_id}_f{frame_index}.ppm. Unknown
// subdirectories, malformed filenames, and undecodable images are errors
// naming the offending path.
DatasetIndex load_directory_dataset(const std::filesystem::path& root);

struct SplitPlan {
  enum class Mode { ByVideo, ByFrame };
  enum class Kind { Holdout, KFold };
  Mode mode = Mode::ByVideo;
  Kind kind = Kind::Holdout;
  double train = 0.7, val = 0.15, test = 0.15;  // Holdout
  int64_t k = 10;                               // KFold
  uint64_t seed = 0;

  std::string tag() const;
  static SplitPlan parse(const std::string& kind_spec, const std::string& mode_spec,
                         uint64_t seed);
};

struct HoldoutSplits {
  std::vector<int64_t> train, val, test;  // sample indices
};

// Seeded, deterministic partitions. In by_video mode no video spans two
// subsets; fold sizes differ by at most one unit.
HoldoutSplits make_holdout(const DatasetIndex& index, const SplitPlan& plan);
std::vector<std::vector<int64_t>> make_kfold(const DatasetIndex& index, const SplitPlan& plan);

// Preprocessed, model-ready matrix of samples.
struct TrainData {
  Tensor x;                         // [n, ...]
  Tensor y;                         // [n, classes] one-hot
  std::vector<int64_t> sample_ids;  // row -> DatasetIndex sample
};

// Resizes frames to (h,w) when they differ, applies the preprocess mode,
// and stacks rows in the given order.
TrainData materialize(const DatasetIndex& index, const std::vector<int64_t>& sample_ids,
                      const PreprocessMode& pre, int64_t h, int64_t w);

std::vector<std::string> videos_of(const DatasetIndex& index, const std::vector<int64_t>& sample_ids);

}  // namespace traffic
