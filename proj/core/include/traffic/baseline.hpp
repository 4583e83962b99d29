#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "traffic/dataset.hpp"
#include "traffic/image.hpp"
#include "traffic/metrics.hpp"
#include "traffic/tensor.hpp"

namespace traffic {

struct BlobDetection {
  int64_t count = 0;
  std::vector<PixelBox> boxes;
};

// Binarizes at the intensity threshold (RGB frames go through luma
// 0.299/0.587/0.114 first), labels 8-connected components in row-major seed
// order, and drops components smaller than min_area. min_area 9 suppresses
// rain streaks at the default rain intensity.
BlobDetection count_blobs(const Tensor& frame, float intensity_threshold = 128.0f,
                          int64_t min_area = 9);

double video_mean_count(const std::vector<int64_t>& per_frame_counts);
double video_mean_count(const std::vector<Tensor>& frames, float intensity_threshold = 128.0f,
                        int64_t min_area = 9);

// mean < t1 -> Low; t1 <= mean < t2 -> Medium; mean >= t2 -> Heavy.
struct ThresholdClassifier {
  double t1 = 0, t2 = 0;
  CongestionLabel classify(double mean_count) const {
    if (mean_count < t1) return CongestionLabel::Low;
    if (mean_count < t2) return CongestionLabel::Medium;
    return CongestionLabel::Heavy;
  }
};

struct VideoCount {
  std::string video_id;
  CongestionLabel label = CongestionLabel::Low;
  double mean_count = 0;
};

// Exhaustive search over midpoints of the sorted distinct training means,
// maximizing training accuracy; ties break to the lexicographically smaller
// (t1,t2). Requires all three labels present.
ThresholdClassifier fit_thresholds(const std::vector<VideoCount>& train);

std::vector<CongestionLabel> classify_videos(const ThresholdClassifier& clf,
                                             const std::vector<VideoCount>& videos);
ConfusionMatrix baseline_confusion(const ThresholdClassifier& clf,
                                   const std::vector<VideoCount>& videos);

// Per-video mean blob counts over a dataset index, ordered by video id.
std::vector<VideoCount> index_video_counts(const DatasetIndex& index,
                                           float intensity_threshold = 128.0f,
                                           int64_t min_area = 9);

// K-fold cross-validated baseline: thresholds are refit per fold on the
// training videos and applied to the held-out ones; returns the pooled
// video-level confusion matrix and per-video predictions.
struct BaselineCvResult {
  ConfusionMatrix pooled;
  std::vector<std::pair<std::string, CongestionLabel>> predicted;  // sorted by video id
};
BaselineCvResult baseline_cross_validate(const std::vector<VideoCount>& videos,
                                         const std::vector<std::vector<std::string>>& folds);

// CSV columns: video_id,label,mean_count.
void write_counts_csv(const std::vector<VideoCount>& rows, const std::filesystem::path& path);

}  // namespace traffic
