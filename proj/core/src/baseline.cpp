#include "traffic/baseline.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>

#include "traffic/error.hpp"

namespace traffic {

BlobDetection count_blobs(const Tensor& frame, float intensity_threshold, int64_t min_area) {
  if (frame.rank() != 3 || (frame.dims[2] != 1 && frame.dims[2] != 3))
    throw ShapeError("count_blobs expects [h,w,1] or [h,w,3]");
  int64_t h = frame.dims[0], w = frame.dims[1], c = frame.dims[2];
  std::vector<uint8_t> fg(static_cast<size_t>(h * w));
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x) {
      float v = c == 1 ? frame.at3(y, x, 0)
                       : luma(frame.at3(y, x, 0), frame.at3(y, x, 1), frame.at3(y, x, 2));
      fg[static_cast<size_t>(y * w + x)] = v > intensity_threshold ? 1 : 0;
    }

  BlobDetection det;
  std::vector<int64_t> stack;
  for (int64_t seed = 0; seed < h * w; ++seed) {
    if (fg[static_cast<size_t>(seed)] != 1) continue;
    // flood fill, 8-connected
    int64_t min_y = h, max_y = -1, min_x = w, max_x = -1, area = 0;
    stack.assign(1, seed);
    fg[static_cast<size_t>(seed)] = 2;
    while (!stack.empty()) {
      int64_t p = stack.back();
      stack.pop_back();
      int64_t y = p / w, x = p % w;
      ++area;
      min_y = std::min(min_y, y);
      max_y = std::max(max_y, y);
      min_x = std::min(min_x, x);
      max_x = std::max(max_x, x);
      for (int64_t dy = -1; dy <= 1; ++dy)
        for (int64_t dx = -1; dx <= 1; ++dx) {
          int64_t ny = y + dy, nx = x + dx;
          if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
          int64_t np = ny * w + nx;
          if (fg[static_cast<size_t>(np)] == 1) {
            fg[static_cast<size_t>(np)] = 2;
            stack.push_back(np);
          }
        }
    }
    if (area >= min_area)
      det.boxes.push_back({min_y, min_x, max_y - min_y + 1, max_x - min_x + 1});
  }
  det.count = static_cast<int64_t>(det.boxes.size());
  return det;
}

double video_mean_count(const std::vector<int64_t>& per_frame_counts) {
  if (per_frame_counts.empty()) throw DataError("video_mean_count: no frames");
  double sum = 0;
  for (int64_t c : per_frame_counts) sum += static_cast<double>(c);
  return sum / static_cast<double>(per_frame_counts.size());
}

double video_mean_count(const std::vector<Tensor>& frames, float intensity_threshold,
                        int64_t min_area) {
  if (frames.empty()) throw DataError("video_mean_count: no frames");
  std::vector<int64_t> counts;
  counts.reserve(frames.size());
  for (const auto& f : frames) counts.push_back(count_blobs(f, intensity_threshold, min_area).count);
  return video_mean_count(counts);
}

ThresholdClassifier fit_thresholds(const std::vector<VideoCount>& train) {
  bool present[3] = {false, false, false};
  for (const auto& v : train) present[static_cast<size_t>(v.label)] = true;
  for (int c = 0; c < 3; ++c)
    if (!present[c])
      throw DataError(std::string("fit_thresholds: no training videos of class '") +
                      label_name(static_cast<CongestionLabel>(c)) + "'");

  std::set<double> distinct;
  for (const auto& v : train) distinct.insert(v.mean_count);
  std::vector<double> means(distinct.begin(), distinct.end());
  std::vector<double> candidates;
  for (size_t i = 0; i + 1 < means.size(); ++i) candidates.push_back((means[i] + means[i + 1]) / 2.0);
  if (candidates.empty()) candidates.push_back(means.front());  // degenerate: all means equal

  ThresholdClassifier best{candidates.front(), candidates.front()};
  int64_t best_correct = -1;
  for (size_t i = 0; i < candidates.size(); ++i)
    for (size_t j = i; j < candidates.size(); ++j) {
      ThresholdClassifier clf{candidates[i], candidates[j]};
      int64_t correct = 0;
      for (const auto& v : train)
        if (clf.classify(v.mean_count) == v.label) ++correct;
      if (correct > best_correct) {
        best_correct = correct;
        best = clf;
      }
    }
  return best;
}

std::vector<CongestionLabel> classify_videos(const ThresholdClassifier& clf,
                                             const std::vector<VideoCount>& videos) {
  std::vector<CongestionLabel> out;
  out.reserve(videos.size());
  for (const auto& v : videos) out.push_back(clf.classify(v.mean_count));
  return out;
}

ConfusionMatrix baseline_confusion(const ThresholdClassifier& clf,
                                   const std::vector<VideoCount>& videos) {
  ConfusionMatrix cm;
  for (const auto& v : videos) cm.add(v.label, clf.classify(v.mean_count));
  return cm;
}

std::vector<VideoCount> index_video_counts(const DatasetIndex& index, float intensity_threshold,
                                           int64_t min_area) {
  std::vector<VideoCount> out;
  for (const auto& [vid, sample_ids] : index.videos) {
    std::vector<int64_t> counts;
    counts.reserve(sample_ids.size());
    for (int64_t sid : sample_ids)
      counts.push_back(
          count_blobs(index.samples[static_cast<size_t>(sid)].image, intensity_threshold, min_area)
              .count);
    out.push_back({vid, index.samples[static_cast<size_t>(sample_ids[0])].label,
                   video_mean_count(counts)});
  }
  return out;  // index.videos is an ordered map, so rows sort by video id
}

BaselineCvResult baseline_cross_validate(const std::vector<VideoCount>& videos,
                                         const std::vector<std::vector<std::string>>& folds) {
  std::map<std::string, const VideoCount*> by_id;
  for (const auto& v : videos) by_id[v.video_id] = &v;
  BaselineCvResult result;
  for (size_t f = 0; f < folds.size(); ++f) {
    std::set<std::string> held(folds[f].begin(), folds[f].end());
    std::vector<VideoCount> train;
    for (const auto& v : videos)
      if (!held.count(v.video_id)) train.push_back(v);
    ThresholdClassifier clf = fit_thresholds(train);
    for (const auto& id : folds[f]) {
      auto it = by_id.find(id);
      if (it == by_id.end()) throw DataError("baseline_cross_validate: unknown video '" + id + "'");
      CongestionLabel pred = clf.classify(it->second->mean_count);
      result.pooled.add(it->second->label, pred);
      result.predicted.emplace_back(id, pred);
    }
  }
  std::sort(result.predicted.begin(), result.predicted.end());
  return result;
}

void write_counts_csv(const std::vector<VideoCount>& rows, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << "video_id,label,mean_count\n";
  char buf[64];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.6g", r.mean_count);
    out << r.video_id << "," << label_name(r.label) << "," << buf << "\n";
  }
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace traffic
