#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "traffic/dataset.hpp"
#include "traffic/image.hpp"
#include "traffic/rng.hpp"
#include "traffic/tensor.hpp"

namespace traffic {

// Procedural highway scenes: lanes are horizontal bands, vehicles are
// rounded rectangles advancing left-to-right on a cyclic track that keeps
// them fully visible in every frame. The per-class vehicle-count ranges
// overlap between Medium and Heavy on purpose; Low stays separable.
struct SceneConfig {
  int64_t height = 64, width = 64;
  int64_t lanes = 8;
  std::array<std::array<int64_t, 2>, 3> count_range{{{1, 8}, {9, 20}, {18, 35}}};
  int64_t min_len = 7, max_len = 7;  // vehicle length, px
  double speed_min = 0.5, speed_max = 2.2;  // px/frame
  std::array<float, 3> background{55, 55, 60};
  std::array<float, 3> lane_marking{110, 110, 110};
  float vehicle_min = 190, vehicle_max = 225;  // base intensity palette
  // Validation mode: one shared speed and guaranteed gaps, so the binary
  // mask has exactly true_count connected components in clear weather.
  bool non_overlap = false;
};

struct WeatherEffect {
  enum class Kind { Clear, Fog, Rain, Corrupt };
  Kind kind = Kind::Clear;
  double fog_density = 0.7;          // in [0,1]
  int64_t rain_streaks = 40;
  float rain_intensity = 235;
  int64_t corrupt_blocks = 3;
  double jump_probability = 0.2;

  std::string tag() const;  // "clear", "fog:0.70", "rain:40", "corrupt:3"
  static WeatherEffect clear() { return {}; }
  static WeatherEffect fog(double density);
  static WeatherEffect rain(int64_t streaks, float intensity);
  static WeatherEffect corrupt(int64_t blocks, double jump_p);
};

struct VideoGroundTruth {
  std::string video_id;
  CongestionLabel label = CongestionLabel::Low;
  int64_t true_count = 0;
  std::string weather;
};

struct SynthVideo {
  std::vector<Tensor> frames;                     // [h,w,3] each
  std::vector<std::vector<PixelBox>> frame_boxes; // vehicle spans per frame
  VideoGroundTruth truth;
};

// The vehicle count a video with this seed will carry, without rendering.
int64_t draw_video_count(CongestionLabel cls, const SceneConfig& cfg, uint64_t seed);

// Seeded-deterministic video: the count is drawn once per video from the
// class range and stays constant across frames.
SynthVideo generate_video(CongestionLabel cls, int64_t frame_count, const SceneConfig& cfg,
                          const WeatherEffect& weather, uint64_t seed, std::string video_id);

// Convex blend toward gray 200: p' = (1-d)*p + d*200.
void apply_fog(Tensor& frame, double density);
// Bright diagonal streak segments overdrawn on the frame.
void apply_rain(Tensor& frame, int64_t streaks, float intensity, Rng& rng);
// Noise blocks per frame; with jump_probability a frame becomes a repeat of
// its predecessor.
void apply_corruption(std::vector<Tensor>& frames, int64_t blocks, double jump_probability,
                      Rng& rng);

struct CorpusConfig {
  int64_t videos_per_class = 60;
  std::array<int64_t, 3> videos_override{0, 0, 0};  // per-class imbalance knob, 0 = default
  int64_t frames_per_video = 12;
  // Fraction of videos per class carrying a non-clear effect; effects are
  // assigned to every round(1/mix)-th video, cycling fog -> rain -> corrupt.
  double weather_mix = 0.2;
  double fog_density = 0.7;
  int64_t rain_streaks = 40;
  float rain_intensity = 235;
  int64_t corrupt_blocks = 3;
  double jump_probability = 0.2;
  SceneConfig scene;
  // count_tercile relabels videos by terciles of their true vehicle count
  // (a label purely determined by count, used as the pretraining source task).
  enum class LabelMode { ClassLabel, CountTercile };
  LabelMode label_mode = LabelMode::ClassLabel;
};

// Emits the dataset directory layout plus manifest.csv
// (header: video_id,class,true_count,weather).
void generate_corpus(const CorpusConfig& cfg, uint64_t seed, const std::filesystem::path& out_root);

std::vector<VideoGroundTruth> read_manifest(const std::filesystem::path& path);

}  // namespace traffic
