#include "traffic/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "traffic/error.hpp"

namespace traffic {

namespace fs = std::filesystem;

std::string WeatherEffect::tag() const {
  char buf[48];
  switch (kind) {
    case Kind::Clear: return "clear";
    case Kind::Fog:
      std::snprintf(buf, sizeof buf, "fog:%.2f", fog_density);
      return buf;
    case Kind::Rain:
      std::snprintf(buf, sizeof buf, "rain:%lld", static_cast<long long>(rain_streaks));
      return buf;
    case Kind::Corrupt:
      std::snprintf(buf, sizeof buf, "corrupt:%lld", static_cast<long long>(corrupt_blocks));
      return buf;
  }
  return "?";
}

WeatherEffect WeatherEffect::fog(double density) {
  if (density < 0 || density > 1) throw ConfigError("fog density must be in [0,1]");
  WeatherEffect w;
  w.kind = Kind::Fog;
  w.fog_density = density;
  return w;
}
WeatherEffect WeatherEffect::rain(int64_t streaks, float intensity) {
  WeatherEffect w;
  w.kind = Kind::Rain;
  w.rain_streaks = streaks;
  w.rain_intensity = intensity;
  return w;
}
WeatherEffect WeatherEffect::corrupt(int64_t blocks, double jump_p) {
  if (jump_p < 0 || jump_p > 1) throw ConfigError("jump_probability must be in [0,1]");
  WeatherEffect w;
  w.kind = Kind::Corrupt;
  w.corrupt_blocks = blocks;
  w.jump_probability = jump_p;
  return w;
}

namespace {

struct Vehicle {
  int64_t lane = 0;
  double x0 = 0;       // track position at frame 0
  double speed = 0;    // px/frame
  int64_t len = 0;
  int64_t track = 0;   // cyclic track length; spans stay inside the image
  std::array<float, 3> color{};
};

void validate_scene(const SceneConfig& cfg) {
  if (cfg.height < 8 || cfg.width < 8) throw ConfigError("scene must be at least 8x8");
  if (cfg.lanes < 1 || cfg.lanes > cfg.height / 3) throw ConfigError("lane count infeasible for scene height");
  if (cfg.min_len < 2 || cfg.max_len < cfg.min_len || cfg.max_len >= cfg.width)
    throw ConfigError("vehicle length range infeasible for scene width");
  for (const auto& r : cfg.count_range)
    if (r[0] < 1 || r[1] < r[0]) throw ConfigError("vehicle count ranges must be non-empty and >= 1");
}

// Integer-valued channels so frames survive PPM round-trips untouched.
std::array<float, 3> vehicle_color(const SceneConfig& cfg, Rng& rng) {
  float base = cfg.vehicle_min +
               static_cast<float>(rng.next_double()) * (cfg.vehicle_max - cfg.vehicle_min);
  std::array<float, 3> c;
  for (auto& ch : c) {
    float off = static_cast<float>(rng.next_double() * 24.0 - 12.0);
    ch = std::floor(std::clamp(base + off, 140.0f, 250.0f));
  }
  return c;
}

void render_background(Tensor& frame, const SceneConfig& cfg) {
  int64_t h = cfg.height, w = cfg.width;
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x)
      for (int64_t ch = 0; ch < 3; ++ch)
        frame.at3(y, x, ch) = cfg.background[static_cast<size_t>(ch)];
  int64_t lh = h / cfg.lanes;
  for (int64_t lane = 1; lane < cfg.lanes; ++lane) {
    int64_t y = lane * lh;
    for (int64_t x = 0; x < w; ++x)
      if ((x % 8) < 4)
        for (int64_t ch = 0; ch < 3; ++ch)
          frame.at3(y, x, ch) = cfg.lane_marking[static_cast<size_t>(ch)];
  }
}

// Rounded rectangle: corner pixels are dropped when the body is big enough.
PixelBox render_vehicle(Tensor& frame, const SceneConfig& cfg, const Vehicle& v, int64_t t) {
  int64_t lh = cfg.height / cfg.lanes;
  int64_t body_h = std::max<int64_t>(2, lh - 2);
  int64_t top = v.lane * lh + 1;
  double pos = std::fmod(v.x0 + v.speed * static_cast<double>(t), static_cast<double>(v.track));
  int64_t left = static_cast<int64_t>(std::llround(pos)) % v.track;
  bool rounded = v.len >= 3 && body_h >= 3;
  for (int64_t dy = 0; dy < body_h; ++dy)
    for (int64_t dx = 0; dx < v.len; ++dx) {
      if (rounded && (dy == 0 || dy == body_h - 1) && (dx == 0 || dx == v.len - 1)) continue;
      int64_t y = top + dy, x = left + dx;
      if (y < 0 || y >= cfg.height || x < 0 || x >= cfg.width) continue;
      for (int64_t ch = 0; ch < 3; ++ch)
        frame.at3(y, x, ch) = v.color[static_cast<size_t>(ch)];
    }
  return {top, left, body_h, v.len};
}

}  // namespace

int64_t draw_video_count(CongestionLabel cls, const SceneConfig& cfg, uint64_t seed) {
  validate_scene(cfg);
  const auto& range = cfg.count_range[static_cast<size_t>(cls)];
  Rng count_rng = Rng(seed, 0x5CEDu).split(0);
  return range[0] + static_cast<int64_t>(count_rng.next_below(static_cast<uint64_t>(range[1] - range[0] + 1)));
}

SynthVideo generate_video(CongestionLabel cls, int64_t frame_count, const SceneConfig& cfg,
                          const WeatherEffect& weather, uint64_t seed, std::string video_id) {
  validate_scene(cfg);
  if (frame_count < 1) throw ConfigError("frame_count must be >= 1");
  int64_t count = draw_video_count(cls, cfg, seed);
  Rng root(seed, 0x5CEDu);
  Rng setup = root.split(1);

  std::vector<Vehicle> vehicles;
  if (cfg.non_overlap) {
    // Shared speed + slotted placement with a common cyclic modulus keeps
    // pairwise gaps constant, so blobs never merge.
    int64_t len = cfg.min_len;
    int64_t pitch = len + 3;
    int64_t slots = (cfg.width - len) / pitch;
    if (slots < 1 || cfg.lanes * slots < count)
      throw ConfigError("count " + std::to_string(count) + " infeasible for lane capacity " +
                        std::to_string(cfg.lanes * std::max<int64_t>(slots, 0)) + " in non_overlap mode");
    double speed = cfg.speed_min;
    std::vector<int64_t> slot_ids(static_cast<size_t>(cfg.lanes * slots));
    for (size_t i = 0; i < slot_ids.size(); ++i) slot_ids[i] = static_cast<int64_t>(i);
    shuffle(slot_ids, setup);
    for (int64_t i = 0; i < count; ++i) {
      int64_t sid = slot_ids[static_cast<size_t>(i)];
      Vehicle v;
      v.lane = sid / slots;
      v.len = len;
      v.track = slots * pitch;
      v.x0 = static_cast<double>((sid % slots) * pitch);
      v.speed = speed;
      v.color = vehicle_color(cfg, setup);
      vehicles.push_back(v);
    }
  } else {
    // Vehicles spread over lanes round-robin (shuffled per wave), the way
    // real traffic fills a road: low densities stay one-per-lane and crisp,
    // dense scenes stack several per lane and merge.
    std::vector<int64_t> lane_order(static_cast<size_t>(cfg.lanes));
    for (size_t i = 0; i < lane_order.size(); ++i) lane_order[i] = static_cast<int64_t>(i);
    shuffle(lane_order, setup);
    for (int64_t i = 0; i < count; ++i) {
      int64_t wave_slot = i % cfg.lanes;
      if (i > 0 && wave_slot == 0) shuffle(lane_order, setup);
      Vehicle v;
      v.lane = lane_order[static_cast<size_t>(wave_slot)];
      v.len = cfg.min_len +
              static_cast<int64_t>(setup.next_below(static_cast<uint64_t>(cfg.max_len - cfg.min_len + 1)));
      v.track = cfg.width - v.len + 1;
      v.x0 = setup.next_double() * static_cast<double>(v.track);
      v.speed = cfg.speed_min + setup.next_double() * (cfg.speed_max - cfg.speed_min);
      v.color = vehicle_color(cfg, setup);
      vehicles.push_back(v);
    }
  }

  SynthVideo video;
  video.truth = {std::move(video_id), cls, count, weather.tag()};
  for (int64_t t = 0; t < frame_count; ++t) {
    Tensor frame({cfg.height, cfg.width, 3});
    render_background(frame, cfg);
    std::vector<PixelBox> boxes;
    for (const auto& v : vehicles) boxes.push_back(render_vehicle(frame, cfg, v, t));
    if (weather.kind == WeatherEffect::Kind::Fog) apply_fog(frame, weather.fog_density);
    if (weather.kind == WeatherEffect::Kind::Rain) {
      Rng frng = root.split(100 + static_cast<uint64_t>(t));
      apply_rain(frame, weather.rain_streaks, weather.rain_intensity, frng);
    }
    video.frames.push_back(std::move(frame));
    video.frame_boxes.push_back(std::move(boxes));
  }
  if (weather.kind == WeatherEffect::Kind::Corrupt) {
    Rng crng = root.split(2);
    apply_corruption(video.frames, weather.corrupt_blocks, weather.jump_probability, crng);
  }
  return video;
}

void apply_fog(Tensor& frame, double density) {
  if (density < 0 || density > 1) throw ConfigError("fog density must be in [0,1]");
  for (auto& v : frame.data)
    v = static_cast<float>((1.0 - density) * static_cast<double>(v) + density * 200.0);
}

void apply_rain(Tensor& frame, int64_t streaks, float intensity, Rng& rng) {
  int64_t h = frame.dims[0], w = frame.dims[1];
  for (int64_t s = 0; s < streaks; ++s) {
    int64_t y = static_cast<int64_t>(rng.next_below(static_cast<uint64_t>(h)));
    int64_t x = static_cast<int64_t>(rng.next_below(static_cast<uint64_t>(w)));
    int64_t len = 4 + static_cast<int64_t>(rng.next_below(5));
    for (int64_t i = 0; i < len; ++i) {
      int64_t yy = y + i, xx = x + i / 2;  // slanted drop
      if (yy >= h || xx >= w) break;
      frame.at3(yy, xx, 0) = intensity;
      frame.at3(yy, xx, 1) = intensity;
      frame.at3(yy, xx, 2) = std::min(250.0f, intensity + 10.0f);
    }
  }
}

void apply_corruption(std::vector<Tensor>& frames, int64_t blocks, double jump_probability,
                      Rng& rng) {
  for (size_t t = 0; t < frames.size(); ++t) {
    Tensor& frame = frames[t];
    int64_t h = frame.dims[0], w = frame.dims[1];
    for (int64_t b = 0; b < blocks; ++b) {
      int64_t y0 = static_cast<int64_t>(rng.next_below(static_cast<uint64_t>(std::max<int64_t>(1, h - 8))));
      int64_t x0 = static_cast<int64_t>(rng.next_below(static_cast<uint64_t>(std::max<int64_t>(1, w - 8))));
      for (int64_t y = y0; y < std::min(h, y0 + 8); ++y)
        for (int64_t x = x0; x < std::min(w, x0 + 8); ++x)
          for (int64_t ch = 0; ch < 3; ++ch)
            frame.at3(y, x, ch) = static_cast<float>(rng.next_below(256));
    }
    if (t > 0 && rng.next_double() < jump_probability) frames[t] = frames[t - 1];
  }
}

void generate_corpus(const CorpusConfig& cfg, uint64_t seed, const fs::path& out_root) {
  validate_scene(cfg.scene);
  if (cfg.videos_per_class < 1 || cfg.frames_per_video < 1)
    throw ConfigError("videos_per_class and frames_per_video must be >= 1");
  if (cfg.weather_mix < 0 || cfg.weather_mix > 1)
    throw ConfigError("weather_mix must be in [0,1]");

  struct PlannedVideo {
    std::string id;
    CongestionLabel generated;
    WeatherEffect weather;
    uint64_t seed;
    int64_t count;
    CongestionLabel label;  // final directory label
  };
  std::vector<PlannedVideo> plan;
  int64_t period = cfg.weather_mix > 0
                       ? std::max<int64_t>(1, static_cast<int64_t>(std::llround(1.0 / cfg.weather_mix)))
                       : 0;
  int64_t ordinal = 0;
  for (int c = 0; c < 3; ++c) {
    int64_t vids = cfg.videos_override[static_cast<size_t>(c)] > 0
                       ? cfg.videos_override[static_cast<size_t>(c)]
                       : cfg.videos_per_class;
    int64_t weather_events = 0;
    for (int64_t v = 0; v < vids; ++v, ++ordinal) {
      PlannedVideo p;
      char id[32];
      std::snprintf(id, sizeof id, "v%04lld", static_cast<long long>(ordinal));
      p.id = id;
      p.generated = static_cast<CongestionLabel>(c);
      p.seed = mix64(seed ^ mix64(static_cast<uint64_t>(ordinal) + 0x7E57));
      p.count = draw_video_count(p.generated, cfg.scene, p.seed);
      p.label = p.generated;
      if (period > 0 && v % period == 0) {
        switch (weather_events++ % 3) {
          case 0: p.weather = WeatherEffect::fog(cfg.fog_density); break;
          case 1: p.weather = WeatherEffect::rain(cfg.rain_streaks, cfg.rain_intensity); break;
          default: p.weather = WeatherEffect::corrupt(cfg.corrupt_blocks, cfg.jump_probability); break;
        }
      }
      plan.push_back(std::move(p));
    }
  }

  if (cfg.label_mode == CorpusConfig::LabelMode::CountTercile) {
    std::vector<size_t> order(plan.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
      if (plan[a].count != plan[b].count) return plan[a].count < plan[b].count;
      return plan[a].id < plan[b].id;
    });
    size_t n = order.size();
    for (size_t r = 0; r < n; ++r)
      plan[order[r]].label = static_cast<CongestionLabel>(std::min<size_t>(2, r * 3 / n));
  }

  std::error_code ec;
  fs::create_directories(out_root, ec);
  for (const char* d : {"low", "medium", "heavy"}) {
    fs::create_directories(out_root / d, ec);
    if (ec) throw IoError("cannot create " + (out_root / d).string() + ": " + ec.message());
  }

  for (const auto& p : plan) {
    SynthVideo video = generate_video(p.generated, cfg.frames_per_video, cfg.scene, p.weather,
                                      p.seed, p.id);
    fs::path dir = out_root / label_name(p.label);
    for (size_t f = 0; f < video.frames.size(); ++f) {
      char name[48];
      std::snprintf(name, sizeof name, "%s_f%03zu.ppm", p.id.c_str(), f);
      write_ppm(video.frames[f], dir / name);
    }
  }

  std::ofstream manifest(out_root / "manifest.csv");
  if (!manifest) throw IoError("cannot write manifest under " + out_root.string());
  manifest << "video_id,class,true_count,weather\n";
  for (const auto& p : plan)
    manifest << p.id << "," << label_name(p.label) << "," << p.count << ","
             << p.weather.tag() << "\n";
  if (!manifest) throw IoError("manifest write failed under " + out_root.string());
}

std::vector<VideoGroundTruth> read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest: " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "video_id,class,true_count,weather")
    throw FormatError(path.string() + ": bad manifest header");
  std::vector<VideoGroundTruth> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    VideoGroundTruth row;
    size_t a = line.find(','), b = line.find(',', a + 1), c = line.find(',', b + 1);
    if (a == std::string::npos || b == std::string::npos || c == std::string::npos)
      throw FormatError(path.string() + ": bad manifest row '" + line + "'");
    row.video_id = line.substr(0, a);
    row.label = parse_label(line.substr(a + 1, b - a - 1));
    row.true_count = std::stoll(line.substr(b + 1, c - b - 1));
    row.weather = line.substr(c + 1);
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace traffic
