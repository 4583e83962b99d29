#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "traffic/tensor.hpp"

namespace traffic {

struct PixelBox {
  int64_t row = 0, col = 0, h = 0, w = 0;
};

// Binary netpbm, maxval 255 only. Header comments (# ... \n) are tolerated
// between tokens. Decode errors name the byte offset.
Tensor parse_ppm(const std::vector<uint8_t>& bytes);  // P6 -> [h,w,3]
Tensor parse_pgm(const std::vector<uint8_t>& bytes);  // P5 -> [h,w,1]
std::vector<uint8_t> encode_ppm(const Tensor& img);
std::vector<uint8_t> encode_pgm(const Tensor& img);

Tensor read_image(const std::filesystem::path& path);  // dispatches on magic
void write_ppm(const Tensor& img, const std::filesystem::path& path);
void write_pgm(const Tensor& img, const std::filesystem::path& path);

// Half-pixel-centered bilinear resampling; [h,w,c] for any channel count.
Tensor resize_bilinear(const Tensor& img, int64_t out_h, int64_t out_w);

struct PreprocessMode {
  enum class Kind { ScalePm1, MeanSubtract };
  Kind kind = Kind::ScalePm1;
  std::array<float, 3> means{0, 0, 0};

  static PreprocessMode scale_pm1() { return {}; }
  static PreprocessMode mean_subtract(std::array<float, 3> m) {
    PreprocessMode p;
    p.kind = Kind::MeanSubtract;
    p.means = m;
    return p;
  }
  std::string tag() const;
};

// scale_pm1 maps [0,255] to [-1,1] via x/127.5 - 1; mean_subtract removes
// per-channel means.
Tensor preprocess(const Tensor& img, const PreprocessMode& mode);

inline float luma(float r, float g, float b) {
  return 0.299f * r + 0.587f * g + 0.114f * b;
}

}  // namespace traffic
