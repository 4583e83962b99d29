#include "traffic/image.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "traffic/error.hpp"

namespace traffic {

namespace {

struct HeaderScanner {
  const std::vector<uint8_t>& buf;
  size_t pos = 0;

  bool is_space(uint8_t c) const { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; }

  // Skips whitespace and # comments between header tokens.
  void skip_separators() {
    while (pos < buf.size()) {
      if (is_space(buf[pos])) {
        ++pos;
      } else if (buf[pos] == '#') {
        while (pos < buf.size() && buf[pos] != '\n') ++pos;
      } else {
        break;
      }
    }
  }

  int64_t read_int(const char* what) {
    skip_separators();
    size_t start = pos;
    int64_t v = 0;
    while (pos < buf.size() && buf[pos] >= '0' && buf[pos] <= '9') {
      v = v * 10 + (buf[pos] - '0');
      if (v > (1ll << 31)) throw FormatError(std::string("oversized ") + what + " at byte " + std::to_string(start));
      ++pos;
    }
    if (pos == start)
      throw FormatError(std::string("expected ") + what + " at byte " + std::to_string(pos));
    return v;
  }
};

Tensor parse_netpbm(const std::vector<uint8_t>& bytes, char digit, int64_t channels) {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != static_cast<uint8_t>(digit))
    throw FormatError(std::string("bad magic at byte 0 (expected P") + digit + ")");
  HeaderScanner s{bytes, 2};
  int64_t w = s.read_int("width");
  int64_t h = s.read_int("height");
  s.skip_separators();
  size_t maxval_at = s.pos;
  int64_t maxval = s.read_int("maxval");
  if (maxval != 255)
    throw FormatError("maxval must be 255, got " + std::to_string(maxval) + " at byte " +
                      std::to_string(maxval_at));
  if (w < 1 || h < 1) throw FormatError("image dims must be >= 1");
  if (s.pos >= bytes.size() || !s.is_space(bytes[s.pos]))
    throw FormatError("expected single whitespace after maxval at byte " + std::to_string(s.pos));
  ++s.pos;  // exactly one separator byte before the payload
  size_t need = static_cast<size_t>(w * h * channels);
  if (bytes.size() - s.pos < need)
    throw FormatError("truncated payload at byte " + std::to_string(bytes.size()) + " (need " +
                      std::to_string(s.pos + need) + " bytes)");
  Tensor img({h, w, channels});
  for (size_t i = 0; i < need; ++i) img.data[i] = static_cast<float>(bytes[s.pos + i]);
  return img;
}

std::vector<uint8_t> encode_netpbm(const Tensor& img, char digit, int64_t channels) {
  if (img.rank() != 3 || img.dims[2] != channels)
    throw ShapeError(std::string("encode P") + digit + " expects [h,w," +
                     std::to_string(channels) + "], got " + shape_str(img.dims));
  char header[64];
  int n = std::snprintf(header, sizeof header, "P%c\n%lld %lld\n255\n", digit,
                        static_cast<long long>(img.dims[1]), static_cast<long long>(img.dims[0]));
  std::vector<uint8_t> out(header, header + n);
  out.reserve(out.size() + img.data.size());
  for (float v : img.data) {
    float c = std::min(255.0f, std::max(0.0f, v));
    out.push_back(static_cast<uint8_t>(std::lround(c)));
  }
  return out;
}

std::vector<uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image: " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, const std::vector<uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace

Tensor parse_ppm(const std::vector<uint8_t>& bytes) { return parse_netpbm(bytes, '6', 3); }
Tensor parse_pgm(const std::vector<uint8_t>& bytes) { return parse_netpbm(bytes, '5', 1); }
std::vector<uint8_t> encode_ppm(const Tensor& img) { return encode_netpbm(img, '6', 3); }
std::vector<uint8_t> encode_pgm(const Tensor& img) { return encode_netpbm(img, '5', 1); }

Tensor read_image(const std::filesystem::path& path) {
  auto bytes = read_file(path);
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '6') return parse_ppm(bytes);
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '5') return parse_pgm(bytes);
  throw FormatError(path.string() + ": bad magic at byte 0 (expected P6 or P5)");
}

void write_ppm(const Tensor& img, const std::filesystem::path& path) {
  write_file(path, encode_ppm(img));
}
void write_pgm(const Tensor& img, const std::filesystem::path& path) {
  write_file(path, encode_pgm(img));
}

Tensor resize_bilinear(const Tensor& img, int64_t out_h, int64_t out_w) {
  if (img.rank() != 3) throw ShapeError("resize_bilinear expects [h,w,c]");
  if (out_h < 1 || out_w < 1) throw ShapeError("resize target dims must be >= 1");
  int64_t h = img.dims[0], w = img.dims[1], c = img.dims[2];
  if (out_h == h && out_w == w) return img;
  Tensor out({out_h, out_w, c});
  double sy = static_cast<double>(h) / static_cast<double>(out_h);
  double sx = static_cast<double>(w) / static_cast<double>(out_w);
  for (int64_t oy = 0; oy < out_h; ++oy) {
    double fy = (static_cast<double>(oy) + 0.5) * sy - 0.5;
    fy = std::min(std::max(fy, 0.0), static_cast<double>(h - 1));
    int64_t y0 = static_cast<int64_t>(fy);
    int64_t y1 = std::min(y0 + 1, h - 1);
    double wy = fy - static_cast<double>(y0);
    for (int64_t ox = 0; ox < out_w; ++ox) {
      double fx = (static_cast<double>(ox) + 0.5) * sx - 0.5;
      fx = std::min(std::max(fx, 0.0), static_cast<double>(w - 1));
      int64_t x0 = static_cast<int64_t>(fx);
      int64_t x1 = std::min(x0 + 1, w - 1);
      double wx = fx - static_cast<double>(x0);
      for (int64_t ch = 0; ch < c; ++ch) {
        double top = (1.0 - wx) * img.at3(y0, x0, ch) + wx * img.at3(y0, x1, ch);
        double bot = (1.0 - wx) * img.at3(y1, x0, ch) + wx * img.at3(y1, x1, ch);
        out.at3(oy, ox, ch) = static_cast<float>((1.0 - wy) * top + wy * bot);
      }
    }
  }
  return out;
}

std::string PreprocessMode::tag() const {
  if (kind == Kind::ScalePm1) return "scale_pm1";
  char buf[96];
  std::snprintf(buf, sizeof buf, "mean_subtract:%g,%g,%g", means[0], means[1], means[2]);
  return buf;
}

Tensor preprocess(const Tensor& img, const PreprocessMode& mode) {
  if (img.rank() != 3) throw ShapeError("preprocess expects [h,w,c]");
  Tensor out(img.dims);
  int64_t c = img.dims[2];
  if (mode.kind == PreprocessMode::Kind::ScalePm1) {
    for (size_t i = 0; i < img.data.size(); ++i) out.data[i] = img.data[i] / 127.5f - 1.0f;
  } else {
    for (int64_t i = 0; i < img.numel(); ++i)
      out.data[static_cast<size_t>(i)] =
          img.data[static_cast<size_t>(i)] - mode.means[static_cast<size_t>(i % c) % 3];
  }
  return out;
}

}  // namespace traffic
