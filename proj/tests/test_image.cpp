#include <filesystem>

#include "doctest.h"
#include "oracles.hpp"
#include "traffic/image.hpp"

using namespace traffic;

namespace {
std::vector<uint8_t> bytes_of(const std::string& header, std::initializer_list<uint8_t> payload) {
  std::vector<uint8_t> b(header.begin(), header.end());
  b.insert(b.end(), payload);
  return b;
}

Tensor random_image(Rng& rng, int64_t h, int64_t w, int64_t c) {
  Tensor img({h, w, c});
  for (auto& v : img.data) v = static_cast<float>(rng.next_below(256));
  return img;
}
}  // namespace

TEST_CASE("parse_ppm decodes a single red pixel") {
  auto img = parse_ppm(bytes_of("P6\n1 1\n255\n", {255, 0, 0}));
  CHECK(img.dims == Shape{1, 1, 3});
  CHECK(img.data == std::vector<float>{255, 0, 0});
}

TEST_CASE("parse_ppm tolerates header comments") {
  auto img = parse_ppm(bytes_of("P6\n# camera 3, lane view\n2 1\n# maxval next\n255\n",
                                {1, 2, 3, 4, 5, 6}));
  CHECK(img.dims == Shape{1, 2, 3});
  CHECK(img.data == std::vector<float>{1, 2, 3, 4, 5, 6});
}

TEST_CASE("parse errors are distinct and carry byte offsets") {
  CHECK_THROWS_WITH_AS(parse_ppm(bytes_of("P3\n1 1\n255\n", {0, 0, 0})),
                       doctest::Contains("bad magic at byte 0"), FormatError);
  CHECK_THROWS_WITH_AS(parse_ppm(bytes_of("P6\n1 1\n254\n", {0, 0, 0})),
                       doctest::Contains("maxval must be 255"), FormatError);
  CHECK_THROWS_WITH_AS(parse_ppm(bytes_of("P6\n2 2\n255\n", {0, 0, 0})),
                       doctest::Contains("truncated payload"), FormatError);
  // the maxval error names the byte where the bad token started
  try {
    parse_ppm(bytes_of("P6\n1 1\n254\n", {0, 0, 0}));
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("byte 7") != std::string::npos);
  }
}

TEST_CASE("ppm and pgm round-trip bit-exactly") {
  Rng rng(42);
  for (int trial = 0; trial < 25; ++trial) {
    auto img = random_image(rng, 16, 16, 3);
    auto back = parse_ppm(encode_ppm(img));
    CHECK(back.data == img.data);
    auto gray = random_image(rng, 9, 5, 1);
    auto gback = parse_pgm(encode_pgm(gray));
    CHECK(gback.data == gray.data);
  }
}

TEST_CASE("file round trip via read_image") {
  auto dir = std::filesystem::temp_directory_path() / "traffic_img_test";
  std::filesystem::create_directories(dir);
  Rng rng(7);
  auto img = random_image(rng, 12, 8, 3);
  write_ppm(img, dir / "a.ppm");
  auto back = read_image(dir / "a.ppm");
  CHECK(back.data == img.data);
  auto gray = random_image(rng, 5, 6, 1);
  write_pgm(gray, dir / "b.pgm");
  CHECK(read_image(dir / "b.pgm").data == gray.data);
}

TEST_CASE("resize_bilinear identity and constants") {
  Rng rng(8);
  auto img = random_image(rng, 10, 10, 3);
  auto same = resize_bilinear(img, 10, 10);
  CHECK(same.data == img.data);

  auto constant = tensor_full<float>({4, 6, 3}, 50.0f);
  auto scaled = resize_bilinear(constant, 9, 3);
  for (float v : scaled.data) CHECK(v == doctest::Approx(50.0f));
  CHECK_THROWS_AS(resize_bilinear(img, 0, 5), ShapeError);
}

TEST_CASE("resize_bilinear half-pixel centers: checkerboard to 3x3") {
  Tensor board({2, 2, 1}, {0, 255, 255, 0});
  auto out = resize_bilinear(board, 3, 3);
  CHECK(out.at3(1, 1, 0) == doctest::Approx(127.5));
  CHECK(out.at3(0, 0, 0) == doctest::Approx(0.0));
  CHECK(out.at3(0, 2, 0) == doctest::Approx(255.0));
}

TEST_CASE("preprocess scale_pm1 is the exact affine map") {
  Tensor img({1, 3, 3}, {0, 127.5f, 255, 10, 20, 30, 64, 128, 192});
  auto out = preprocess(img, PreprocessMode::scale_pm1());
  CHECK(out.data[0] == -1.0f);
  CHECK(out.data[1] == 0.0f);
  CHECK(out.data[2] == 1.0f);
  for (size_t i = 0; i < img.data.size(); ++i)
    CHECK(out.data[i] == img.data[i] / 127.5f - 1.0f);
  for (float v : out.data) {
    CHECK(v >= -1.0f);
    CHECK(v <= 1.0f);
  }
}

TEST_CASE("preprocess mean_subtract removes per-channel means") {
  Tensor img({1, 1, 3}, {10, 20, 30});
  auto out = preprocess(img, PreprocessMode::mean_subtract({10, 20, 30}));
  CHECK(out.data == std::vector<float>{0, 0, 0});
}
