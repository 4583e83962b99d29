#include "doctest.h"
#include "oracles.hpp"
#include "traffic/tensor.hpp"

using namespace traffic;

TEST_CASE("tensor_full fills every element") {
  auto t = tensor_full<float>({2, 2}, 0.0f);
  CHECK(t.numel() == 4);
  for (float v : t.data) CHECK(v == 0.0f);

  auto s = tensor_full<double>({}, 3.5);
  CHECK(s.rank() == 0);
  CHECK(s.numel() == 1);
  CHECK(s.data[0] == 3.5);

  auto big = tensor_full<float>({224, 224, 3}, 1.0f);
  CHECK(big.numel() == 150528);
  CHECK(big.data.front() == 1.0f);
  CHECK(big.data.back() == 1.0f);
}

TEST_CASE("shape errors on non-positive dims") {
  CHECK_THROWS_AS(tensor_full<float>({0, 2}, 1.0f), ShapeError);
  CHECK_THROWS_AS(tensor_full<float>({3, -1}, 1.0f), ShapeError);
  CHECK_THROWS_AS(Tensor({1, 2, 3, 4, 5}), ShapeError);
}

TEST_CASE("matmul basics") {
  TensorD id({2, 2}, {1, 0, 0, 1});
  TensorD a({2, 2}, {1, 2, 3, 4});
  auto r = matmul(id, a);
  CHECK(r.data == a.data);

  TensorD row({1, 2}, {1, 2});
  TensorD col({2, 1}, {3, 4});
  CHECK(matmul(row, col).data[0] == 11.0);

  CHECK_THROWS_AS(matmul(row, row), ShapeError);
}

TEST_CASE("matmul matches the naive triple-loop oracle") {
  Rng rng(17);
  auto a = oracles::random_tensor<double>(rng, {5, 7});
  auto b = oracles::random_tensor<double>(rng, {7, 3});
  auto got = matmul(a, b);
  auto want = oracles::naive_matmul(a, b);
  for (size_t i = 0; i < got.data.size(); ++i)
    CHECK(std::abs(got.data[i] - want.data[i]) < 1e-12);
}

TEST_CASE("matmul associativity on random 8x8 chains") {
  Rng rng(23);
  for (int trial = 0; trial < 5; ++trial) {
    auto a = oracles::random_tensor<double>(rng, {8, 8});
    auto b = oracles::random_tensor<double>(rng, {8, 8});
    auto c = oracles::random_tensor<double>(rng, {8, 8});
    auto left = matmul(matmul(a, b), c);
    auto right = matmul(a, matmul(b, c));
    for (size_t i = 0; i < left.data.size(); ++i)
      CHECK(std::abs(left.data[i] - right.data[i]) < 1e-9);
  }
}

TEST_CASE("reshape preserves row-major order and round-trips") {
  Tensor t({2, 3}, {0, 1, 2, 3, 4, 5});
  auto r = reshape(t, {3, 2});
  CHECK(r.data == t.data);
  auto back = reshape(r, {2, 3});
  CHECK(back.dims == t.dims);
  CHECK(back.data == t.data);

  CHECK_THROWS_AS(reshape(t, {4, 2}), ShapeError);

  // bottleneck reshape used by transfer-value extraction
  Tensor wide({7, 7, 512});
  for (int64_t i = 0; i < wide.numel(); ++i) wide.data[static_cast<size_t>(i)] = static_cast<float>(i % 1000);
  auto flat = reshape(wide, {25088});
  CHECK(flat.dims == Shape{25088});
  CHECK(flat.data == wide.data);
}

TEST_CASE("reshape round-trip is identity for random shapes") {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    Shape dims;
    int rank = 1 + static_cast<int>(rng.next_below(4));
    for (int i = 0; i < rank; ++i) dims.push_back(1 + static_cast<int64_t>(rng.next_below(5)));
    auto t = oracles::random_tensor<float>(rng, dims);
    auto flat = reshape(t, {t.numel()});
    auto back = reshape(flat, dims);
    CHECK(back.dims == t.dims);
    CHECK(back.data == t.data);
  }
}

TEST_CASE("reduce_sum and reduce_max") {
  auto ones = tensor_full<float>({4, 4}, 1.0f);
  auto total = reduce_sum(reduce_sum(ones, 1), 0);
  CHECK(total.data[0] == 16.0f);
  CHECK(reduce_sum(ones).data[0] == 16.0f);

  Tensor t({2, 3}, {1, 5, 2, 7, 0, 3});
  auto m0 = reduce_max(t, 0);
  CHECK(m0.dims == Shape{3});
  CHECK(m0.data == std::vector<float>{7, 5, 3});
  auto s1 = reduce_sum(t, 1);
  CHECK(s1.data == std::vector<float>{8, 10});
  CHECK(reduce_max(t).data[0] == 7.0f);
  CHECK_THROWS_AS(reduce_sum(t, 2), ShapeError);
}

TEST_CASE("map_elementwise applies pointwise") {
  Tensor t({3}, {-1, 0, 2});
  auto r = map_elementwise(t, [](float v) { return v * v; });
  CHECK(r.data == std::vector<float>{1, 0, 4});
}

TEST_CASE("operations on finite inputs stay finite") {
  Rng rng(99);
  auto a = oracles::random_tensor<float>(rng, {6, 6}, 100.0);
  auto b = oracles::random_tensor<float>(rng, {6, 6}, 100.0);
  CHECK(all_finite(matmul(a, b)));
  CHECK(all_finite(reduce_sum(a, 0)));
  CHECK(all_finite(reshape(a, {36})));
}
