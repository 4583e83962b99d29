#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "traffic/error.hpp"
#include "traffic/rng.hpp"

namespace traffic {

// Dims of a dense row-major array, rank 0-4. Empty dims = scalar (1 element).
using Shape = std::vector<int64_t>;

inline std::string shape_str(const Shape& dims) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < dims.size(); ++i) os << (i ? "," : "") << dims[i];
  os << "]";
  return os.str();
}

inline int64_t shape_numel(const Shape& dims) {
  if (dims.size() > 4) throw ShapeError("rank > 4 not supported: " + shape_str(dims));
  int64_t n = 1;
  for (int64_t d : dims) {
    if (d < 1) throw ShapeError("non-positive dim in shape " + shape_str(dims));
    n *= d;
  }
  return n;
}

template <typename T>
struct TensorT {
  Shape dims;            // empty = scalar
  std::vector<T> data;   // row-major, size == product(dims)

  TensorT() : data(1, T(0)) {}
  explicit TensorT(Shape d) : dims(std::move(d)), data(static_cast<size_t>(shape_numel(dims)), T(0)) {}
  TensorT(Shape d, std::vector<T> values) : dims(std::move(d)), data(std::move(values)) {
    if (static_cast<int64_t>(data.size()) != shape_numel(dims))
      throw ShapeError("data size does not match shape " + shape_str(dims));
  }

  static TensorT full(Shape d, T value) {
    TensorT t(std::move(d));
    std::fill(t.data.begin(), t.data.end(), value);
    return t;
  }
  static TensorT zeros(Shape d) { return TensorT(std::move(d)); }
  static TensorT scalar(T value) {
    TensorT t;
    t.data[0] = value;
    return t;
  }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int64_t rank() const { return static_cast<int64_t>(dims.size()); }
  int64_t dim(int64_t i) const { return dims[static_cast<size_t>(i)]; }

  T& at2(int64_t i, int64_t j) { return data[static_cast<size_t>(i * dims[1] + j)]; }
  T at2(int64_t i, int64_t j) const { return data[static_cast<size_t>(i * dims[1] + j)]; }
  T& at3(int64_t i, int64_t j, int64_t k) {
    return data[static_cast<size_t>((i * dims[1] + j) * dims[2] + k)];
  }
  T at3(int64_t i, int64_t j, int64_t k) const {
    return data[static_cast<size_t>((i * dims[1] + j) * dims[2] + k)];
  }
  T& at4(int64_t i, int64_t j, int64_t k, int64_t l) {
    return data[static_cast<size_t>(((i * dims[1] + j) * dims[2] + k) * dims[3] + l)];
  }
  T at4(int64_t i, int64_t j, int64_t k, int64_t l) const {
    return data[static_cast<size_t>(((i * dims[1] + j) * dims[2] + k) * dims[3] + l)];
  }

  bool same_shape(const TensorT& o) const { return dims == o.dims; }
};

using Tensor = TensorT<float>;     // training / inference precision
using TensorD = TensorT<double>;   // gradient-check precision

template <typename T>
bool all_finite(const TensorT<T>& t) {
  for (T v : t.data)
    if (!std::isfinite(static_cast<double>(v))) return false;
  return true;
}

template <typename T, typename U>
TensorT<T> tensor_cast(const TensorT<U>& src) {
  TensorT<T> out(src.dims);
  for (size_t i = 0; i < src.data.size(); ++i) out.data[i] = static_cast<T>(src.data[i]);
  return out;
}

namespace detail {

// Worker count for row-parallel kernels. TRAFFIC_THREADS overrides; results
// are bit-identical to the sequential path because each output row is
// produced by exactly one worker with an unchanged reduction order.
inline int worker_count() {
  static const int n = [] {
    if (const char* env = std::getenv("TRAFFIC_THREADS")) {
      int v = std::atoi(env);
      if (v >= 1) return std::min(v, 64);
    }
    unsigned hw = std::thread::hardware_concurrency();
    return static_cast<int>(std::clamp(hw, 1u, 8u));
  }();
  return n;
}

template <typename Fn>
void parallel_rows(int64_t rows, int64_t flops_per_row, const Fn& fn) {
  int workers = worker_count();
  if (workers <= 1 || rows < 2 || rows * flops_per_row < (1 << 21)) {
    fn(0, rows);
    return;
  }
  workers = static_cast<int>(std::min<int64_t>(workers, rows));
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(workers - 1));
  int64_t chunk = (rows + workers - 1) / workers;
  for (int w = 1; w < workers; ++w) {
    int64_t b = w * chunk, e = std::min(rows, b + chunk);
    if (b >= e) break;
    pool.emplace_back([&fn, b, e] { fn(b, e); });
  }
  fn(0, std::min(rows, chunk));
  for (auto& th : pool) th.join();
}

}  // namespace detail

// c[i,j] = sum_k a[i,k] * b[k,j], k ascending (fixed reduction order).
template <typename T>
TensorT<T> matmul(const TensorT<T>& a, const TensorT<T>& b) {
  if (a.rank() != 2 || b.rank() != 2)
    throw ShapeError("matmul requires rank-2 operands, got " + shape_str(a.dims) + " x " + shape_str(b.dims));
  if (a.dims[1] != b.dims[0])
    throw ShapeError("matmul inner dims mismatch: " + shape_str(a.dims) + " x " + shape_str(b.dims));
  int64_t m = a.dims[0], k = a.dims[1], n = b.dims[1];
  TensorT<T> c({m, n});
  const T* pa = a.data.data();
  const T* pb = b.data.data();
  T* pc = c.data.data();
  detail::parallel_rows(m, 2 * k * n, [=](int64_t r0, int64_t r1) {
    for (int64_t i = r0; i < r1; ++i) {
      T* ci = pc + i * n;
      const T* ai = pa + i * k;
      for (int64_t kk = 0; kk < k; ++kk) {
        T av = ai[kk];
        const T* bk = pb + kk * n;
        for (int64_t j = 0; j < n; ++j) ci[j] += av * bk[j];
      }
    }
  });
  return c;
}

template <typename T>
TensorT<T> transpose2d(const TensorT<T>& a) {
  if (a.rank() != 2) throw ShapeError("transpose2d requires rank-2, got " + shape_str(a.dims));
  TensorT<T> t({a.dims[1], a.dims[0]});
  for (int64_t i = 0; i < a.dims[0]; ++i)
    for (int64_t j = 0; j < a.dims[1]; ++j) t.at2(j, i) = a.at2(i, j);
  return t;
}

template <typename T, typename Fn>
TensorT<T> map_elementwise(const TensorT<T>& t, const Fn& f) {
  TensorT<T> out(t.dims);
  for (size_t i = 0; i < t.data.size(); ++i) out.data[i] = f(t.data[i]);
  return out;
}

template <typename T>
TensorT<T> reshape(const TensorT<T>& t, Shape dims) {
  if (shape_numel(dims) != t.numel())
    throw ShapeError("reshape element count mismatch: " + shape_str(t.dims) + " -> " + shape_str(dims));
  TensorT<T> out;
  out.dims = std::move(dims);
  out.data = t.data;
  return out;
}

// Sum over one axis (removed from the result) or over all axes (no axis).
template <typename T>
TensorT<T> reduce_sum(const TensorT<T>& t, std::optional<int64_t> axis = std::nullopt) {
  if (!axis) {
    T acc = 0;
    for (T v : t.data) acc += v;
    return TensorT<T>::scalar(acc);
  }
  int64_t ax = *axis;
  if (ax < 0 || ax >= t.rank()) throw ShapeError("reduce_sum axis out of range");
  Shape out_dims;
  for (int64_t i = 0; i < t.rank(); ++i)
    if (i != ax) out_dims.push_back(t.dims[static_cast<size_t>(i)]);
  TensorT<T> out(out_dims);
  int64_t outer = 1, inner = 1, n = t.dims[static_cast<size_t>(ax)];
  for (int64_t i = 0; i < ax; ++i) outer *= t.dims[static_cast<size_t>(i)];
  for (int64_t i = ax + 1; i < t.rank(); ++i) inner *= t.dims[static_cast<size_t>(i)];
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t a = 0; a < n; ++a)
      for (int64_t i = 0; i < inner; ++i)
        out.data[static_cast<size_t>(o * inner + i)] += t.data[static_cast<size_t>((o * n + a) * inner + i)];
  return out;
}

template <typename T>
TensorT<T> reduce_max(const TensorT<T>& t, std::optional<int64_t> axis = std::nullopt) {
  if (!axis) {
    T best = t.data[0];
    for (T v : t.data) best = std::max(best, v);
    return TensorT<T>::scalar(best);
  }
  int64_t ax = *axis;
  if (ax < 0 || ax >= t.rank()) throw ShapeError("reduce_max axis out of range");
  Shape out_dims;
  for (int64_t i = 0; i < t.rank(); ++i)
    if (i != ax) out_dims.push_back(t.dims[static_cast<size_t>(i)]);
  TensorT<T> out(out_dims);
  int64_t outer = 1, inner = 1, n = t.dims[static_cast<size_t>(ax)];
  for (int64_t i = 0; i < ax; ++i) outer *= t.dims[static_cast<size_t>(i)];
  for (int64_t i = ax + 1; i < t.rank(); ++i) inner *= t.dims[static_cast<size_t>(i)];
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t i = 0; i < inner; ++i) {
      T best = t.data[static_cast<size_t>(o * n * inner + i)];
      for (int64_t a = 1; a < n; ++a)
        best = std::max(best, t.data[static_cast<size_t>((o * n + a) * inner + i)]);
      out.data[static_cast<size_t>(o * inner + i)] = best;
    }
  return out;
}

template <typename T>
TensorT<T> tensor_full(Shape dims, T value) {
  return TensorT<T>::full(std::move(dims), value);
}

// Seeded normal fill; draws happen in double then narrow to T.
template <typename T>
TensorT<T> rng_normal(Rng& rng, Shape dims, double mean, double std) {
  if (std < 0) throw ShapeError("rng_normal: std must be >= 0");
  TensorT<T> out(std::move(dims));
  if (std == 0) {
    std::fill(out.data.begin(), out.data.end(), static_cast<T>(mean));
    return out;
  }
  for (auto& v : out.data) v = static_cast<T>(mean + std * rng.next_normal());
  return out;
}

}  // namespace traffic
