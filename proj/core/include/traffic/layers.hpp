#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "traffic/tensor.hpp"

namespace traffic {

enum class Activation { Linear, Relu, Tanh, Softmax };
enum class Padding { Same, Valid };
enum class LayerKind { Conv2D, MaxPool2D, Flatten, Dense };

inline const char* activation_name(Activation a) {
  switch (a) {
    case Activation::Linear: return "linear";
    case Activation::Relu: return "relu";
    case Activation::Tanh: return "tanh";
    case Activation::Softmax: return "softmax";
  }
  return "?";
}

inline const char* layer_kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::Conv2D: return "Conv2D";
    case LayerKind::MaxPool2D: return "MaxPool2D";
    case LayerKind::Flatten: return "Flatten";
    case LayerKind::Dense: return "Dense";
  }
  return "?";
}

// Epsilon inside log() for cross-entropy.
inline constexpr double kLogEps = 1e-12;

struct LayerSpec {
  LayerKind kind = LayerKind::Flatten;
  std::string name;
  Activation activation = Activation::Linear;
  // Conv2D
  int64_t filters = 0;
  int64_t kernel_h = 0, kernel_w = 0;
  Padding padding = Padding::Same;
  // MaxPool2D
  int64_t pool_h = 0, pool_w = 0;
  // Dense
  int64_t units = 0;

  bool parameterized() const { return kind == LayerKind::Conv2D || kind == LayerKind::Dense; }

  static LayerSpec conv2d(std::string name, int64_t filters, int64_t kh, int64_t kw,
                          Padding padding, Activation act) {
    if (filters < 1 || kh < 1 || kw < 1)
      throw ShapeError("conv2d spec '" + name + "': filters and kernel dims must be >= 1");
    LayerSpec s;
    s.kind = LayerKind::Conv2D;
    s.name = std::move(name);
    s.filters = filters;
    s.kernel_h = kh;
    s.kernel_w = kw;
    s.padding = padding;
    s.activation = act;
    return s;
  }
  static LayerSpec maxpool(std::string name, int64_t ph, int64_t pw) {
    if (ph < 1 || pw < 1) throw ShapeError("maxpool spec '" + name + "': pool dims must be >= 1");
    LayerSpec s;
    s.kind = LayerKind::MaxPool2D;
    s.name = std::move(name);
    s.pool_h = ph;
    s.pool_w = pw;
    return s;
  }
  static LayerSpec flatten(std::string name) {
    LayerSpec s;
    s.kind = LayerKind::Flatten;
    s.name = std::move(name);
    return s;
  }
  static LayerSpec dense(std::string name, int64_t units, Activation act) {
    if (units < 1) throw ShapeError("dense spec '" + name + "': units must be >= 1");
    LayerSpec s;
    s.kind = LayerKind::Dense;
    s.name = std::move(name);
    s.units = units;
    s.activation = act;
    return s;
  }
};

// Parameter tensors. Conv2D weights are [kh,kw,in_ch,filters], Dense [in,units];
// bias is [filters] / [units]. Non-parameterized layers leave present == false.
template <typename T>
struct LayerTensorsT {
  TensorT<T> weights;
  TensorT<T> bias;
  bool present = false;

  int64_t param_count() const { return present ? weights.numel() + bias.numel() : 0; }
};

using LayerTensors = LayerTensorsT<float>;

template <typename T>
struct ParamGradsT {
  TensorT<T> dweights;
  TensorT<T> dbias;
  bool present = false;
};

// Forward state required by the matching backward pass.
template <typename T>
struct LayerCacheT {
  TensorT<T> input;             // Conv2D / Dense
  TensorT<T> output;            // post-activation
  TensorT<T> cols;              // Conv2D: im2col matrix, reused by backward
  std::vector<int64_t> argmax;  // MaxPool2D: flat input index per output element
  Shape in_dims;                // MaxPool2D / Flatten
};

// ---- activations ----------------------------------------------------------

// Softmax normalizes over the last axis with max-subtraction stabilization.
template <typename T>
TensorT<T> activation_forward(const TensorT<T>& t, Activation act) {
  switch (act) {
    case Activation::Linear:
      return t;
    case Activation::Relu:
      return map_elementwise(t, [](T v) { return v > T(0) ? v : T(0); });
    case Activation::Tanh:
      return map_elementwise(t, [](T v) { return std::tanh(v); });
    case Activation::Softmax: {
      if (t.rank() < 1) throw ShapeError("softmax requires rank >= 1");
      int64_t cols = t.dims.back();
      int64_t rows = t.numel() / cols;
      TensorT<T> out(t.dims);
      for (int64_t r = 0; r < rows; ++r) {
        const T* in = t.data.data() + r * cols;
        T* o = out.data.data() + r * cols;
        T mx = in[0];
        for (int64_t j = 1; j < cols; ++j) mx = std::max(mx, in[j]);
        T sum = 0;
        for (int64_t j = 0; j < cols; ++j) {
          o[j] = std::exp(in[j] - mx);
          sum += o[j];
        }
        for (int64_t j = 0; j < cols; ++j) o[j] /= sum;
      }
      return out;
    }
  }
  throw ShapeError("unknown activation");
}

// Derivative through the activation given its forward OUTPUT. Relu at exactly
// 0 has derivative 0; softmax applies the full per-row Jacobian.
template <typename T>
TensorT<T> activation_backward(const TensorT<T>& upstream, const TensorT<T>& output, Activation act) {
  if (!upstream.same_shape(output)) throw ShapeError("activation_backward shape mismatch");
  switch (act) {
    case Activation::Linear:
      return upstream;
    case Activation::Relu: {
      TensorT<T> out(upstream.dims);
      for (size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = output.data[i] > T(0) ? upstream.data[i] : T(0);
      return out;
    }
    case Activation::Tanh: {
      TensorT<T> out(upstream.dims);
      for (size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = upstream.data[i] * (T(1) - output.data[i] * output.data[i]);
      return out;
    }
    case Activation::Softmax: {
      int64_t cols = output.dims.back();
      int64_t rows = output.numel() / cols;
      TensorT<T> out(upstream.dims);
      for (int64_t r = 0; r < rows; ++r) {
        const T* u = upstream.data.data() + r * cols;
        const T* y = output.data.data() + r * cols;
        T* o = out.data.data() + r * cols;
        T dot = 0;
        for (int64_t j = 0; j < cols; ++j) dot += u[j] * y[j];
        for (int64_t j = 0; j < cols; ++j) o[j] = y[j] * (u[j] - dot);
      }
      return out;
    }
  }
  throw ShapeError("unknown activation");
}

// ---- im2col ---------------------------------------------------------------

namespace detail {

struct ConvGeometry {
  int64_t n, h, w, c, kh, kw, f, oh, ow, pad_top, pad_left;
};

template <typename T>
ConvGeometry conv_geometry(const TensorT<T>& x, const LayerSpec& spec, const LayerTensorsT<T>& p) {
  if (x.rank() != 4) throw ShapeError("conv2d input must be rank-4 [n,h,w,c], got " + shape_str(x.dims));
  if (!p.present || p.weights.rank() != 4)
    throw ShapeError("conv2d layer '" + spec.name + "' missing [kh,kw,in,f] weights");
  ConvGeometry g;
  g.n = x.dims[0];
  g.h = x.dims[1];
  g.w = x.dims[2];
  g.c = x.dims[3];
  g.kh = spec.kernel_h;
  g.kw = spec.kernel_w;
  g.f = spec.filters;
  if (p.weights.dims[2] != g.c)
    throw ShapeError("conv2d '" + spec.name + "': input channels " + std::to_string(g.c) +
                     " do not match weight in_ch " + std::to_string(p.weights.dims[2]));
  if (spec.padding == Padding::Same) {
    g.oh = g.h;
    g.ow = g.w;
    g.pad_top = (g.kh - 1) / 2;
    g.pad_left = (g.kw - 1) / 2;
  } else {
    g.oh = g.h - g.kh + 1;
    g.ow = g.w - g.kw + 1;
    g.pad_top = 0;
    g.pad_left = 0;
    if (g.oh < 1 || g.ow < 1)
      throw ShapeError("conv2d '" + spec.name + "': kernel larger than input under valid padding");
  }
  return g;
}

// Unroll sliding windows into rows: output [n*oh*ow, kh*kw*c], column order
// (dy, dx, channel) to line up with the row-major [kh,kw,c,f] weight layout.
template <typename T>
TensorT<T> im2col(const TensorT<T>& x, const ConvGeometry& g) {
  int64_t patch = g.kh * g.kw * g.c;
  TensorT<T> cols({g.n * g.oh * g.ow, patch});
  const T* px = x.data.data();
  T* pc = cols.data.data();
  detail::parallel_rows(g.n * g.oh, g.ow * patch, [&, px, pc](int64_t r0, int64_t r1) {
    for (int64_t r = r0; r < r1; ++r) {
      int64_t ni = r / g.oh, oy = r % g.oh;
      for (int64_t ox = 0; ox < g.ow; ++ox) {
        T* row = pc + ((ni * g.oh + oy) * g.ow + ox) * patch;
        for (int64_t dy = 0; dy < g.kh; ++dy) {
          int64_t iy = oy + dy - g.pad_top;
          for (int64_t dx = 0; dx < g.kw; ++dx) {
            int64_t ix = ox + dx - g.pad_left;
            T* dst = row + (dy * g.kw + dx) * g.c;
            if (iy < 0 || iy >= g.h || ix < 0 || ix >= g.w) {
              for (int64_t ch = 0; ch < g.c; ++ch) dst[ch] = T(0);
            } else {
              const T* src = px + ((ni * g.h + iy) * g.w + ix) * g.c;
              for (int64_t ch = 0; ch < g.c; ++ch) dst[ch] = src[ch];
            }
          }
        }
      }
    }
  });
  return cols;
}

// Scatter-add of column gradients back onto the input image grid.
template <typename T>
TensorT<T> col2im(const TensorT<T>& dcols, const ConvGeometry& g) {
  TensorT<T> dx({g.n, g.h, g.w, g.c});
  int64_t patch = g.kh * g.kw * g.c;
  const T* pd = dcols.data.data();
  T* px = dx.data.data();
  for (int64_t ni = 0; ni < g.n; ++ni)
    for (int64_t oy = 0; oy < g.oh; ++oy)
      for (int64_t ox = 0; ox < g.ow; ++ox) {
        const T* row = pd + ((ni * g.oh + oy) * g.ow + ox) * patch;
        for (int64_t dy = 0; dy < g.kh; ++dy) {
          int64_t iy = oy + dy - g.pad_top;
          if (iy < 0 || iy >= g.h) continue;
          for (int64_t dx_ = 0; dx_ < g.kw; ++dx_) {
            int64_t ix = ox + dx_ - g.pad_left;
            if (ix < 0 || ix >= g.w) continue;
            const T* src = row + (dy * g.kw + dx_) * g.c;
            T* dst = px + ((ni * g.h + iy) * g.w + ix) * g.c;
            for (int64_t ch = 0; ch < g.c; ++ch) dst[ch] += src[ch];
          }
        }
      }
  return dx;
}

}  // namespace detail

// ---- conv2d ---------------------------------------------------------------

// Cross-correlation + bias + activation, stride 1. Same padding preserves
// spatial dims; valid shrinks by kernel-1.
template <typename T>
TensorT<T> conv2d_forward(const TensorT<T>& x, const LayerSpec& spec, const LayerTensorsT<T>& p,
                          LayerCacheT<T>* cache = nullptr) {
  auto g = detail::conv_geometry(x, spec, p);
  TensorT<T> cols = detail::im2col(x, g);
  TensorT<T> wmat = reshape(p.weights, {g.kh * g.kw * g.c, g.f});
  TensorT<T> out2d = matmul(cols, wmat);
  const T* b = p.bias.data.data();
  for (int64_t r = 0; r < out2d.dims[0]; ++r) {
    T* row = out2d.data.data() + r * g.f;
    for (int64_t j = 0; j < g.f; ++j) row[j] += b[j];
  }
  TensorT<T> out = activation_forward(reshape(out2d, {g.n, g.oh, g.ow, g.f}), spec.activation);
  if (cache) {
    cache->input = x;
    cache->output = out;
    cache->cols = std::move(cols);
  }
  return out;
}

// Reverse-mode gradients. `preactivated` means `upstream` is already the
// gradient at the pre-activation (used by the fused softmax+cross-entropy
// path); otherwise the activation Jacobian is applied first.
template <typename T>
TensorT<T> conv2d_backward(const TensorT<T>& upstream, const LayerSpec& spec,
                           const LayerTensorsT<T>& p, const LayerCacheT<T>& cache,
                           ParamGradsT<T>* grads, bool need_dinput = true,
                           bool preactivated = false) {
  auto g = detail::conv_geometry(cache.input, spec, p);
  if (upstream.dims != Shape{g.n, g.oh, g.ow, g.f})
    throw ShapeError("conv2d_backward '" + spec.name + "': upstream shape " + shape_str(upstream.dims) +
                     " does not match forward output");
  TensorT<T> dpre = preactivated ? upstream : activation_backward(upstream, cache.output, spec.activation);
  TensorT<T> dpre2d = reshape(dpre, {g.n * g.oh * g.ow, g.f});
  if (grads) {
    grads->present = true;
    grads->dbias = TensorT<T>({g.f});
    for (int64_t r = 0; r < dpre2d.dims[0]; ++r) {
      const T* row = dpre2d.data.data() + r * g.f;
      for (int64_t j = 0; j < g.f; ++j) grads->dbias.data[static_cast<size_t>(j)] += row[j];
    }
    bool have_cols = cache.cols.rank() == 2 && cache.cols.dims[0] == g.n * g.oh * g.ow;
    TensorT<T> cols = have_cols ? cache.cols : detail::im2col(cache.input, g);
    grads->dweights = reshape(matmul(transpose2d(cols), dpre2d), p.weights.dims);
  }
  if (!need_dinput) return TensorT<T>();
  TensorT<T> wmat = reshape(p.weights, {g.kh * g.kw * g.c, g.f});
  TensorT<T> dcols = matmul(dpre2d, transpose2d(wmat));
  return detail::col2im(dcols, g);
}

// ---- maxpool --------------------------------------------------------------

// Pool stride equals pool size; trailing rows/cols that do not fill a window
// are dropped. Ties go to the first index in row-major window scan order.
template <typename T>
TensorT<T> maxpool_forward(const TensorT<T>& x, const LayerSpec& spec, LayerCacheT<T>* cache = nullptr) {
  if (x.rank() != 4) throw ShapeError("maxpool input must be rank-4, got " + shape_str(x.dims));
  int64_t n = x.dims[0], h = x.dims[1], w = x.dims[2], c = x.dims[3];
  int64_t ph = spec.pool_h, pw = spec.pool_w;
  int64_t oh = h / ph, ow = w / pw;
  if (oh < 1 || ow < 1) throw ShapeError("maxpool '" + spec.name + "': pool larger than input");
  TensorT<T> out({n, oh, ow, c});
  std::vector<int64_t> argmax(static_cast<size_t>(out.numel()));
  for (int64_t ni = 0; ni < n; ++ni)
    for (int64_t oy = 0; oy < oh; ++oy)
      for (int64_t ox = 0; ox < ow; ++ox)
        for (int64_t ch = 0; ch < c; ++ch) {
          T best{};
          int64_t best_idx = -1;
          for (int64_t dy = 0; dy < ph; ++dy)
            for (int64_t dx = 0; dx < pw; ++dx) {
              int64_t idx = ((ni * h + oy * ph + dy) * w + ox * pw + dx) * c + ch;
              T v = x.data[static_cast<size_t>(idx)];
              if (best_idx < 0 || v > best) {
                best = v;
                best_idx = idx;
              }
            }
          int64_t oidx = ((ni * oh + oy) * ow + ox) * c + ch;
          out.data[static_cast<size_t>(oidx)] = best;
          argmax[static_cast<size_t>(oidx)] = best_idx;
        }
  if (cache) {
    cache->argmax = std::move(argmax);
    cache->in_dims = x.dims;
    cache->output = out;
  }
  return out;
}

// Routes each upstream element to its argmax position; all other inputs get 0.
template <typename T>
TensorT<T> maxpool_backward(const TensorT<T>& upstream, const LayerCacheT<T>& cache) {
  if (upstream.numel() != static_cast<int64_t>(cache.argmax.size()))
    throw ShapeError("maxpool_backward: upstream does not match cached forward");
  TensorT<T> dx(cache.in_dims);
  for (size_t i = 0; i < cache.argmax.size(); ++i)
    dx.data[static_cast<size_t>(cache.argmax[i])] += upstream.data[i];
  return dx;
}

// ---- dense / flatten ------------------------------------------------------

template <typename T>
TensorT<T> dense_forward(const TensorT<T>& x, const LayerSpec& spec, const LayerTensorsT<T>& p,
                         LayerCacheT<T>* cache = nullptr) {
  if (x.rank() != 2) throw ShapeError("dense input must be rank-2 [n,in], got " + shape_str(x.dims));
  if (!p.present || p.weights.rank() != 2 || p.weights.dims[0] != x.dims[1])
    throw ShapeError("dense '" + spec.name + "': input width " + std::to_string(x.dims[1]) +
                     " does not match weights");
  TensorT<T> pre = matmul(x, p.weights);
  int64_t n = pre.dims[0], u = pre.dims[1];
  for (int64_t r = 0; r < n; ++r) {
    T* row = pre.data.data() + r * u;
    for (int64_t j = 0; j < u; ++j) row[j] += p.bias.data[static_cast<size_t>(j)];
  }
  TensorT<T> out = activation_forward(pre, spec.activation);
  if (cache) {
    cache->input = x;
    cache->output = out;
  }
  return out;
}

template <typename T>
TensorT<T> dense_backward(const TensorT<T>& upstream, const LayerSpec& spec,
                          const LayerTensorsT<T>& p, const LayerCacheT<T>& cache,
                          ParamGradsT<T>* grads, bool need_dinput = true,
                          bool preactivated = false) {
  if (!upstream.same_shape(cache.output))
    throw ShapeError("dense_backward '" + spec.name + "': upstream shape mismatch");
  TensorT<T> dpre = preactivated ? upstream : activation_backward(upstream, cache.output, spec.activation);
  if (grads) {
    grads->present = true;
    int64_t n = dpre.dims[0], u = dpre.dims[1];
    grads->dbias = TensorT<T>({u});
    for (int64_t r = 0; r < n; ++r)
      for (int64_t j = 0; j < u; ++j)
        grads->dbias.data[static_cast<size_t>(j)] += dpre.at2(r, j);
    grads->dweights = matmul(transpose2d(cache.input), dpre);
  }
  if (!need_dinput) return TensorT<T>();
  return matmul(dpre, transpose2d(p.weights));
}

template <typename T>
TensorT<T> flatten_forward(const TensorT<T>& x, LayerCacheT<T>* cache = nullptr) {
  if (x.rank() < 2) throw ShapeError("flatten input must have a batch dim");
  int64_t n = x.dims[0];
  TensorT<T> out = reshape(x, {n, x.numel() / n});
  if (cache) cache->in_dims = x.dims;
  return out;
}

template <typename T>
TensorT<T> flatten_backward(const TensorT<T>& upstream, const LayerCacheT<T>& cache) {
  return reshape(upstream, cache.in_dims);
}

// ---- unified dispatch -----------------------------------------------------

template <typename T>
TensorT<T> forward_layer(const LayerSpec& spec, const LayerTensorsT<T>& p, const TensorT<T>& x,
                         LayerCacheT<T>* cache = nullptr) {
  switch (spec.kind) {
    case LayerKind::Conv2D: return conv2d_forward(x, spec, p, cache);
    case LayerKind::MaxPool2D: return maxpool_forward(x, spec, cache);
    case LayerKind::Flatten: return flatten_forward(x, cache);
    case LayerKind::Dense: return dense_forward(x, spec, p, cache);
  }
  throw ShapeError("unknown layer kind");
}

template <typename T>
TensorT<T> backward_layer(const LayerSpec& spec, const LayerTensorsT<T>& p,
                          const TensorT<T>& upstream, const LayerCacheT<T>& cache,
                          ParamGradsT<T>* grads, bool need_dinput = true,
                          bool preactivated = false) {
  switch (spec.kind) {
    case LayerKind::Conv2D:
      return conv2d_backward(upstream, spec, p, cache, grads, need_dinput, preactivated);
    case LayerKind::MaxPool2D:
      return need_dinput ? maxpool_backward(upstream, cache) : TensorT<T>();
    case LayerKind::Flatten:
      return need_dinput ? flatten_backward(upstream, cache) : TensorT<T>();
    case LayerKind::Dense:
      return dense_backward(upstream, spec, p, cache, grads, need_dinput, preactivated);
  }
  throw ShapeError("unknown layer kind");
}

// ---- loss -----------------------------------------------------------------

namespace detail {
template <typename T>
void validate_prob_onehot(const TensorT<T>& probs, const TensorT<T>& onehot) {
  if (probs.rank() != 2 || !probs.same_shape(onehot))
    throw ShapeError("cross_entropy requires matching rank-2 [n,classes] inputs");
  int64_t n = probs.dims[0], k = probs.dims[1];
  for (int64_t r = 0; r < n; ++r) {
    double psum = 0, ysum = 0;
    int ones = 0;
    for (int64_t j = 0; j < k; ++j) {
      psum += static_cast<double>(probs.at2(r, j));
      T y = onehot.at2(r, j);
      if (y == T(1)) ++ones;
      else if (y != T(0))
        throw DataError("cross_entropy: row " + std::to_string(r) + " is not one-hot");
      ysum += static_cast<double>(y);
    }
    if (std::abs(psum - 1.0) > 1e-6)
      throw DataError("cross_entropy: probability row " + std::to_string(r) + " does not sum to 1");
    if (ones != 1 || ysum != 1.0)
      throw DataError("cross_entropy: row " + std::to_string(r) + " is not one-hot");
  }
}
}  // namespace detail

// Mean over the batch of -sum_j y*log(p + 1e-12).
template <typename T>
double cross_entropy(const TensorT<T>& probs, const TensorT<T>& onehot) {
  detail::validate_prob_onehot(probs, onehot);
  int64_t n = probs.dims[0], k = probs.dims[1];
  double acc = 0;
  for (int64_t r = 0; r < n; ++r)
    for (int64_t j = 0; j < k; ++j)
      if (onehot.at2(r, j) == T(1))
        acc -= std::log(static_cast<double>(probs.at2(r, j)) + kLogEps);
  return acc / static_cast<double>(n);
}

// d(loss)/d(probabilities).
template <typename T>
TensorT<T> cross_entropy_backward(const TensorT<T>& probs, const TensorT<T>& onehot) {
  detail::validate_prob_onehot(probs, onehot);
  int64_t n = probs.dims[0];
  TensorT<T> d(probs.dims);
  for (size_t i = 0; i < d.data.size(); ++i)
    if (onehot.data[i] == T(1))
      d.data[i] = static_cast<T>(-1.0 / ((static_cast<double>(probs.data[i]) + kLogEps) *
                                         static_cast<double>(n)));
  return d;
}

// Fused gradient of mean cross-entropy w.r.t. the softmax LOGITS: (p - y)/n.
template <typename T>
TensorT<T> softmax_xent_backward(const TensorT<T>& probs, const TensorT<T>& onehot) {
  if (!probs.same_shape(onehot) || probs.rank() != 2)
    throw ShapeError("softmax_xent_backward requires matching rank-2 inputs");
  int64_t n = probs.dims[0];
  TensorT<T> d(probs.dims);
  for (size_t i = 0; i < d.data.size(); ++i)
    d.data[i] = (probs.data[i] - onehot.data[i]) / static_cast<T>(n);
  return d;
}

}  // namespace traffic
