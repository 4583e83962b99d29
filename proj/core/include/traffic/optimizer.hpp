#pragma once

#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <vector>

#include "traffic/dataset.hpp"
#include "traffic/model.hpp"

namespace traffic {

struct AdamConfig {
  double alpha = 5e-5;  // the learning rate the experiments use by default
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// First/second moments for every trainable tensor, keyed by layer name.
// Frozen layers get no state and are never touched.
template <typename T>
struct AdamStateT {
  struct Moments {
    TensorT<T> mw, vw, mb, vb;
  };
  AdamConfig cfg;
  int64_t t = 0;
  std::map<std::string, Moments> moments;

  static AdamStateT init(const ModelT<T>& m, const AdamConfig& cfg) {
    AdamStateT s;
    s.cfg = cfg;
    for (const auto& l : m.layers)
      if (l.tensors.present && m.trainable.count(l.spec.name))
        s.moments[l.spec.name] = {TensorT<T>(l.tensors.weights.dims),
                                  TensorT<T>(l.tensors.weights.dims),
                                  TensorT<T>(l.tensors.bias.dims),
                                  TensorT<T>(l.tensors.bias.dims)};
    return s;
  }
};

using AdamState = AdamStateT<float>;

namespace detail {
template <typename T>
void adam_update(TensorT<T>& param, const TensorT<T>& grad, TensorT<T>& m, TensorT<T>& v,
                 const AdamConfig& cfg, double bc1, double bc2) {
  if (grad.dims != param.dims)
    throw ShapeError("adam_step: gradient shape " + shape_str(grad.dims) +
                     " does not match parameter " + shape_str(param.dims));
  T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
  T alpha = static_cast<T>(cfg.alpha), eps = static_cast<T>(cfg.eps);
  T c1 = static_cast<T>(bc1), c2 = static_cast<T>(bc2);
  for (size_t i = 0; i < param.data.size(); ++i) {
    T g = grad.data[i];
    m.data[i] = b1 * m.data[i] + (T(1) - b1) * g;
    v.data[i] = b2 * v.data[i] + (T(1) - b2) * g * g;
    T mhat = m.data[i] / c1;
    T vhat = v.data[i] / c2;
    param.data[i] -= alpha * mhat / (std::sqrt(vhat) + eps);
  }
}
}  // namespace detail

// Bias-corrected Adam: m = b1*m + (1-b1)g, v = b2*v + (1-b2)g^2,
// theta -= alpha * (m/(1-b1^t)) / (sqrt(v/(1-b2^t)) + eps).
// grads must be aligned with m.layers; layers outside the trainable set are
// skipped even when a gradient is present.
template <typename T>
void adam_step(ModelT<T>& model, const std::vector<ParamGradsT<T>>& grads, AdamStateT<T>& state) {
  state.t += 1;
  double bc1 = 1.0 - std::pow(state.cfg.beta1, static_cast<double>(state.t));
  double bc2 = 1.0 - std::pow(state.cfg.beta2, static_cast<double>(state.t));
  for (size_t i = 0; i < model.layers.size(); ++i) {
    auto& layer = model.layers[i];
    if (!layer.tensors.present || !model.trainable.count(layer.spec.name)) continue;
    if (i >= grads.size() || !grads[i].present) continue;
    auto it = state.moments.find(layer.spec.name);
    if (it == state.moments.end()) continue;
    detail::adam_update(layer.tensors.weights, grads[i].dweights, it->second.mw, it->second.vw,
                        state.cfg, bc1, bc2);
    detail::adam_update(layer.tensors.bias, grads[i].dbias, it->second.mb, it->second.vb,
                        state.cfg, bc1, bc2);
  }
}

struct TrainConfig {
  int64_t batch_size = 32;
  int64_t epochs = 1;
  std::optional<int64_t> steps_per_epoch;  // default ceil(n / batch_size)
  uint64_t seed = 0;
  bool shuffle = true;
  AdamConfig adam;
  // When everything before the earliest trainable layer is frozen, evaluate
  // that prefix once per fit instead of every step. Bit-identical results;
  // toggle exists so tests can prove it.
  bool cache_frozen_prefix = true;
};

struct EpochStats {
  double loss = 0, accuracy = 0;
  bool has_val = false;
  double val_loss = 0, val_accuracy = 0;
};
using History = std::vector<EpochStats>;

// Epoch/batch loop: each epoch reshuffles an index permutation (seeded) and
// steps wrap around it when steps*batch exceeds the dataset. Runs exactly
// epochs * steps_per_epoch optimizer steps; frozen tensors are bit-identical
// afterwards. History holds one entry per epoch.
History fit(Model& model, const TrainData& train, const TrainData* val, const TrainConfig& cfg);

struct EvalResult {
  double loss = 0;
  double accuracy = 0;
  std::vector<int> predicted;  // argmax class per sample, ties to first index
  Tensor probabilities;        // [n, classes]
};

EvalResult evaluate(const Model& model, const TrainData& data);

// CSV columns: epoch,loss,acc,val_loss,val_acc (val cells empty when absent).
void write_history_csv(const History& history, const std::filesystem::path& path);

// Rows of x selected by ids (with repetition allowed).
Tensor gather_rows(const Tensor& x, const std::vector<int64_t>& ids);

}  // namespace traffic
