#pragma once

#include <set>
#include <string>
#include <utility>
#include <vector>

#include "traffic/layers.hpp"
#include "traffic/rng.hpp"
#include "traffic/tensor.hpp"

namespace traffic {

enum class CatalogId { CNN5, CNN6, CNN7, VGG19, VGG19Trunc, VGGSmall };

inline const char* catalog_name(CatalogId id) {
  switch (id) {
    case CatalogId::CNN5: return "CNN5";
    case CatalogId::CNN6: return "CNN6";
    case CatalogId::CNN7: return "CNN7";
    case CatalogId::VGG19: return "VGG19";
    case CatalogId::VGG19Trunc: return "VGG19_TRUNC";
    case CatalogId::VGGSmall: return "VGG_S";
  }
  return "?";
}

inline CatalogId parse_catalog(const std::string& s) {
  if (s == "CNN5") return CatalogId::CNN5;
  if (s == "CNN6") return CatalogId::CNN6;
  if (s == "CNN7") return CatalogId::CNN7;
  if (s == "VGG19") return CatalogId::VGG19;
  if (s == "VGG19_TRUNC") return CatalogId::VGG19Trunc;
  if (s == "VGG_S") return CatalogId::VGGSmall;
  throw ConfigError("unknown architecture id '" + s + "'");
}

struct BuildParams {
  int64_t num_dense_nodes = 409;            // hidden dense width, CNN5/6/7 only
  int64_t class_count = 3;
  Activation cnn_activation = Activation::Relu;  // conv + hidden dense, CNN5/6/7 only
};

template <typename T>
struct ModelLayerT {
  LayerSpec spec;
  LayerTensorsT<T> tensors;
  Shape output_shape;  // per-sample shape after this layer
};

template <typename T>
struct ModelT {
  std::string name;
  Shape input_shape;  // per-sample [h,w,c]
  std::vector<ModelLayerT<T>> layers;
  std::set<std::string> trainable;

  const ModelLayerT<T>* find(const std::string& layer_name) const {
    for (const auto& l : layers)
      if (l.spec.name == layer_name) return &l;
    return nullptr;
  }
  ModelLayerT<T>* find(const std::string& layer_name) {
    for (auto& l : layers)
      if (l.spec.name == layer_name) return &l;
    return nullptr;
  }
  std::vector<std::string> parameterized_names() const {
    std::vector<std::string> out;
    for (const auto& l : layers)
      if (l.spec.parameterized()) out.push_back(l.spec.name);
    return out;
  }
};

using Model = ModelT<float>;

namespace detail {

// Catalog descriptions. CNN-k: k 3x3 same-padding convs with filter
// progression 32,64,128,256,256,256,256 (first k), each followed by a 2x2
// pool, then flatten, a hidden dense, and a 3-way softmax head. VGG19:
// blocks (2x64, 2x128, 4x256, 4x512, 4x512) + fc1/fc2/predictions. The
// truncated variant keeps blocks 1-5 and adds a 3-way head on the flatten;
// VGG_S is the same topology scaled to 64x64 inputs with widths
// (8,16,32,64,64).
inline std::pair<Shape, std::vector<LayerSpec>> catalog_layers(CatalogId id, const BuildParams& bp) {
  if (bp.num_dense_nodes < 1) throw ConfigError("num_dense_nodes must be >= 1");
  if (bp.class_count < 2) throw ConfigError("class_count must be >= 2");
  std::vector<LayerSpec> specs;
  auto vgg_blocks = [&specs](const std::vector<std::pair<int, int64_t>>& blocks) {
    for (size_t b = 0; b < blocks.size(); ++b) {
      auto [convs, width] = blocks[b];
      std::string bn = "block" + std::to_string(b + 1);
      for (int j = 0; j < convs; ++j)
        specs.push_back(LayerSpec::conv2d(bn + "_conv" + std::to_string(j + 1), width, 3, 3,
                                          Padding::Same, Activation::Relu));
      specs.push_back(LayerSpec::maxpool(bn + "_pool", 2, 2));
    }
  };
  switch (id) {
    case CatalogId::CNN5:
    case CatalogId::CNN6:
    case CatalogId::CNN7: {
      int k = id == CatalogId::CNN5 ? 5 : id == CatalogId::CNN6 ? 6 : 7;
      const int64_t widths[7] = {32, 64, 128, 256, 256, 256, 256};
      for (int i = 0; i < k; ++i) {
        specs.push_back(LayerSpec::conv2d("conv" + std::to_string(i + 1), widths[i], 3, 3,
                                          Padding::Same, bp.cnn_activation));
        specs.push_back(LayerSpec::maxpool("pool" + std::to_string(i + 1), 2, 2));
      }
      specs.push_back(LayerSpec::flatten("flatten"));
      specs.push_back(LayerSpec::dense("dense", bp.num_dense_nodes, bp.cnn_activation));
      specs.push_back(LayerSpec::dense("predictions", bp.class_count, Activation::Softmax));
      return {{224, 224, 3}, std::move(specs)};
    }
    case CatalogId::VGG19: {
      vgg_blocks({{2, 64}, {2, 128}, {4, 256}, {4, 512}, {4, 512}});
      specs.push_back(LayerSpec::flatten("flatten"));
      specs.push_back(LayerSpec::dense("fc1", 4096, Activation::Relu));
      specs.push_back(LayerSpec::dense("fc2", 4096, Activation::Relu));
      specs.push_back(LayerSpec::dense("predictions", 1000, Activation::Softmax));
      return {{224, 224, 3}, std::move(specs)};
    }
    case CatalogId::VGG19Trunc: {
      vgg_blocks({{2, 64}, {2, 128}, {4, 256}, {4, 512}, {4, 512}});
      specs.push_back(LayerSpec::flatten("flatten"));
      specs.push_back(LayerSpec::dense("predictions_traffic", bp.class_count, Activation::Softmax));
      return {{224, 224, 3}, std::move(specs)};
    }
    case CatalogId::VGGSmall: {
      vgg_blocks({{2, 8}, {2, 16}, {4, 32}, {4, 64}, {4, 64}});
      specs.push_back(LayerSpec::flatten("flatten"));
      specs.push_back(LayerSpec::dense("predictions_traffic", bp.class_count, Activation::Softmax));
      return {{64, 64, 3}, std::move(specs)};
    }
  }
  throw ConfigError("unknown catalog id");
}

inline Shape layer_output_shape(const LayerSpec& spec, const Shape& in) {
  switch (spec.kind) {
    case LayerKind::Conv2D: {
      if (in.size() != 3) throw ShapeError("conv2d '" + spec.name + "' needs [h,w,c] input");
      int64_t h = in[0], w = in[1];
      if (spec.padding == Padding::Valid) {
        h = h - spec.kernel_h + 1;
        w = w - spec.kernel_w + 1;
        if (h < 1 || w < 1) throw ShapeError("conv2d '" + spec.name + "' shrinks below 1x1");
      }
      return {h, w, spec.filters};
    }
    case LayerKind::MaxPool2D: {
      if (in.size() != 3) throw ShapeError("maxpool '" + spec.name + "' needs [h,w,c] input");
      int64_t h = in[0] / spec.pool_h, w = in[1] / spec.pool_w;
      if (h < 1 || w < 1) throw ShapeError("maxpool '" + spec.name + "' pools below 1x1");
      return {h, w, in[2]};
    }
    case LayerKind::Flatten:
      return {shape_numel(in)};
    case LayerKind::Dense:
      if (in.size() != 1) throw ShapeError("dense '" + spec.name + "' needs flat input");
      return {spec.units};
  }
  throw ShapeError("unknown layer kind");
}

inline int64_t layer_param_count(const LayerSpec& spec, const Shape& in) {
  switch (spec.kind) {
    case LayerKind::Conv2D:
      return spec.kernel_h * spec.kernel_w * in[2] * spec.filters + spec.filters;
    case LayerKind::Dense:
      return in[0] * spec.units + spec.units;
    default:
      return 0;
  }
}

inline void validate_layer_sequence(const std::vector<LayerSpec>& specs) {
  std::set<std::string> names;
  for (size_t i = 0; i < specs.size(); ++i) {
    const auto& s = specs[i];
    if (s.name.empty() || !names.insert(s.name).second)
      throw ShapeError("layer names must be unique and non-empty; offender: '" + s.name + "'");
    bool is_last = i + 1 == specs.size();
    if (s.activation == Activation::Softmax && !(is_last && s.kind == LayerKind::Dense))
      throw ShapeError("softmax is only permitted on the final dense layer ('" + s.name + "')");
  }
}

}  // namespace detail

struct LayerSummary {
  std::string name;
  std::string kind;
  Shape output_shape;
  int64_t params = 0;
};

// Shape/parameter table computed from the catalog description alone, no
// weight allocation.
inline std::vector<LayerSummary> catalog_summary(CatalogId id, const BuildParams& bp = {}) {
  auto [input, specs] = detail::catalog_layers(id, bp);
  detail::validate_layer_sequence(specs);
  std::vector<LayerSummary> out;
  Shape cur = input;
  for (const auto& s : specs) {
    LayerSummary row;
    row.name = s.name;
    row.kind = layer_kind_name(s.kind);
    row.params = detail::layer_param_count(s, cur);
    cur = detail::layer_output_shape(s, cur);
    row.output_shape = cur;
    out.push_back(std::move(row));
  }
  return out;
}

// Assembles a catalog model with validated shapes and seeded initialization:
// He-normal (std = sqrt(2/fan_in)) for relu layers, Glorot-normal
// (std = sqrt(2/(fan_in+fan_out))) otherwise, zero biases. Layer i draws
// from rng.split(i), so the result is independent of construction order.
// Every parameterized layer starts trainable.
template <typename T = float>
ModelT<T> build_model(CatalogId id, const BuildParams& bp, Rng rng) {
  auto [input, specs] = detail::catalog_layers(id, bp);
  detail::validate_layer_sequence(specs);
  ModelT<T> m;
  m.name = catalog_name(id);
  m.input_shape = input;
  Shape cur = input;
  for (size_t i = 0; i < specs.size(); ++i) {
    const LayerSpec& s = specs[i];
    ModelLayerT<T> layer;
    layer.spec = s;
    if (s.parameterized()) {
      Rng lrng = rng.split(i);
      int64_t fan_in, fan_out;
      Shape wdims, bdims;
      if (s.kind == LayerKind::Conv2D) {
        fan_in = s.kernel_h * s.kernel_w * cur[2];
        fan_out = s.kernel_h * s.kernel_w * s.filters;
        wdims = {s.kernel_h, s.kernel_w, cur[2], s.filters};
        bdims = {s.filters};
      } else {
        fan_in = cur[0];
        fan_out = s.units;
        wdims = {cur[0], s.units};
        bdims = {s.units};
      }
      double std = s.activation == Activation::Relu
                       ? std::sqrt(2.0 / static_cast<double>(fan_in))
                       : std::sqrt(2.0 / static_cast<double>(fan_in + fan_out));
      layer.tensors.weights = rng_normal<T>(lrng, wdims, 0.0, std);
      layer.tensors.bias = TensorT<T>(bdims);
      layer.tensors.present = true;
      m.trainable.insert(s.name);
    }
    cur = detail::layer_output_shape(s, cur);
    layer.output_shape = cur;
    m.layers.push_back(std::move(layer));
  }
  return m;
}

struct ParamCounts {
  int64_t total = 0;
  int64_t trainable = 0;
  std::vector<std::pair<std::string, int64_t>> per_layer;
};

template <typename T>
ParamCounts count_params(const ModelT<T>& m) {
  ParamCounts c;
  for (const auto& l : m.layers) {
    int64_t p = l.tensors.param_count();
    c.per_layer.emplace_back(l.spec.name, p);
    c.total += p;
    if (m.trainable.count(l.spec.name)) c.trainable += p;
  }
  return c;
}

// Marks exactly the last k parameterized layers trainable.
template <typename T>
void set_trainable_last_k(ModelT<T>& m, int64_t k) {
  auto names = m.parameterized_names();
  if (k < 0 || k > static_cast<int64_t>(names.size()))
    throw ConfigError("train_last_k: k=" + std::to_string(k) + " but model has " +
                      std::to_string(names.size()) + " parameterized layers");
  m.trainable.clear();
  for (size_t i = names.size() - static_cast<size_t>(k); i < names.size(); ++i)
    m.trainable.insert(names[i]);
}

template <typename T>
void set_trainable(ModelT<T>& m, const std::set<std::string>& names) {
  for (const auto& n : names) {
    const auto* l = m.find(n);
    if (!l) throw ConfigError("set_trainable: unknown layer '" + n + "'");
    if (!l->spec.parameterized())
      throw ConfigError("set_trainable: layer '" + n + "' has no parameters");
  }
  m.trainable = names;
}

// Feature extractor ending at the named layer (inclusive).
template <typename T>
ModelT<T> truncate_at(const ModelT<T>& m, const std::string& layer_name) {
  ModelT<T> out;
  out.name = m.name + ":" + layer_name;
  out.input_shape = m.input_shape;
  bool found = false;
  for (const auto& l : m.layers) {
    out.layers.push_back(l);
    if (m.trainable.count(l.spec.name)) out.trainable.insert(l.spec.name);
    if (l.spec.name == layer_name) {
      found = true;
      break;
    }
  }
  if (!found) throw ConfigError("truncate_at: unknown layer '" + layer_name + "'");
  return out;
}

// Forward through layers [begin, end); caches (when given) must have
// model-length entries.
template <typename T>
TensorT<T> forward_range(const ModelT<T>& m, TensorT<T> x, size_t begin, size_t end,
                         std::vector<LayerCacheT<T>>* caches = nullptr) {
  for (size_t i = begin; i < end; ++i)
    x = forward_layer(m.layers[i].spec, m.layers[i].tensors, x,
                      caches ? &(*caches)[i] : nullptr);
  return x;
}

template <typename T>
void check_batch_shape(const ModelT<T>& m, const TensorT<T>& batch) {
  bool ok = batch.rank() == static_cast<int64_t>(m.input_shape.size()) + 1;
  for (size_t i = 0; ok && i < m.input_shape.size(); ++i)
    ok = batch.dims[i + 1] == m.input_shape[i];
  if (!ok)
    throw ShapeError("batch shape " + shape_str(batch.dims) + " does not match model input " +
                     shape_str(m.input_shape));
}

template <typename T>
TensorT<T> predict(const ModelT<T>& m, const TensorT<T>& batch) {
  check_batch_shape(m, batch);
  return forward_range(m, batch, 0, m.layers.size());
}

// Backward from the last layer down to (and including) layer `stop`.
// grads[i] is filled for parameterized layers; when `skip_frozen_param_grads`
// is set, weight gradients are only produced for trainable layers.
// `preactivated` marks `upstream` as already differentiated through the last
// layer's activation (the fused softmax+cross-entropy path).
template <typename T>
TensorT<T> backward_range(const ModelT<T>& m, TensorT<T> upstream,
                          const std::vector<LayerCacheT<T>>& caches, size_t stop,
                          std::vector<ParamGradsT<T>>& grads, bool preactivated,
                          bool skip_frozen_param_grads = true, bool need_input_grad = false) {
  grads.assign(m.layers.size(), ParamGradsT<T>{});
  for (size_t i = m.layers.size(); i-- > stop;) {
    const auto& layer = m.layers[i];
    bool want_grads = layer.spec.parameterized() &&
                      (!skip_frozen_param_grads || m.trainable.count(layer.spec.name) > 0);
    bool need_dinput = i > stop || need_input_grad;
    upstream = backward_layer(layer.spec, layer.tensors, upstream, caches[i],
                              want_grads ? &grads[i] : nullptr, need_dinput,
                              preactivated && i + 1 == m.layers.size());
  }
  return upstream;
}

template <typename T>
std::vector<LayerSummary> model_summary(const ModelT<T>& m) {
  std::vector<LayerSummary> out;
  for (const auto& l : m.layers)
    out.push_back({l.spec.name, layer_kind_name(l.spec.kind), l.output_shape,
                   l.tensors.param_count()});
  return out;
}

}  // namespace traffic
