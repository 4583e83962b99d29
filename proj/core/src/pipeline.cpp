#include "traffic/pipeline.hpp"

#include <numeric>

#include "traffic/error.hpp"
#include "traffic/weights_io.hpp"

namespace traffic {

namespace {

Model assemble(const TransferCvSpec& spec, uint64_t seed, ImportReport* report) {
  Model m = build_model(spec.arch, spec.build, Rng(seed));
  if (spec.init_weights) {
    ImportReport r = import_by_name(m, *spec.init_weights);
    if (report) *report = r;
  }
  if (spec.train_last_k >= 0) set_trainable_last_k(m, spec.train_last_k);
  return m;
}

// Suffix view starting at layer `e`: shares the tensors by value copy.
Model suffix_of(const Model& m, size_t e) {
  Model s;
  s.name = m.name + "#suffix";
  s.input_shape = e == 0 ? m.input_shape : m.layers[e - 1].output_shape;
  for (size_t i = e; i < m.layers.size(); ++i) {
    s.layers.push_back(m.layers[i]);
    if (m.trainable.count(m.layers[i].spec.name)) s.trainable.insert(m.layers[i].spec.name);
  }
  return s;
}

}  // namespace

TransferCvOutcome run_transfer_cv(const DatasetIndex& index, const TransferCvSpec& spec) {
  if (spec.plan.kind != SplitPlan::Kind::KFold)
    throw ConfigError("run_transfer_cv needs a kfold split plan");
  if (index.samples.empty()) throw DataError("run_transfer_cv: empty dataset");

  TransferCvOutcome outcome;
  Model base = assemble(spec, spec.train_cfg.seed, &outcome.import_report);

  size_t earliest = base.layers.size();
  for (size_t i = 0; i < base.layers.size(); ++i)
    if (base.trainable.count(base.layers[i].spec.name)) {
      earliest = i;
      break;
    }

  int64_t n = static_cast<int64_t>(index.samples.size());
  std::vector<int64_t> all_ids(static_cast<size_t>(n));
  std::iota(all_ids.begin(), all_ids.end(), 0);

  // Frozen prefix + imported weights: boundary activations are fold-invariant,
  // so extract them once and cross-validate the suffix on cached features.
  bool hoist = earliest > 0 && earliest < base.layers.size() && spec.init_weights.has_value();
  if (hoist) {
    const std::string boundary = base.layers[earliest - 1].spec.name;
    Model extractor = truncate_at(base, boundary);
    Shape feat_shape = base.layers[earliest - 1].output_shape;
    int64_t stride = shape_numel(feat_shape);
    Shape batched{n};
    batched.insert(batched.end(), feat_shape.begin(), feat_shape.end());
    Tensor features(batched);
    Tensor onehot({n, kClassCount});
    constexpr int64_t kChunk = 64;
    for (int64_t at = 0; at < n; at += kChunk) {
      int64_t take = std::min(kChunk, n - at);
      std::vector<int64_t> ids(all_ids.begin() + at, all_ids.begin() + at + take);
      TrainData batch = materialize(index, ids, spec.pre, base.input_shape[0], base.input_shape[1]);
      Tensor out = predict(extractor, batch.x);
      std::copy(out.data.begin(), out.data.end(), features.data.begin() + at * stride);
      std::copy(batch.y.data.begin(), batch.y.data.end(), onehot.data.begin() + at * kClassCount);
    }

    MaterializeFn cached = [&](const std::vector<int64_t>& ids) {
      TrainData d;
      d.x = gather_rows(features, ids);
      d.y = gather_rows(onehot, ids);
      d.sample_ids = ids;
      return d;
    };
    ModelBuilder suffix_builder = [&](uint64_t fold_seed) {
      Model fold_model = assemble(spec, fold_seed, nullptr);
      return suffix_of(fold_model, earliest);
    };
    outcome.cv = cross_validate(suffix_builder, cached, index, spec.plan, spec.train_cfg);

    // final refit on the full index, stitched back onto the frozen prefix
    Model final_suffix = suffix_of(base, earliest);
    TrainConfig cfg = spec.train_cfg;
    outcome.final_history = fit(final_suffix, cached(all_ids), nullptr, cfg);
    Model stitched = base;
    for (size_t i = earliest; i < stitched.layers.size(); ++i)
      stitched.layers[i] = final_suffix.layers[i - earliest];
    outcome.final_model = std::move(stitched);
    return outcome;
  }

  MaterializeFn images = [&](const std::vector<int64_t>& ids) {
    return materialize(index, ids, spec.pre, base.input_shape[0], base.input_shape[1]);
  };
  ModelBuilder builder = [&](uint64_t fold_seed) { return assemble(spec, fold_seed, nullptr); };
  outcome.cv = cross_validate(builder, images, index, spec.plan, spec.train_cfg);

  Model final_model = base;
  TrainConfig cfg = spec.train_cfg;
  outcome.final_history = fit(final_model, images(all_ids), nullptr, cfg);
  outcome.final_model = std::move(final_model);
  return outcome;
}

}  // namespace traffic
