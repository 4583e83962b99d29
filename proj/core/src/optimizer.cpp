#include "traffic/optimizer.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "traffic/error.hpp"
#include "traffic/rng.hpp"

namespace traffic {

namespace {

constexpr int64_t kEvalChunk = 128;

int argmax_row(const float* row, int64_t k) {
  int best = 0;
  for (int64_t j = 1; j < k; ++j)
    if (row[j] > row[best]) best = static_cast<int>(j);
  return best;
}

Shape batched(const Shape& per_sample, int64_t n) {
  Shape s{n};
  s.insert(s.end(), per_sample.begin(), per_sample.end());
  return s;
}

// Forward rows [0,n) through layers [0,end) in fixed-size chunks. Chunking
// cannot change the bits: every layer treats batch rows independently.
Tensor forward_features(const Model& m, const Tensor& x, size_t end_layer) {
  int64_t n = x.dims[0];
  Shape out_shape = end_layer == 0 ? Shape(x.dims.begin() + 1, x.dims.end())
                                   : m.layers[end_layer - 1].output_shape;
  Tensor out(batched(out_shape, n));
  int64_t stride = out.numel() / n;
  std::vector<int64_t> ids;
  for (int64_t at = 0; at < n; at += kEvalChunk) {
    int64_t take = std::min(kEvalChunk, n - at);
    ids.resize(static_cast<size_t>(take));
    std::iota(ids.begin(), ids.end(), at);
    Tensor chunk = forward_range(m, gather_rows(x, ids), 0, end_layer);
    std::copy(chunk.data.begin(), chunk.data.end(), out.data.begin() + at * stride);
  }
  return out;
}

struct BatchEval {
  double loss_sum = 0;  // per-sample cross-entropy, summed
  int64_t correct = 0;
};

BatchEval score_batch(const Tensor& probs, const Tensor& y) {
  BatchEval ev;
  int64_t n = probs.dims[0], k = probs.dims[1];
  for (int64_t r = 0; r < n; ++r) {
    const float* p = probs.data.data() + r * k;
    const float* t = y.data.data() + r * k;
    for (int64_t j = 0; j < k; ++j)
      if (t[j] == 1.0f) ev.loss_sum -= std::log(static_cast<double>(p[j]) + kLogEps);
    if (argmax_row(p, k) == argmax_row(t, k)) ev.correct++;
  }
  return ev;
}

struct EvalCore {
  double loss = 0, accuracy = 0;
};

// Evaluation of (x,y) through layers [start,end); x is already the activation
// feeding layer `start`.
EvalCore eval_from(const Model& m, size_t start, const Tensor& x, const Tensor& y) {
  int64_t n = x.dims[0];
  BatchEval total;
  std::vector<int64_t> ids;
  for (int64_t at = 0; at < n; at += kEvalChunk) {
    int64_t take = std::min(kEvalChunk, n - at);
    ids.resize(static_cast<size_t>(take));
    std::iota(ids.begin(), ids.end(), at);
    Tensor probs = forward_range(m, gather_rows(x, ids), start, m.layers.size());
    BatchEval ev = score_batch(probs, gather_rows(y, ids));
    total.loss_sum += ev.loss_sum;
    total.correct += ev.correct;
  }
  return {total.loss_sum / static_cast<double>(n),
          static_cast<double>(total.correct) / static_cast<double>(n)};
}

}  // namespace

Tensor gather_rows(const Tensor& x, const std::vector<int64_t>& ids) {
  if (x.rank() < 1) throw ShapeError("gather_rows needs a batch dim");
  int64_t stride = x.numel() / x.dims[0];
  Shape per_sample(x.dims.begin() + 1, x.dims.end());
  Tensor out(batched(per_sample, static_cast<int64_t>(ids.size())));
  for (size_t r = 0; r < ids.size(); ++r)
    std::copy(x.data.begin() + ids[r] * stride, x.data.begin() + (ids[r] + 1) * stride,
              out.data.begin() + static_cast<int64_t>(r) * stride);
  return out;
}

History fit(Model& model, const TrainData& train, const TrainData* val, const TrainConfig& cfg) {
  int64_t n = train.x.rank() >= 1 ? train.x.dims[0] : 0;
  if (n < 1) throw DataError("fit: empty training dataset");
  if (cfg.batch_size < 1 || cfg.epochs < 1) throw ConfigError("fit: batch_size and epochs must be >= 1");
  int64_t steps = cfg.steps_per_epoch.value_or((n + cfg.batch_size - 1) / cfg.batch_size);
  if (steps < 1) throw ConfigError("fit: steps_per_epoch must be >= 1");

  // Earliest trainable layer; backpropagation never needs to go below it.
  size_t earliest = model.layers.size();
  for (size_t i = 0; i < model.layers.size(); ++i)
    if (model.trainable.count(model.layers[i].spec.name)) {
      earliest = i;
      break;
    }

  bool use_prefix_cache = cfg.cache_frozen_prefix && earliest > 0 && earliest <= model.layers.size();
  size_t start_layer = use_prefix_cache ? earliest : 0;
  Tensor train_x = use_prefix_cache ? forward_features(model, train.x, earliest) : train.x;
  Tensor val_x;
  if (val) val_x = use_prefix_cache ? forward_features(model, val->x, earliest) : val->x;

  bool fused_softmax = !model.layers.empty() &&
                       model.layers.back().spec.kind == LayerKind::Dense &&
                       model.layers.back().spec.activation == Activation::Softmax;

  AdamState state = AdamState::init(model, cfg.adam);
  Rng shuffle_root(cfg.seed, 0xF17u);
  std::vector<int64_t> perm(static_cast<size_t>(n));
  History history;

  for (int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(perm.begin(), perm.end(), 0);
    if (cfg.shuffle) {
      Rng erng = shuffle_root.split(static_cast<uint64_t>(epoch));
      shuffle(perm, erng);
    }
    double loss_sum = 0;
    int64_t correct = 0, seen = 0;
    std::vector<int64_t> ids(static_cast<size_t>(cfg.batch_size));
    std::vector<LayerCacheT<float>> caches(model.layers.size());
    std::vector<ParamGradsT<float>> grads;
    for (int64_t step = 0; step < steps; ++step) {
      for (int64_t j = 0; j < cfg.batch_size; ++j)
        ids[static_cast<size_t>(j)] = perm[static_cast<size_t>((step * cfg.batch_size + j) % n)];
      Tensor xb = gather_rows(train_x, ids);
      Tensor yb = gather_rows(train.y, ids);
      Tensor probs = forward_range(model, std::move(xb), start_layer, model.layers.size(), &caches);
      BatchEval ev = score_batch(probs, yb);
      loss_sum += ev.loss_sum / static_cast<double>(cfg.batch_size);
      correct += ev.correct;
      seen += cfg.batch_size;
      Tensor upstream = fused_softmax ? softmax_xent_backward(probs, yb)
                                      : cross_entropy_backward(probs, yb);
      backward_range(model, std::move(upstream), caches, earliest, grads, fused_softmax);
      adam_step(model, grads, state);
    }
    EpochStats stats;
    stats.loss = loss_sum / static_cast<double>(steps);
    stats.accuracy = static_cast<double>(correct) / static_cast<double>(seen);
    if (val) {
      EvalCore v = eval_from(model, start_layer, val_x, val->y);
      stats.has_val = true;
      stats.val_loss = v.loss;
      stats.val_accuracy = v.accuracy;
    }
    history.push_back(stats);
  }
  return history;
}

EvalResult evaluate(const Model& model, const TrainData& data) {
  int64_t n = data.x.rank() >= 1 ? data.x.dims[0] : 0;
  if (n < 1) throw DataError("evaluate: empty dataset");
  EvalResult result;
  int64_t k = data.y.dims[1];
  result.probabilities = Tensor({n, k});
  result.predicted.resize(static_cast<size_t>(n));
  BatchEval total;
  std::vector<int64_t> ids;
  for (int64_t at = 0; at < n; at += kEvalChunk) {
    int64_t take = std::min(kEvalChunk, n - at);
    ids.resize(static_cast<size_t>(take));
    std::iota(ids.begin(), ids.end(), at);
    Tensor probs = forward_range(model, gather_rows(data.x, ids), 0, model.layers.size());
    Tensor yb = gather_rows(data.y, ids);
    BatchEval ev = score_batch(probs, yb);
    total.loss_sum += ev.loss_sum;
    total.correct += ev.correct;
    std::copy(probs.data.begin(), probs.data.end(), result.probabilities.data.begin() + at * k);
    for (int64_t r = 0; r < take; ++r)
      result.predicted[static_cast<size_t>(at + r)] =
          argmax_row(probs.data.data() + r * k, k);
  }
  result.loss = total.loss_sum / static_cast<double>(n);
  result.accuracy = static_cast<double>(total.correct) / static_cast<double>(n);
  return result;
}

void write_history_csv(const History& history, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << "epoch,loss,acc,val_loss,val_acc\n";
  char buf[160];
  for (size_t i = 0; i < history.size(); ++i) {
    const auto& e = history[i];
    if (e.has_val)
      std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g,%.9g,%.9g\n", i + 1, e.loss, e.accuracy,
                    e.val_loss, e.val_accuracy);
    else
      std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g,,\n", i + 1, e.loss, e.accuracy);
    out << buf;
  }
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace traffic
