#include "traffic/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "traffic/error.hpp"

namespace traffic {

int64_t ConfusionMatrix::total() const {
  int64_t t = 0;
  for (const auto& row : counts)
    for (int64_t v : row) t += v;
  return t;
}

double ConfusionMatrix::accuracy() const {
  int64_t t = total();
  if (t == 0) return 0.0;
  int64_t diag = counts[0][0] + counts[1][1] + counts[2][2];
  return static_cast<double>(diag) / static_cast<double>(t);
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& o) {
  for (size_t i = 0; i < 3; ++i)
    for (size_t j = 0; j < 3; ++j) counts[i][j] += o.counts[i][j];
  return *this;
}

ConfusionMatrix confusion(const std::vector<CongestionLabel>& truth,
                          const std::vector<CongestionLabel>& predicted) {
  if (truth.size() != predicted.size())
    throw ShapeError("confusion: label vectors differ in length");
  ConfusionMatrix cm;
  for (size_t i = 0; i < truth.size(); ++i) cm.add(truth[i], predicted[i]);
  return cm;
}

PairwiseDiagnostics pairwise_diagnostics(const ConfusionMatrix& cm, CongestionLabel a,
                                         CongestionLabel b) {
  if (a == b) throw DataError("pairwise_diagnostics: classes must differ");
  int64_t row_a = cm.row_total(a), row_b = cm.row_total(b);
  if (row_a == 0)
    throw DataError(std::string("pairwise_diagnostics: no samples of class '") + label_name(a) + "'");
  if (row_b == 0)
    throw DataError(std::string("pairwise_diagnostics: no samples of class '") + label_name(b) + "'");
  PairwiseDiagnostics d;
  d.a = a;
  d.b = b;
  d.sensitivity = static_cast<double>(cm.at(a, a)) / static_cast<double>(row_a);
  d.specificity = static_cast<double>(cm.at(b, b)) / static_cast<double>(row_b);
  d.accuracy = static_cast<double>(cm.at(a, a) + cm.at(b, b)) / static_cast<double>(row_a + row_b);
  return d;
}

double pair_confusion_rate(const ConfusionMatrix& cm, CongestionLabel a, CongestionLabel b) {
  int64_t rows = cm.row_total(a) + cm.row_total(b);
  if (rows == 0) throw DataError("pair_confusion_rate: no samples in either class");
  int64_t wrong = cm.at(a, b) + cm.at(b, a);
  return static_cast<double>(wrong) / static_cast<double>(rows);
}

CrossValResult cross_validate(const ModelBuilder& builder, const MaterializeFn& materialize,
                              const DatasetIndex& index, const SplitPlan& plan,
                              const TrainConfig& train_cfg) {
  if (plan.kind != SplitPlan::Kind::KFold) throw ConfigError("cross_validate needs a kfold plan");
  auto folds = make_kfold(index, plan);
  CrossValResult result;
  result.predicted.assign(index.samples.size(), -1);
  result.probabilities.assign(index.samples.size(), {0, 0, 0});
  for (size_t f = 0; f < folds.size(); ++f) {
    std::vector<int64_t> train_ids;
    for (size_t g = 0; g < folds.size(); ++g)
      if (g != f) train_ids.insert(train_ids.end(), folds[g].begin(), folds[g].end());
    const std::vector<int64_t>& test_ids = folds[f];
    uint64_t fold_seed = mix64(train_cfg.seed ^ mix64(static_cast<uint64_t>(f) + 1));
    Model model = builder(fold_seed);
    TrainConfig cfg = train_cfg;
    cfg.seed = fold_seed;
    fit(model, materialize(train_ids), nullptr, cfg);
    EvalResult ev = evaluate(model, materialize(test_ids));
    result.fold_accuracy.push_back(ev.accuracy);
    for (size_t r = 0; r < test_ids.size(); ++r) {
      int64_t sid = test_ids[r];
      const FrameSample& s = index.samples[static_cast<size_t>(sid)];
      result.pooled.add(s.label, static_cast<CongestionLabel>(ev.predicted[r]));
      result.predicted[static_cast<size_t>(sid)] = ev.predicted[r];
      for (int64_t j = 0; j < 3; ++j)
        result.probabilities[static_cast<size_t>(sid)][static_cast<size_t>(j)] =
            ev.probabilities.at2(static_cast<int64_t>(r), j);
    }
  }
  double sum = 0;
  for (double a : result.fold_accuracy) sum += a;
  result.mean_accuracy = sum / static_cast<double>(result.fold_accuracy.size());
  if (result.fold_accuracy.size() > 1) {
    double ss = 0;
    for (double a : result.fold_accuracy) ss += (a - result.mean_accuracy) * (a - result.mean_accuracy);
    result.std_accuracy = std::sqrt(ss / static_cast<double>(result.fold_accuracy.size() - 1));
  }
  return result;
}

ConfusionMatrix video_confusion(const DatasetIndex& index,
                                const std::vector<std::array<double, 3>>& probabilities,
                                std::vector<std::pair<std::string, CongestionLabel>>* out_pred) {
  ConfusionMatrix cm;
  for (const auto& [vid, sample_ids] : index.videos) {
    std::array<double, 3> mean{0, 0, 0};
    for (int64_t sid : sample_ids)
      for (size_t j = 0; j < 3; ++j) mean[j] += probabilities[static_cast<size_t>(sid)][j];
    size_t best = 0;
    for (size_t j = 1; j < 3; ++j)
      if (mean[j] > mean[best]) best = j;
    CongestionLabel truth = index.samples[static_cast<size_t>(sample_ids[0])].label;
    cm.add(truth, static_cast<CongestionLabel>(best));
    if (out_pred) out_pred->emplace_back(vid, static_cast<CongestionLabel>(best));
  }
  return cm;
}

std::string format_pct(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f%%", fraction * 100.0);
  return buf;
}

std::vector<std::pair<CongestionLabel, CongestionLabel>> diagnostic_pairs() {
  return {{CongestionLabel::Low, CongestionLabel::Medium},
          {CongestionLabel::Low, CongestionLabel::Heavy},
          {CongestionLabel::Medium, CongestionLabel::Heavy}};
}

std::string pair_name(CongestionLabel a, CongestionLabel b) {
  auto cap = [](const char* s) {
    std::string t(s);
    t[0] = static_cast<char>(t[0] - 'a' + 'A');
    return t;
  };
  return cap(label_name(a)) + "-" + cap(label_name(b));
}

namespace {
std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  return out;
}
}  // namespace

void emit_diagnostics(const std::vector<DiagnosticsRow>& rows, ReportFormat fmt,
                      const std::filesystem::path& path) {
  auto out = open_out(path);
  bool batches = std::any_of(rows.begin(), rows.end(), [](const auto& r) { return r.batches.has_value(); });
  if (fmt == ReportFormat::Markdown) {
    out << (batches ? "| Pair-Labels | #batches | Sensitivity | Specificity | Accuracy |\n"
                      "| --- | --- | --- | --- | --- |\n"
                    : "| Pair-Labels | Sensitivity | Specificity | Accuracy |\n"
                      "| --- | --- | --- | --- |\n");
    for (const auto& r : rows) {
      out << "| " << r.pair << " | ";
      if (batches) out << (r.batches ? std::to_string(*r.batches) : std::string("-")) << " | ";
      out << format_pct(r.sensitivity) << " | " << format_pct(r.specificity) << " | "
          << format_pct(r.accuracy) << " |\n";
    }
  } else {
    out << (batches ? "pair,batches,sensitivity,specificity,accuracy\n"
                    : "pair,sensitivity,specificity,accuracy\n");
    char buf[160];
    for (const auto& r : rows) {
      out << r.pair << ",";
      if (batches) out << (r.batches ? std::to_string(*r.batches) : std::string()) << ",";
      std::snprintf(buf, sizeof buf, "%.6f,%.6f,%.6f\n", r.sensitivity, r.specificity, r.accuracy);
      out << buf;
    }
  }
  if (!out) throw IoError("write failed: " + path.string());
}

void emit_summary(const std::vector<SummaryRow>& rows, ReportFormat fmt,
                  const std::filesystem::path& path) {
  auto out = open_out(path);
  if (fmt == ReportFormat::Markdown) {
    out << "| Model | Hyper Parameters | Train | Validation | Test(CV) |\n"
        << "| --- | --- | --- | --- | --- |\n";
    for (const auto& r : rows)
      out << "| " << r.model << " | " << r.hyper_parameters << " | " << format_pct(r.train_acc)
          << " | " << format_pct(r.val_acc) << " | " << format_pct(r.test_acc) << " |\n";
  } else {
    out << "model,hyper_parameters,train,validation,test_cv\n";
    char buf[96];
    for (const auto& r : rows) {
      std::snprintf(buf, sizeof buf, "%.6f,%.6f,%.6f\n", r.train_acc, r.val_acc, r.test_acc);
      out << r.model << ",\"" << r.hyper_parameters << "\"," << buf;
    }
  }
  if (!out) throw IoError("write failed: " + path.string());
}

void write_confusion_csv(const ConfusionMatrix& cm, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "true\\pred,low,medium,heavy\n";
  const char* names[3] = {"low", "medium", "heavy"};
  for (size_t i = 0; i < 3; ++i)
    out << names[i] << "," << cm.counts[i][0] << "," << cm.counts[i][1] << "," << cm.counts[i][2]
        << "\n";
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace traffic
