#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "traffic/dataset.hpp"
#include "traffic/model.hpp"
#include "traffic/optimizer.hpp"

namespace traffic {

// 3x3 counts; rows = true label (L,M,H), columns = predicted.
struct ConfusionMatrix {
  std::array<std::array<int64_t, 3>, 3> counts{};

  void add(CongestionLabel truth, CongestionLabel predicted) {
    counts[static_cast<size_t>(truth)][static_cast<size_t>(predicted)]++;
  }
  int64_t at(CongestionLabel t, CongestionLabel p) const {
    return counts[static_cast<size_t>(t)][static_cast<size_t>(p)];
  }
  int64_t row_total(CongestionLabel t) const {
    const auto& r = counts[static_cast<size_t>(t)];
    return r[0] + r[1] + r[2];
  }
  int64_t total() const;
  double accuracy() const;  // trace / total
  ConfusionMatrix& operator+=(const ConfusionMatrix& o);
};

ConfusionMatrix confusion(const std::vector<CongestionLabel>& truth,
                          const std::vector<CongestionLabel>& predicted);

struct PairwiseDiagnostics {
  CongestionLabel a, b;
  double sensitivity = 0;  // recall of a within {a,b} rows
  double specificity = 0;  // recall of b
  double accuracy = 0;
};

// Restricts to rows {a,b}. Predictions landing on the third class count as
// errors for their true row. An empty row is an undefined-metric error
// naming the class.
PairwiseDiagnostics pairwise_diagnostics(const ConfusionMatrix& cm, CongestionLabel a,
                                         CongestionLabel b);

// Symmetric confusion rate for a pair: off-diagonal mass within {a,b} rows.
double pair_confusion_rate(const ConfusionMatrix& cm, CongestionLabel a, CongestionLabel b);

struct CrossValResult {
  std::vector<double> fold_accuracy;
  double mean_accuracy = 0;
  double std_accuracy = 0;  // sample standard deviation over folds
  ConfusionMatrix pooled;   // frame-level, each sample tested exactly once
  // Pooled held-out predictions aligned with DatasetIndex sample order.
  std::vector<int> predicted;
  std::vector<std::array<double, 3>> probabilities;
};

using ModelBuilder = std::function<Model(uint64_t fold_seed)>;
using MaterializeFn = std::function<TrainData(const std::vector<int64_t>& sample_ids)>;

// K-fold cross-validation: per fold, a fresh model from the fold-derived
// seed mix64(seed ^ mix64(fold+1)), trained on the remaining folds and
// evaluated on the held-out one.
CrossValResult cross_validate(const ModelBuilder& builder, const MaterializeFn& materialize,
                              const DatasetIndex& index, const SplitPlan& plan,
                              const TrainConfig& train_cfg);

// Video-level confusion: argmax of the mean per-frame probabilities of each
// video, against the video's label.
ConfusionMatrix video_confusion(const DatasetIndex& index,
                                const std::vector<std::array<double, 3>>& probabilities,
                                std::vector<std::pair<std::string, CongestionLabel>>* out_pred = nullptr);

// ---- report emission -------------------------------------------------------

// Percentages render with 2 decimals ("97.12%").
std::string format_pct(double fraction);

struct DiagnosticsRow {
  std::string pair;                  // e.g. "Medium-Heavy"
  std::optional<int64_t> batches;    // optional configuration column
  double sensitivity = 0, specificity = 0, accuracy = 0;
};

struct SummaryRow {
  std::string model;
  std::string hyper_parameters;
  double train_acc = 0, val_acc = 0, test_acc = 0;
};

enum class ReportFormat { Csv, Markdown };

void emit_diagnostics(const std::vector<DiagnosticsRow>& rows, ReportFormat fmt,
                      const std::filesystem::path& path);
void emit_summary(const std::vector<SummaryRow>& rows, ReportFormat fmt,
                  const std::filesystem::path& path);
void write_confusion_csv(const ConfusionMatrix& cm, const std::filesystem::path& path);

// The three class pairs in report order: (L,M), (L,H), (M,H).
std::vector<std::pair<CongestionLabel, CongestionLabel>> diagnostic_pairs();
std::string pair_name(CongestionLabel a, CongestionLabel b);

}  // namespace traffic
