#pragma once

#include <filesystem>
#include <optional>

#include "traffic/metrics.hpp"
#include "traffic/model.hpp"
#include "traffic/weights_io.hpp"

namespace traffic {

// One cross-validated transfer-learning experiment: build the architecture,
// import source weights by name, freeze per the policy, then k-fold
// cross-validate and refit a final model on the full index.
struct TransferCvSpec {
  CatalogId arch = CatalogId::VGGSmall;
  BuildParams build;
  std::optional<std::filesystem::path> init_weights;
  int64_t train_last_k = -1;  // -1 = every parameterized layer trainable
  PreprocessMode pre;
  SplitPlan plan;  // kfold
  TrainConfig train_cfg;
};

struct TransferCvOutcome {
  CrossValResult cv;
  Model final_model;        // trained on the full index with the same policy
  History final_history;
  ImportReport import_report;  // empty when no init_weights
};

// When the trainable set leaves a frozen prefix (the transfer case), the
// prefix is evaluated once for the whole index and folds train only the
// suffix on cached activations; results are bit-identical to training the
// full network because the frozen prefix never changes and every layer
// treats batch rows independently.
TransferCvOutcome run_transfer_cv(const DatasetIndex& index, const TransferCvSpec& spec);

}  // namespace traffic
