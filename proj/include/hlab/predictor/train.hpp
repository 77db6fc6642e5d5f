// Copyright 2026 The hlab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "hlab/common/manifest.hpp"
#include "hlab/predictor/predictor.hpp"

namespace hlab::predictor {

/// Tracks the best validation loss; an epoch counts as better only when its
/// loss is strictly lower. Epochs are 1-based.
class EarlyStopping {
 public:
  explicit EarlyStopping(int patience);

  /// Records an epoch; returns true when it is the new best.
  bool observe(int epoch, double val_loss);
  /// True once `patience` epochs have passed without improvement.
  bool should_stop(int epoch) const { return best_epoch_ > 0 && epoch - best_epoch_ >= patience_; }
  int best_epoch() const { return best_epoch_; }
  double best_loss() const { return best_loss_; }

 private:
  int patience_;
  int best_epoch_ = 0;
  double best_loss_ = 0.0;
};

struct PredictorEpoch {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct PredictorHistory {
  std::vector<PredictorEpoch> epochs;
  int best_epoch = 0;
  int stopped_epoch = 0;
};

struct TrainedPredictor {
  PredictorModel model;
  PredictorHistory history;
};

using EpochCallback = std::function<void(const PredictorEpoch&)>;

/// Trains on split "train", selects by split "valid". The returned model
/// holds the best-validation parameters and is not frozen.
TrainedPredictor train_predictor(const Manifest& manifest, const PredictorConfig& cfg,
                                 std::uint64_t seed, const EpochCallback& on_epoch = {});

void write_history_csv(const std::filesystem::path& path, const PredictorHistory& history);

struct SetScore {
  std::string set_name;
  double spearman_r = 0.0;
  double rmse = 0.0;
  std::size_t count = 0;
};

/// Per-set rows in order of first appearance, then the unweighted MEAN row.
struct PredictorEvaluation {
  std::vector<SetScore> sets;
  SetScore mean;
};

/// Spearman and RMSE on the raw MOS scale (scores multiplied by 5).
PredictorEvaluation evaluate_predictor(const PredictorModel& model, const Manifest& manifest,
                                       const std::string& split = "test");

/// Columns: set_name, spearman_r, rmse.
void write_evaluation_csv(const std::filesystem::path& path, const PredictorEvaluation& eval);

}  // namespace hlab::predictor
