// Copyright 2026 The hlab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include <json.hpp>

#include "hlab/common/manifest.hpp"
#include "hlab/enhancer/model.hpp"
#include "hlab/nn/optim.hpp"
#include "hlab/predictor/predictor.hpp"

namespace hlab::enhancer {

/// kAsPrinted: mean over bins of |(|S_r| - |Ŝ_r|) + (|S_i| - |Ŝ_i|)|, where the
/// two differences may cancel. kSumOfAbs: mean of the two absolute
/// differences summed.
enum class SpecLossVariant { kAsPrinted, kSumOfAbs };

SpecLossVariant parse_spec_loss_variant(const std::string& name);
std::string to_string(SpecLossVariant v);

/// Spectral loss between [T, F, 2] clean and enhanced spectra.
nn::Tensor spec_loss(const nn::Tensor& clean, const nn::Tensor& enhanced, SpecLossVariant variant);

/// (1 - D(ŝ))^2 for a frozen predictor D; gradients reach ŝ only.
nn::Tensor sq_loss(const predictor::PredictorModel& predictor, const nn::Tensor& enhanced_wave);

/// alpha * l_spec + (1 - alpha) * l_sq. At alpha = 1 (0) the result equals
/// l_spec (l_sq) bitwise.
nn::Tensor joint_loss(double alpha, const nn::Tensor& l_spec, const nn::Tensor& l_sq);

struct TrainConfig {
  double alpha = 1.0;
  SpecLossVariant variant = SpecLossVariant::kAsPrinted;
  int epochs = 30;
  int batch_size = 4;
  double crop_seconds = 2.0;
  int max_valid_clips = 20;
  nn::LrSchedule lr{1e-3, 500, 0.98};
  EnhancerConfig model;

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

/// Per-clip loss values of one optimisation step, in accumulation order.
/// l_spec is NaN when the clip has no clean reference.
struct StepRecord {
  double l = 0.0;
  double l_spec = 0.0;
  double l_sq = 0.0;
};

struct EpochRecord {
  int epoch = 0;
  double l = 0.0;
  double l_spec = 0.0;
  double l_sq = 0.0;
  double val_predictor_score = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::vector<StepRecord> steps;
};

struct TrainedEnhancer {
  EnhancerModel model;
  TrainHistory history;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Trains on split "train" and scores split "valid" with the predictor after
/// every epoch. Throws UsageError for an unfrozen predictor and DataError
/// when alpha > 0 and a clean reference is missing.
TrainedEnhancer train_enhancer(const Manifest& manifest, const predictor::PredictorModel& predictor,
                               const TrainConfig& cfg, std::uint64_t seed,
                               const EpochCallback& on_epoch = {});

/// Columns: epoch, L, L_spec, L_SQ, val_predictor_score.
void write_history_csv(const std::filesystem::path& path, const TrainHistory& history);

}  // namespace hlab::enhancer
