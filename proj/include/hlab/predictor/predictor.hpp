// Copyright 2026 The hlab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <vector>

#include <json.hpp>

#include "hlab/dsp/stft.hpp"
#include "hlab/nn/checkpoint.hpp"
#include "hlab/nn/layers.hpp"
#include "hlab/nn/optim.hpp"

namespace hlab::predictor {

/// Raw MOS q in [1, 5] and its normalised form q / 5 in [0.2, 1].
struct MosLabel {
  double q = 1.0;
  double q_norm = 0.2;
};

double normalize_mos(double q);
MosLabel make_label(double q);

struct PredictorConfig {
  int n_mels = 40;
  int width = 64;
  int layers = 2;
  int heads = 2;
  int ffn = 128;
  int patience = 20;
  int max_epochs = 100;
  int batch_size = 8;
  nn::LrSchedule lr{1e-3, 500, 0.98};
  dsp::StftConfig stft;

  void validate() const;
};

void to_json(nlohmann::json& j, const PredictorConfig& c);
void from_json(const nlohmann::json& j, PredictorConfig& c);

/// log-mel -> per-band standardisation -> linear + sinusoidal positions ->
/// post-norm transformer layers -> learned-query attention pooling over
/// time -> dense -> sigmoid.
class PredictorModel {
 public:
  PredictorModel(const PredictorConfig& cfg, std::uint64_t seed);

  /// Unnormalised log-mel [T, n_mels] of a [L] signal (differentiable).
  nn::Tensor log_mel(const nn::Tensor& wave) const;
  /// Score in (0, 1) of shape [1] from unnormalised log-mel features.
  nn::Tensor score_features(const nn::Tensor& log_mel) const;
  /// Score in (0, 1) of shape [1]; gradients flow into `wave`.
  nn::Tensor score(const nn::Tensor& wave) const;
  double predict(const dsp::Waveform& wave) const;

  /// Per-band mean and standard deviation applied before the projection.
  void set_normalization(std::vector<double> mean, std::vector<double> std);
  const std::vector<double>& norm_mean() const { return mean_; }
  const std::vector<double>& norm_std() const { return std_; }

  /// Marks every parameter as not requiring grad; irreversible.
  void freeze();
  bool frozen() const { return frozen_; }

  const PredictorConfig& config() const { return cfg_; }
  nn::NamedParams parameters() const;

  nn::Checkpoint to_checkpoint() const;
  /// Loaded predictors are frozen.
  static PredictorModel from_checkpoint(const nn::Checkpoint& ckpt);

 private:
  PredictorConfig cfg_;
  nn::Tensor filterbank_t_;  // [F, n_mels]
  std::vector<double> mean_, std_;
  nn::Linear proj_;
  std::vector<nn::TransformerLayer> layers_;
  nn::Tensor pool_query_;  // [width, 1]
  nn::Linear head_;
  bool frozen_ = false;
};

/// (score - q_norm)^2.
nn::Tensor predictor_loss(const nn::Tensor& score, double q_norm);

}  // namespace hlab::predictor
