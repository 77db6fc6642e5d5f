// Copyright 2026 The hlab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "hlab/predictor/predictor.hpp"

#include <cmath>
#include <string>

#include "hlab/common/error.hpp"
#include "hlab/dsp/mel.hpp"
#include "hlab/nn/ops.hpp"
#include "hlab/nn/signal.hpp"

namespace hlab::predictor {

using nn::Tensor;

double normalize_mos(double q) {
  if (!(q >= 1.0 && q <= 5.0)) {
    throw DataError("mos: raw score " + std::to_string(q) + " outside [1, 5]");
  }
  return q / 5.0;
}

MosLabel make_label(double q) { return {q, normalize_mos(q)}; }

void PredictorConfig::validate() const {
  if (n_mels < 1 || width < 1 || layers < 0 || ffn < 1) {
    throw UsageError("predictor: sizes must be positive");
  }
  if (heads < 1 || width % heads != 0) throw UsageError("predictor: heads must divide width");
  if (patience < 1) throw UsageError("predictor: patience must be >= 1");
  if (max_epochs < 1 || batch_size < 1) throw UsageError("predictor: epochs and batch must be >= 1");
  lr.validate();
  stft.validate();
  if (n_mels > stft.num_bins()) throw UsageError("predictor: n_mels exceeds STFT bins");
}

void to_json(nlohmann::json& j, const PredictorConfig& c) {
  j = {{"n_mels", c.n_mels},
       {"width", c.width},
       {"layers", c.layers},
       {"heads", c.heads},
       {"ffn", c.ffn},
       {"patience", c.patience},
       {"max_epochs", c.max_epochs},
       {"batch_size", c.batch_size},
       {"peak_lr", c.lr.peak_lr},
       {"warmup_updates", c.lr.warmup_updates},
       {"decay_per_epoch", c.lr.decay_per_epoch},
       {"window_length", c.stft.window_length},
       {"hop", c.stft.hop}};
}

void from_json(const nlohmann::json& j, PredictorConfig& c) {
  c.n_mels = j.value("n_mels", c.n_mels);
  c.width = j.value("width", c.width);
  c.layers = j.value("layers", c.layers);
  c.heads = j.value("heads", c.heads);
  c.ffn = j.value("ffn", c.ffn);
  c.patience = j.value("patience", c.patience);
  c.max_epochs = j.value("max_epochs", c.max_epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.lr.peak_lr = j.value("peak_lr", c.lr.peak_lr);
  c.lr.warmup_updates = j.value("warmup_updates", c.lr.warmup_updates);
  c.lr.decay_per_epoch = j.value("decay_per_epoch", c.lr.decay_per_epoch);
  c.stft.window_length = j.value("window_length", c.stft.window_length);
  c.stft.hop = j.value("hop", c.stft.hop);
}

PredictorModel::PredictorModel(const PredictorConfig& cfg, std::uint64_t seed)
    : cfg_(cfg),
      mean_(cfg.n_mels, 0.0),
      std_(cfg.n_mels, 1.0) {
  cfg_.validate();
  const int bins = cfg_.stft.num_bins();
  const auto fb = dsp::mel_filterbank(cfg_.n_mels, bins, dsp::kDefaultSampleRate);
  std::vector<double> fbt(static_cast<std::size_t>(bins) * cfg_.n_mels);
  for (int m = 0; m < cfg_.n_mels; ++m) {
    for (int k = 0; k < bins; ++k) fbt[static_cast<std::size_t>(k) * cfg_.n_mels + m] = fb(m, k);
  }
  filterbank_t_ = Tensor::constant({bins, cfg_.n_mels}, std::move(fbt));

  Rng rng(seed);
  proj_ = nn::Linear(cfg_.n_mels, cfg_.width, rng);
  for (int i = 0; i < cfg_.layers; ++i) {
    layers_.emplace_back(cfg_.width, cfg_.heads, cfg_.ffn, false, rng);
  }
  pool_query_ = nn::xavier_parameter(cfg_.width, 1, rng);
  head_ = nn::Linear(cfg_.width, 1, rng);
}

Tensor PredictorModel::log_mel(const Tensor& wave) const {
  return nn::log_mel(nn::stft(wave, cfg_.stft), filterbank_t_, dsp::kLogMelEpsilon);
}

Tensor PredictorModel::score_features(const Tensor& feats) const {
  if (feats.rank() != 2 || feats.dim(1) != cfg_.n_mels) {
    throw ShapeError("predictor.features: expected [T, " + std::to_string(cfg_.n_mels) +
                     "], got " + nn::shape_str(feats.shape()));
  }
  const int t = feats.dim(0);
  std::vector<double> neg_mean(cfg_.n_mels), inv_std(feats.size());
  for (int m = 0; m < cfg_.n_mels; ++m) neg_mean[m] = -mean_[m];
  for (std::size_t i = 0; i < inv_std.size(); ++i) inv_std[i] = 1.0 / std_[i % cfg_.n_mels];
  Tensor x = nn::add_bias(feats, Tensor::constant({cfg_.n_mels}, std::move(neg_mean)));
  x = nn::mul(x, Tensor::constant(feats.shape(), std::move(inv_std)));

  Tensor h = nn::add(proj_(x), nn::positional_encoding(t, cfg_.width));
  h = nn::reshape(h, {1, t, cfg_.width});
  for (const auto& layer : layers_) h = layer(h);
  h = nn::reshape(h, {t, cfg_.width});

  // Learned-query pooling: softmax over time of h . u / sqrt(width).
  Tensor logits = nn::scale(nn::matmul(h, pool_query_), 1.0 / std::sqrt(cfg_.width));
  Tensor weights = nn::softmax_last(nn::reshape(logits, {1, t}));
  Tensor pooled = nn::matmul(weights, h);
  return nn::reshape(nn::sigmoid(head_(pooled)), {1});
}

Tensor PredictorModel::score(const Tensor& wave) const { return score_features(log_mel(wave)); }

double PredictorModel::predict(const dsp::Waveform& wave) const {
  wave.validate();
  nn::NoGradGuard guard;
  return score(Tensor::constant({static_cast<int>(wave.size())}, wave.samples)).item();
}

void PredictorModel::set_normalization(std::vector<double> mean, std::vector<double> std) {
  if (mean.size() != static_cast<std::size_t>(cfg_.n_mels) || std.size() != mean.size()) {
    throw ShapeError("predictor: normalisation needs " + std::to_string(cfg_.n_mels) + " bands");
  }
  for (double s : std) {
    if (!(s > 0.0)) throw NumericalError("predictor: non-positive band deviation");
  }
  mean_ = std::move(mean);
  std_ = std::move(std);
}

void PredictorModel::freeze() {
  for (auto& [name, p] : parameters()) p.set_requires_grad(false);
  frozen_ = true;
}

nn::NamedParams PredictorModel::parameters() const {
  nn::NamedParams out;
  proj_.collect("proj", out);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    layers_[i].collect("layer" + std::to_string(i), out);
  }
  out.emplace_back("pool.query", pool_query_);
  head_.collect("head", out);
  return out;
}

nn::Checkpoint PredictorModel::to_checkpoint() const {
  nn::Checkpoint ck;
  ck.kind = "predictor";
  ck.config = cfg_;
  ck.add_params(parameters());
  ck.add("norm.mean", {cfg_.n_mels}, mean_);
  ck.add("norm.std", {cfg_.n_mels}, std_);
  return ck;
}

PredictorModel PredictorModel::from_checkpoint(const nn::Checkpoint& ckpt) {
  if (ckpt.kind != "predictor") {
    throw DataError("checkpoint holds a '" + ckpt.kind + "', not a predictor");
  }
  PredictorModel m(ckpt.config.get<PredictorConfig>(), 0);
  ckpt.restore(m.parameters());
  m.set_normalization(ckpt.arrays[ckpt.find("norm.mean")], ckpt.arrays[ckpt.find("norm.std")]);
  m.freeze();
  return m;
}

Tensor predictor_loss(const Tensor& score, double q_norm) {
  return nn::square(nn::add_scalar(score, -q_norm));
}

}  // namespace hlab::predictor
