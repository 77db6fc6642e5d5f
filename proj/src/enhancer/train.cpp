// Copyright 2026 The hlab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "hlab/enhancer/train.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>

#include <fmt/format.h>

#include "hlab/common/error.hpp"
#include "hlab/common/random.hpp"
#include "hlab/dsp/wav_io.hpp"
#include "hlab/nn/ops.hpp"
#include "hlab/nn/signal.hpp"

namespace hlab::enhancer {

using nn::Tensor;

SpecLossVariant parse_spec_loss_variant(const std::string& name) {
  if (name == "as-printed") return SpecLossVariant::kAsPrinted;
  if (name == "sum-of-abs") return SpecLossVariant::kSumOfAbs;
  throw UsageError("unknown spec loss variant '" + name + "'");
}

std::string to_string(SpecLossVariant v) {
  return v == SpecLossVariant::kAsPrinted ? "as-printed" : "sum-of-abs";
}

Tensor spec_loss(const Tensor& clean, const Tensor& enhanced, SpecLossVariant variant) {
  if (clean.shape() != enhanced.shape() || clean.rank() != 3 || clean.dim(2) != 2) {
    throw ShapeError("spec_loss: expected matching [T, F, 2] spectra, got " +
                     nn::shape_str(clean.shape()) + " and " + nn::shape_str(enhanced.shape()));
  }
  Tensor d = nn::sub(nn::abs(clean), nn::abs(enhanced));
  if (variant == SpecLossVariant::kSumOfAbs) return nn::scale(nn::mean(nn::abs(d)), 2.0);
  // Sum the real and imaginary differences before the outer magnitude.
  const int bins = clean.dim(0) * clean.dim(1);
  Tensor pair = nn::linear(nn::reshape(d, {bins, 2}), Tensor::constant({2, 1}, {1.0, 1.0}));
  return nn::mean(nn::abs(pair));
}

Tensor sq_loss(const predictor::PredictorModel& predictor, const Tensor& enhanced_wave) {
  if (!predictor.frozen()) throw UsageError("sq_loss: the quality predictor must be frozen");
  Tensor s = predictor.score(enhanced_wave);
  return nn::square(nn::add_scalar(nn::scale(s, -1.0), 1.0));
}

Tensor joint_loss(double alpha, const Tensor& l_spec, const Tensor& l_sq) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw UsageError("joint_loss: alpha must lie in [0, 1], got " + std::to_string(alpha));
  }
  return nn::add(nn::scale(l_spec, alpha), nn::scale(l_sq, 1.0 - alpha));
}

void TrainConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw UsageError("train: alpha must lie in [0, 1]");
  if (epochs < 1) throw UsageError("train: epochs must be >= 1");
  if (batch_size < 1) throw UsageError("train: batch size must be >= 1");
  if (!(crop_seconds > 0.0)) throw UsageError("train: crop length must be positive");
  lr.validate();
  model.validate();
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"alpha", c.alpha},
       {"spec_loss_variant", to_string(c.variant)},
       {"epochs", c.epochs},
       {"batch_size", c.batch_size},
       {"crop_seconds", c.crop_seconds},
       {"max_valid_clips", c.max_valid_clips},
       {"peak_lr", c.lr.peak_lr},
       {"warmup_updates", c.lr.warmup_updates},
       {"decay_per_epoch", c.lr.decay_per_epoch},
       {"model", c.model}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  c.alpha = j.value("alpha", c.alpha);
  if (j.contains("spec_loss_variant")) c.variant = parse_spec_loss_variant(j["spec_loss_variant"]);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.crop_seconds = j.value("crop_seconds", c.crop_seconds);
  c.max_valid_clips = j.value("max_valid_clips", c.max_valid_clips);
  c.lr.peak_lr = j.value("peak_lr", c.lr.peak_lr);
  c.lr.warmup_updates = j.value("warmup_updates", c.lr.warmup_updates);
  c.lr.decay_per_epoch = j.value("decay_per_epoch", c.lr.decay_per_epoch);
  if (j.contains("model")) j["model"].get_to(c.model);
}

namespace {

struct Clip {
  std::vector<double> noisy;
  std::vector<double> clean;  // empty when the manifest has no reference
};

std::vector<Clip> load_clips(const Manifest& m, const std::string& split, bool need_clean) {
  std::vector<Clip> out;
  for (const auto& e : m.split(split)) {
    Clip c;
    c.noisy = dsp::read_wav(m.resolve(e.wav_path)).samples;
    if (e.clean_path) {
      c.clean = dsp::read_wav(m.resolve(*e.clean_path)).samples;
      if (c.clean.size() != c.noisy.size()) throw DataError("enhancer: length mismatch for " + e.id);
    } else if (need_clean) {
      throw DataError("enhancer: alpha > 0 needs a clean reference for " + e.id);
    }
    out.push_back(std::move(c));
  }
  return out;
}

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

TrainedEnhancer train_enhancer(const Manifest& manifest, const predictor::PredictorModel& predictor,
                               const TrainConfig& cfg, std::uint64_t seed,
                               const EpochCallback& on_epoch) {
  cfg.validate();
  if (!predictor.frozen()) throw UsageError("train_enhancer: the quality predictor must be frozen");
  const bool use_spec = cfg.alpha > 0.0;
  const bool use_sq = cfg.alpha < 1.0;
  const auto train = load_clips(manifest, "train", use_spec);
  if (train.empty()) throw DataError("enhancer: split 'train' is empty");
  auto valid = load_clips(manifest, "valid", false);
  if (valid.size() > static_cast<std::size_t>(std::max(0, cfg.max_valid_clips))) {
    valid.resize(static_cast<std::size_t>(std::max(0, cfg.max_valid_clips)));
  }

  EnhancerModel model(cfg.model, seed);
  auto params = nn::tensors_of(model.parameters());
  nn::AdamState adam;
  Rng rng = Rng::derive(seed, 0x5eed);
  const auto crop = static_cast<std::size_t>(std::llround(cfg.crop_seconds * dsp::kDefaultSampleRate));
  const double nan = std::numeric_limits<double>::quiet_NaN();

  TrainHistory history;
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::int64_t update = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    std::vector<double> ls, lspec, lsq;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const double inv = 1.0 / static_cast<double>(end - start);
      nn::zero_grads(params);
      for (std::size_t b = start; b < end; ++b) {
        const Clip& clip = train[order[b]];
        const std::size_t len = std::min(crop, clip.noisy.size());
        const std::size_t off = clip.noisy.size() > len ? rng.below(clip.noisy.size() - len + 1) : 0;
        auto slice = [&](const std::vector<double>& x) {
          return Tensor::constant({static_cast<int>(len)},
                                  std::vector<double>(x.begin() + off, x.begin() + off + len));
        };
        const auto out = model.forward(slice(clip.noisy));
        Tensor l_spec, l_sq;
        {
          // Terms with zero weight are evaluated for the log only.
          std::optional<nn::NoGradGuard> off_graph;
          if (!use_spec) off_graph.emplace();
          if (!clip.clean.empty()) {
            l_spec = spec_loss(nn::stft(slice(clip.clean), cfg.model.stft), out.spec, cfg.variant);
          }
        }
        {
          std::optional<nn::NoGradGuard> off_graph;
          if (!use_sq) off_graph.emplace();
          l_sq = sq_loss(predictor, use_sq ? out.wave : out.wave.detach());
        }
        const Tensor spec_term = l_spec.defined() ? l_spec : Tensor::scalar(0.0);
        const Tensor l = joint_loss(cfg.alpha, spec_term, l_sq);
        if (!std::isfinite(l.item())) {
          throw NumericalError(fmt::format("enhancer: non-finite loss at epoch {}", epoch));
        }
        ls.push_back(l.item());
        lspec.push_back(l_spec.defined() ? l_spec.item() : nan);
        lsq.push_back(l_sq.item());
        history.steps.push_back({ls.back(), lspec.back(), lsq.back()});
        nn::scale(l, inv).backward();
      }
      nn::adam_step(params, adam, nn::lr_at(cfg.lr, update++, epoch - 1));
    }
    nn::zero_grads(params);

    EpochRecord rec{epoch, mean_of(ls), mean_of(lspec), mean_of(lsq), nan};
    if (!valid.empty()) {
      double acc = 0.0;
      for (const auto& c : valid) {
        acc += predictor.predict(model.enhance(dsp::Waveform(c.noisy, dsp::kDefaultSampleRate)).wave);
      }
      rec.val_predictor_score = acc / static_cast<double>(valid.size());
    }
    history.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  return {std::move(model), std::move(history)};
}

void write_history_csv(const std::filesystem::path& path, const TrainHistory& history) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write " + path.string());
  os << "epoch,L,L_spec,L_SQ,val_predictor_score\n";
  for (const auto& e : history.epochs) {
    os << fmt::format("{},{:.17g},{:.17g},{:.17g},{:.17g}\n", e.epoch, e.l, e.l_spec, e.l_sq,
                      e.val_predictor_score);
  }
  if (!os.flush()) throw IoError("write failed for " + path.string());
}

}  // namespace hlab::enhancer
