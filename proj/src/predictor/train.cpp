// Copyright 2026 The hlab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "hlab/predictor/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>

#include <fmt/format.h>

#include "hlab/common/error.hpp"
#include "hlab/common/stats.hpp"
#include "hlab/dsp/wav_io.hpp"
#include "hlab/nn/ops.hpp"

namespace hlab::predictor {

using nn::Tensor;

EarlyStopping::EarlyStopping(int patience) : patience_(patience) {
  if (patience < 1) throw UsageError("early stopping: patience must be >= 1");
}

bool EarlyStopping::observe(int epoch, double val_loss) {
  if (best_epoch_ == 0 || val_loss < best_loss_) {
    best_epoch_ = epoch;
    best_loss_ = val_loss;
    return true;
  }
  return false;
}

namespace {

struct Example {
  Tensor features;
  double q_norm;
};

std::vector<Example> load_examples(const PredictorModel& model, const Manifest& manifest,
                                   const std::string& split) {
  std::vector<Example> out;
  nn::NoGradGuard guard;
  for (const auto& e : manifest.split(split)) {
    if (!e.mos_raw) throw DataError("predictor: entry " + e.id + " has no mos_raw label");
    const auto wave = dsp::read_wav(manifest.resolve(e.wav_path));
    const auto feats =
        model.log_mel(Tensor::constant({static_cast<int>(wave.size())}, wave.samples));
    out.push_back({feats.detach(), normalize_mos(*e.mos_raw)});
  }
  if (out.empty()) throw DataError("predictor: split '" + split + "' is empty");
  return out;
}

double mean_loss(const PredictorModel& model, const std::vector<Example>& data) {
  nn::NoGradGuard guard;
  double acc = 0.0;
  for (const auto& ex : data) acc += predictor_loss(model.score_features(ex.features), ex.q_norm).item();
  return acc / static_cast<double>(data.size());
}

std::vector<std::vector<double>> snapshot(const nn::NamedParams& params) {
  std::vector<std::vector<double>> out;
  for (const auto& [name, p] : params) out.emplace_back(p.values().begin(), p.values().end());
  return out;
}

}  // namespace

TrainedPredictor train_predictor(const Manifest& manifest, const PredictorConfig& cfg,
                                 std::uint64_t seed, const EpochCallback& on_epoch) {
  cfg.validate();
  PredictorModel model(cfg, seed);
  auto train = load_examples(model, manifest, "train");
  const auto valid = load_examples(model, manifest, "valid");

  // Band statistics over every training frame.
  const int m = cfg.n_mels;
  std::vector<double> sum(m, 0.0), sq(m, 0.0);
  double frames = 0.0;
  for (const auto& ex : train) {
    const auto v = ex.features.values();
    for (std::size_t i = 0; i < v.size(); ++i) {
      sum[i % m] += v[i];
      sq[i % m] += v[i] * v[i];
    }
    frames += static_cast<double>(v.size() / m);
  }
  std::vector<double> mu(m), sd(m);
  for (int k = 0; k < m; ++k) {
    mu[k] = sum[k] / frames;
    sd[k] = std::sqrt(std::max(sq[k] / frames - mu[k] * mu[k], 0.0)) + 1e-3;
  }
  model.set_normalization(mu, sd);

  auto named = model.parameters();
  auto params = nn::tensors_of(named);
  nn::AdamState adam;
  EarlyStopping stopper(cfg.patience);
  auto best = snapshot(named);
  Rng rng = Rng::derive(seed, 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  PredictorHistory history;
  std::int64_t update = 0;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    double train_acc = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      nn::zero_grads(params);
      const double inv = 1.0 / static_cast<double>(end - start);
      for (std::size_t b = start; b < end; ++b) {
        const auto& ex = train[order[b]];
        Tensor loss = predictor_loss(model.score_features(ex.features), ex.q_norm);
        train_acc += loss.item();
        nn::scale(loss, inv).backward();
      }
      nn::adam_step(params, adam, nn::lr_at(cfg.lr, update++, epoch - 1));
    }
    nn::zero_grads(params);
    PredictorEpoch rec{epoch, train_acc / static_cast<double>(train.size()), mean_loss(model, valid)};
    if (!std::isfinite(rec.train_loss) || !std::isfinite(rec.val_loss)) {
      throw NumericalError(fmt::format("predictor: non-finite loss at epoch {}", epoch));
    }
    history.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (stopper.observe(epoch, rec.val_loss)) best = snapshot(named);
    history.stopped_epoch = epoch;
    if (stopper.should_stop(epoch)) break;
  }
  history.best_epoch = stopper.best_epoch();
  for (std::size_t i = 0; i < named.size(); ++i) {
    auto dst = named[i].second.mutable_values();
    std::copy(best[i].begin(), best[i].end(), dst.begin());
  }
  return {std::move(model), std::move(history)};
}

void write_history_csv(const std::filesystem::path& path, const PredictorHistory& history) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write " + path.string());
  os << "epoch,train_loss,val_loss\n";
  for (const auto& e : history.epochs) {
    os << fmt::format("{},{:.10g},{:.10g}\n", e.epoch, e.train_loss, e.val_loss);
  }
  if (!os.flush()) throw IoError("write failed for " + path.string());
}

PredictorEvaluation evaluate_predictor(const PredictorModel& model, const Manifest& manifest,
                                       const std::string& split) {
  const auto items = manifest.split(split);
  if (items.size() < 2) throw DataError("predictor evaluation needs at least 2 items");
  std::vector<std::string> names;
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> by_set;
  for (const auto& e : items) {
    if (!e.mos_raw) throw DataError("predictor evaluation: entry " + e.id + " has no label");
    const auto wave = dsp::read_wav(manifest.resolve(e.wav_path));
    const std::string set = e.set_name.empty() ? "all" : e.set_name;
    if (!by_set.count(set)) names.push_back(set);
    auto& [pred, label] = by_set[set];
    pred.push_back(5.0 * model.predict(wave));
    label.push_back(*e.mos_raw);
  }
  PredictorEvaluation eval;
  for (const auto& name : names) {
    const auto& [pred, label] = by_set[name];
    if (pred.size() < 2) throw DataError("predictor evaluation: set '" + name + "' has < 2 items");
    eval.sets.push_back({name, spearman(pred, label), rmse(pred, label), pred.size()});
  }
  eval.mean.set_name = "MEAN";
  for (const auto& s : eval.sets) {
    eval.mean.spearman_r += s.spearman_r / static_cast<double>(eval.sets.size());
    eval.mean.rmse += s.rmse / static_cast<double>(eval.sets.size());
    eval.mean.count += s.count;
  }
  return eval;
}

void write_evaluation_csv(const std::filesystem::path& path, const PredictorEvaluation& eval) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write " + path.string());
  os << "set_name,spearman_r,rmse\n";
  for (const auto& s : eval.sets) os << fmt::format("{},{:.6f},{:.6f}\n", s.set_name, s.spearman_r, s.rmse);
  os << fmt::format("{},{:.6f},{:.6f}\n", eval.mean.set_name, eval.mean.spearman_r, eval.mean.rmse);
  if (!os.flush()) throw IoError("write failed for " + path.string());
}

}  // namespace hlab::predictor
