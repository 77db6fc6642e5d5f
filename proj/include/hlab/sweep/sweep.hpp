// Copyright 2026 The hlab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "hlab/enhancer/train.hpp"
#include "hlab/metrics/evaluate.hpp"

namespace hlab::sweep {

struct SweepConfig {
  // Desk-scale default; full_grid() gives 1.0, 0.9, ..., 0.0.
  std::vector<double> alphas{1.0, 0.5, 0.0};
  int epochs = 30;
  std::uint64_t seed = 0;
  std::filesystem::path enhancement_manifest;
  std::filesystem::path predictor_checkpoint;
  // alpha and epochs are taken from the fields above.
  enhancer::TrainConfig train;
  std::filesystem::path out_dir;
  // Test clip rendered in the spectrogram grid; empty picks the first one.
  std::string probe_id;
  // Enhanced test clips exported per condition for the listening test.
  int stimuli_per_condition = 3;
  metrics::EvalOptions eval;

  static std::vector<double> full_grid();
  void validate() const;
};

void to_json(nlohmann::json& j, const SweepConfig& c);
void from_json(const nlohmann::json& j, SweepConfig& c);

struct AlphaRun {
  double alpha = 0.0;
  metrics::Evaluation eval;
  enhancer::TrainHistory history;
  std::filesystem::path checkpoint;
  std::filesystem::path probe_png;
};

struct RunReport {
  std::string probe_id;
  metrics::Evaluation clean;
  metrics::Evaluation noisy;
  std::vector<AlphaRun> runs;
  std::filesystem::path clean_png;
  std::filesystem::path noisy_png;

  /// clean, noisy, then one row per alpha in sweep order.
  std::vector<metrics::MetricRow> rows() const;
};

/// Seed of the model trained for `alpha`; depends only on (seed, alpha).
std::uint64_t alpha_seed(std::uint64_t seed, double alpha);

using ProgressFn = std::function<void(double alpha, const enhancer::EpochRecord&)>;

/// Trains and evaluates one fresh enhancer per alpha. Inputs are checked
/// before any training starts.
RunReport run_sweep(const SweepConfig& cfg, const ProgressFn& progress = {});

/// Writes results.csv, results.json, spectrogram_grid.png and summary.md.
void emit_report(const RunReport& report, const std::filesystem::path& out_dir);

/// Noisy and enhanced copies of the first test clips plus stimuli.json, laid
/// out for the rating service.
void export_stimuli(const SweepConfig& cfg, const RunReport& report);

}  // namespace hlab::sweep
