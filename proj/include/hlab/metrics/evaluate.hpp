// Copyright 2026 The hlab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "hlab/common/manifest.hpp"
#include "hlab/enhancer/model.hpp"
#include "hlab/metrics/metrics.hpp"
#include "hlab/predictor/predictor.hpp"

namespace hlab::metrics {

/// One table row. `label` is "clean", "noisy" or the formatted alpha.
struct MetricRow {
  std::string label;
  std::optional<double> alpha;
  double si_sdr = 0.0;
  double stoi = 0.0;  // clipped to [0, 1]
  double lsd = 0.0;
  double predictor_score = 0.0;
  double halluc_ratio = 0.0;
};

struct FileMetrics {
  std::string id;
  double si_sdr = 0.0;
  double stoi = 0.0;
  double lsd = 0.0;
  double predictor_score = 0.0;
  double halluc_ratio = 0.0;
  std::size_t pause_flagged = 0;
  std::size_t pause_bins = 0;
  std::size_t rest_flagged = 0;
  std::size_t rest_bins = 0;
};

struct Evaluation {
  MetricRow row;
  std::vector<FileMetrics> files;

  /// Pooled flagged-bin density inside / outside the leading pause.
  double pause_density() const;
  double rest_density() const;
};

struct EvalOptions {
  std::string split = "test";
  double pause_seconds = 0.5;
  HallucinationOptions halluc;
};

enum class Reference { kClean, kNoisy };

/// Scores the unprocessed clean or noisy signals against the clean reference.
Evaluation evaluate_reference(Reference which, const predictor::PredictorModel& predictor,
                              const Manifest& manifest, const EvalOptions& opts = {});

/// Enhances every test clip and scores it. Throws DataError for an empty split
/// or a missing clean reference.
Evaluation evaluate_model(const enhancer::EnhancerModel& model, double alpha,
                          const predictor::PredictorModel& predictor, const Manifest& manifest,
                          const EvalOptions& opts = {});

std::string format_alpha(double alpha);

/// Columns: alpha, si_sdr, stoi, lsd, predictor_score, halluc_ratio.
std::string table_csv(const std::vector<MetricRow>& rows);
void write_table_csv(const std::filesystem::path& path, const std::vector<MetricRow>& rows);

nlohmann::json to_json(const Evaluation& eval);

}  // namespace hlab::metrics
