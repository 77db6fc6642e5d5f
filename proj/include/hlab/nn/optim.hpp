// Copyright 2026 The hlab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cstdint>
#include <vector>

#include "hlab/nn/tensor.hpp"

namespace hlab::nn {

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

/// One bias-corrected Adam update from the grads currently held by `params`
/// (a missing grad counts as zero). Grads are left in place.
/// Throws UsageError for parameters that do not require grad and
/// NumericalError for non-finite grads; nothing is modified in either case.
void adam_step(std::vector<Tensor>& params, AdamState& state, double lr);

void zero_grads(std::vector<Tensor>& params);

struct LrSchedule {
  double peak_lr = 1e-3;
  std::int64_t warmup_updates = 500;
  double decay_per_epoch = 0.98;

  void validate() const;
};

/// Linear ramp peak * (update + 1) / warmup while update < warmup, then
/// peak * decay^epoch.
double lr_at(const LrSchedule& s, std::int64_t update, std::int64_t epoch);

}  // namespace hlab::nn
