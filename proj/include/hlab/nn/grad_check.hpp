// Copyright 2026 The hlab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <functional>
#include <string>

#include "hlab/nn/layers.hpp"

namespace hlab::nn {

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  // Denominator floor for |analytic - numeric| / max(|analytic|, |numeric|).
  double floor = 1e-6;
  // Check at most this many entries per parameter (evenly strided); 0 = all.
  std::size_t max_entries_per_param = 0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t entries_checked = 0;
  bool passed = true;

  std::string summary() const;
};

/// Compares backward() of the scalar `loss` against central differences for
/// every listed parameter entry.
GradCheckReport grad_check(const std::function<Tensor()>& loss, const NamedParams& params,
                           const GradCheckOptions& opts = {});

}  // namespace hlab::nn
