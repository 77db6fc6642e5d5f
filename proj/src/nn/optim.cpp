// Copyright 2026 The hlab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "hlab/nn/optim.hpp"

#include <cmath>
#include <string>

#include "hlab/common/error.hpp"

namespace hlab::nn {

void adam_step(std::vector<Tensor>& params, AdamState& state, double lr) {
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.size(), 0.0);
      state.v.emplace_back(p.size(), 0.0);
    }
  }
  if (state.m.size() != params.size()) throw ShapeError("adam: state/parameter count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    if (!p.requires_grad()) {
      throw UsageError("adam: parameter " + std::to_string(i) + " is frozen");
    }
    if (state.m[i].size() != p.size()) {
      throw ShapeError("adam: moment shape mismatch for parameter " + std::to_string(i));
    }
    for (double g : p.grad()) {
      if (!std::isfinite(g)) {
        throw NumericalError("adam: non-finite gradient in parameter " + std::to_string(i) +
                             " at step " + std::to_string(state.step));
      }
    }
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    if (!p.has_grad()) continue;
    const auto g = p.grad();
    auto w = p.mutable_values();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g[j];
      v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g[j] * g[j];
      w[j] -= lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + state.eps);
    }
  }
}

void zero_grads(std::vector<Tensor>& params) {
  for (auto& p : params) p.zero_grad();
}

void LrSchedule::validate() const {
  if (!(peak_lr > 0.0)) throw UsageError("lr schedule: peak_lr must be positive");
  if (warmup_updates < 1) throw UsageError("lr schedule: warmup_updates must be >= 1");
  if (!(decay_per_epoch > 0.0 && decay_per_epoch <= 1.0)) {
    throw UsageError("lr schedule: decay must lie in (0, 1]");
  }
}

double lr_at(const LrSchedule& s, std::int64_t update, std::int64_t epoch) {
  if (update < s.warmup_updates) {
    return s.peak_lr * static_cast<double>(update + 1) / static_cast<double>(s.warmup_updates);
  }
  return s.peak_lr * std::pow(s.decay_per_epoch, static_cast<double>(epoch));
}

}  // namespace hlab::nn
