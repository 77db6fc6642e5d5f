// Copyright 2026 The hlab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "hlab/nn/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

namespace hlab::nn {

std::string GradCheckReport::summary() const {
  std::ostringstream os;
  os << (passed ? "pass" : "FAIL") << " max_rel_err=" << max_rel_error << " over "
     << entries_checked << " entries";
  if (!worst_param.empty()) {
    os << " worst=" << worst_param << "[" << worst_index << "] analytic=" << worst_analytic
       << " numeric=" << worst_numeric;
  }
  return os.str();
}

GradCheckReport grad_check(const std::function<Tensor()>& loss, const NamedParams& params,
                           const GradCheckOptions& opts) {
  for (auto [name, p] : params) p.zero_grad();
  loss().backward();
  std::vector<std::vector<double>> analytic;
  for (const auto& [name, p] : params) {
    std::vector<double> g(p.size(), 0.0);
    if (p.has_grad()) std::copy(p.grad().begin(), p.grad().end(), g.begin());
    analytic.push_back(std::move(g));
  }

  GradCheckReport report;
  NoGradGuard no_grad;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor p = params[k].second;
    auto w = p.mutable_values();
    std::size_t stride = 1;
    if (opts.max_entries_per_param > 0 && w.size() > opts.max_entries_per_param) {
      stride = (w.size() + opts.max_entries_per_param - 1) / opts.max_entries_per_param;
    }
    for (std::size_t j = 0; j < w.size(); j += stride) {
      const double orig = w[j];
      w[j] = orig + opts.step;
      const double up = loss().item();
      w[j] = orig - opts.step;
      const double down = loss().item();
      w[j] = orig;
      const double numeric = (up - down) / (2.0 * opts.step);
      const double a = analytic[k][j];
      const double denom = std::max({std::abs(a), std::abs(numeric), opts.floor});
      const double rel = std::abs(a - numeric) / denom;
      ++report.entries_checked;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_param = params[k].first;
        report.worst_index = j;
        report.worst_analytic = a;
        report.worst_numeric = numeric;
      }
    }
  }
  report.passed = report.max_rel_error < opts.tolerance;
  for (auto [name, p] : params) p.zero_grad();
  return report;
}

}  // namespace hlab::nn
