// Copyright 2026 The hlab Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <span>
#include <vector>

namespace hlab {

double mean(std::span<const double> x);
/// Population standard deviation (divides by n).
double population_std(std::span<const double> x);
double rmse(std::span<const double> a, std::span<const double> b);
double pearson(std::span<const double> a, std::span<const double> b);
/// 1-based ranks; tied values share the average of their positions.
std::vector<double> average_ranks(std::span<const double> x);
/// Pearson correlation of average ranks. Requires at least two items.
double spearman(std::span<const double> a, std::span<const double> b);

}  // namespace hlab
