#pragma once

#include <span>
#include <vector>

namespace tailcast::stats {

// Hyndman-Fan type 7: h = (n-1)p, linear interpolation between order statistics.
double quantile_sorted(std::span<const double> sorted, double p);
double quantile(std::vector<double> values, double p);

double mean(std::span<const double> x);
// Unbiased (n-1) sample variance.
double sample_variance(std::span<const double> x);

}  // namespace tailcast::stats
