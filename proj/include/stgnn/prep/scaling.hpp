#pragma once

#include <span>
#include <vector>

namespace stgnn::prep {

// Quantile by linear interpolation between order statistics (q in [0, 1]).
double quantile(std::span<const double> values, double q);

// (x - median) / (Q3 - Q1); all zeros when the interquartile range is zero.
std::vector<double> robust_scale(std::span<const double> series);

}  // namespace stgnn::prep
