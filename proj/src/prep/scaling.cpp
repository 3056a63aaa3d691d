#include "stgnn/prep/scaling.hpp"

#include <algorithm>
#include <cmath>

#include "stgnn/errors.hpp"

namespace stgnn::prep {

namespace {

double sorted_quantile(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lower = static_cast<std::size_t>(std::floor(pos));
  const std::size_t upper = std::min(lower + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lower);
  return sorted[lower] + frac * (sorted[upper] - sorted[lower]);
}

}  // namespace

double quantile(std::span<const double> values, double q) {
  if (values.empty()) throw ContractError("quantile of an empty series");
  if (q < 0.0 || q > 1.0) throw ContractError("quantile level outside [0, 1]");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  return sorted_quantile(sorted, q);
}

std::vector<double> robust_scale(std::span<const double> series) {
  if (series.empty()) throw ContractError("robust_scale of an empty series");
  std::vector<double> sorted(series.begin(), series.end());
  std::sort(sorted.begin(), sorted.end());
  const double median = sorted_quantile(sorted, 0.5);
  const double iqr = sorted_quantile(sorted, 0.75) - sorted_quantile(sorted, 0.25);
  std::vector<double> out(series.size(), 0.0);
  if (iqr == 0.0) return out;
  for (std::size_t i = 0; i < series.size(); ++i) out[i] = (series[i] - median) / iqr;
  return out;
}

}  // namespace stgnn::prep
