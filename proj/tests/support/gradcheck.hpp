#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "stgnn/diff/ops.hpp"

namespace testing {

using stgnn::diff::Tensor;

inline Tensor<double> random_tensor(stgnn::diff::Shape shape, std::mt19937_64& rng,
                                    double lo = -1.0, double hi = 1.0, bool requires_grad = true) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(stgnn::diff::shape_numel(shape));
  for (auto& x : v) x = u(rng);
  return Tensor<double>::from(std::move(shape), std::move(v), requires_grad);
}

// Contracts an arbitrary output to a scalar with fixed pseudo-random weights,
// so every output entry contributes to the checked gradient.
inline Tensor<double> project(const Tensor<double>& out, unsigned seed = 99) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> w(out.numel());
  for (auto& x : w) x = n(rng);
  return stgnn::diff::sum_all(stgnn::diff::mul(out, Tensor<double>::from(out.shape(), w)));
}

struct GradReport {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
};

// Central differences on every entry of every leaf against the analytic
// gradient from one backward pass. Relative error is |a - n| / max(|a|, |n|, floor).
inline GradReport gradcheck(const std::vector<Tensor<double>>& leaves,
                            const std::function<Tensor<double>()>& loss_fn, double h = 1e-5,
                            double floor = 1e-4) {
  std::vector<Tensor<double>> params = leaves;
  for (auto& p : params) p.zero_grad();
  loss_fn().backward();
  std::vector<std::vector<double>> analytic;
  for (auto& p : params) analytic.emplace_back(p.grad().begin(), p.grad().end());

  GradReport report;
  stgnn::diff::NoGradGuard guard;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto data = params[k].data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double saved = data[i];
      data[i] = saved + h;
      const double up = loss_fn().item();
      data[i] = saved - h;
      const double down = loss_fn().item();
      data[i] = saved;
      const double numeric = (up - down) / (2 * h);
      const double a = analytic[k][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), floor});
      if (std::getenv("GRADCHECK_DEBUG") && std::abs(a - numeric) / denom > 1e-4)
        std::printf("leaf %zu idx %zu analytic %.12g numeric %.12g\n", k, i, a, numeric);
      report.max_rel_error = std::max(report.max_rel_error, std::abs(a - numeric) / denom);
      ++report.checked;
    }
  }
  return report;
}

// True when central differences at h and h/10 agree on every entry. Uses no
// analytic gradient; false means some nonsmooth point (a relu kink) lies
// within h of the input.
inline bool smooth_at(const std::vector<Tensor<double>>& leaves, const std::function<Tensor<double>()>& loss_fn,
                      double h = 1e-5, double tolerance = 1e-4) {
  std::vector<Tensor<double>> params = leaves;
  stgnn::diff::NoGradGuard guard;
  auto central = [&](std::span<double> data, std::size_t i, double step) {
    const double saved = data[i];
    data[i] = saved + step;
    const double up = loss_fn().item();
    data[i] = saved - step;
    const double down = loss_fn().item();
    data[i] = saved;
    return (up - down) / (2 * step);
  };
  for (auto& p : params) {
    auto data = p.data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double coarse = central(data, i, h), fine = central(data, i, h / 10);
      if (std::abs(coarse - fine) / std::max({std::abs(coarse), std::abs(fine), 1e-4}) > tolerance) return false;
    }
  }
  return true;
}

}  // namespace testing
