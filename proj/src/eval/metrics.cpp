#include "stgnn/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "stgnn/errors.hpp"

namespace stgnn::eval {

namespace {

void check_inputs(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) {
    throw MetricError("scores and labels differ in length (" + std::to_string(scores.size()) + " vs " +
                      std::to_string(labels.size()) + ")");
  }
  std::size_t positives = 0;
  for (int y : labels) {
    if (y != 0 && y != 1) throw MetricError("labels must be 0 or 1");
    positives += y;
  }
  if (positives == 0 || positives == labels.size()) {
    throw MetricError("both classes must be present to compute metrics");
  }
  for (double s : scores) {
    if (std::isnan(s)) throw MetricError("score is NaN");
  }
}

std::vector<std::size_t> order_by_score(std::span<const double> scores, bool descending) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return descending ? scores[a] > scores[b] : scores[a] < scores[b];
  });
  return order;
}

}  // namespace

double auc_score(std::span<const double> scores, std::span<const int> labels) {
  check_inputs(scores, labels);
  const auto order = order_by_score(scores, false);
  double positive_rank_sum = 0.0;
  std::size_t positives = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    // ranks i+1 .. j share their average
    const double rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] == 1) {
        positive_rank_sum += rank;
        ++positives;
      }
    }
    i = j;
  }
  const double p = static_cast<double>(positives);
  const double n = static_cast<double>(labels.size() - positives);
  return (positive_rank_sum - p * (p + 1) / 2) / (p * n);
}

std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const int> labels) {
  check_inputs(scores, labels);
  const auto order = order_by_score(scores, true);
  double positives = 0, negatives = 0;
  for (int y : labels) (y ? positives : negatives) += 1;
  std::vector<RocPoint> roc{{std::numeric_limits<double>::infinity(), 0.0, 0.0}};
  double tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] ? tp : fp) += 1;
      ++j;
    }
    roc.push_back({scores[order[i]], fp / negatives, tp / positives});
    i = j;
  }
  return roc;
}

Metrics compute_metrics(std::span<const double> scores, std::span<const int> labels, double threshold) {
  Metrics m;
  m.auc = auc_score(scores, labels);
  m.roc = roc_curve(scores, labels);
  double tp = 0, fn = 0, tn = 0, fp = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool predicted = scores[i] >= threshold;
    if (labels[i]) (predicted ? tp : fn) += 1;
    else (predicted ? fp : tn) += 1;
  }
  m.sensitivity = tp / (tp + fn);
  m.specificity = tn / (tn + fp);
  return m;
}

Summary summarize(std::span<const double> values) {
  Summary s;
  if (values.empty()) return s;
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return s;
}

}  // namespace stgnn::eval
