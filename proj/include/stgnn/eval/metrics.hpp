#pragma once

#include <limits>
#include <span>
#include <vector>

namespace stgnn::eval {

struct RocPoint {
  double threshold;
  double fpr;
  double tpr;
};

struct Metrics {
  double auc = 0.0;
  double sensitivity = 0.0;
  double specificity = 0.0;
  std::vector<RocPoint> roc;
};

// Mann-Whitney statistic with average ranks, so tied scores count 1/2.
// MetricError unless both classes are present.
double auc_score(std::span<const double> scores, std::span<const int> labels);

// One point per distinct score, scanning thresholds from high to low; a point
// is "predict positive when score >= threshold". The first point has an
// infinite threshold and sits at (0, 0); the last reaches (1, 1).
std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const int> labels);

Metrics compute_metrics(std::span<const double> scores, std::span<const int> labels,
                        double threshold = 0.5);

struct Summary {
  double mean = 0.0;
  double sd = 0.0;  // sample standard deviation (n - 1); 0 for a single value
};

Summary summarize(std::span<const double> values);

}  // namespace stgnn::eval
