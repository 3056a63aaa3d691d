#include "stgnn/prep/connectivity.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "stgnn/errors.hpp"

namespace stgnn::prep {

AdjacencyMatrix AdjacencyMatrix::from_edges(std::size_t nodes, std::vector<Edge> edges) {
  AdjacencyMatrix adj;
  adj.nodes_ = nodes;
  adj.dense_.assign(nodes * nodes, 0);
  for (auto& [i, j] : edges) {
    if (i == j) throw ContractError("adjacency: self loop on node " + std::to_string(i));
    if (i >= nodes || j >= nodes) throw DimensionError("adjacency: edge endpoint out of range");
    if (i > j) std::swap(i, j);
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  for (const auto& [i, j] : edges) {
    adj.dense_[i * nodes + j] = 1;
    adj.dense_[j * nodes + i] = 1;
  }
  adj.edges_ = std::move(edges);
  return adj;
}

std::vector<std::vector<std::uint32_t>> AdjacencyMatrix::edge_index() const {
  std::vector<std::vector<std::uint32_t>> out(2);
  for (const auto& [i, j] : edges_) {
    out[0].push_back(i);
    out[1].push_back(j);
  }
  return out;
}

std::size_t AdjacencyMatrix::degree(std::size_t i) const {
  std::size_t d = 0;
  for (std::size_t j = 0; j < nodes_; ++j) d += dense_[i * nodes_ + j];
  return d;
}

ShrinkageEstimate ledoit_wolf(const Eigen::MatrixXd& x) {
  const auto samples = x.rows();
  const auto features = x.cols();
  if (samples < 2) throw ContractError("ledoit_wolf: need at least 2 observations");
  if (features < 1) throw ContractError("ledoit_wolf: need at least 1 variable");

  const Eigen::MatrixXd centered = x.rowwise() - x.colwise().mean();
  const double t = static_cast<double>(samples);
  const double n = static_cast<double>(features);
  ShrinkageEstimate est;
  est.empirical = (centered.transpose() * centered) / t;
  const Eigen::MatrixXd& s = est.empirical;
  const double mu = s.trace() / n;

  const Eigen::MatrixXd target_gap = s - mu * Eigen::MatrixXd::Identity(features, features);
  const double d2 = target_gap.squaredNorm() / n;

  // sum_k ||x_k x_k^T - S||_F^2 = sum_k ||x_k||^4 - T ||S||_F^2
  const double fourth = centered.rowwise().squaredNorm().array().square().sum();
  const double b_bar2 = std::max(0.0, (fourth / (t * t) - s.squaredNorm() / t) / n);
  const double b2 = std::min(b_bar2, d2);
  est.shrinkage = d2 == 0.0 ? 0.0 : b2 / d2;
  est.covariance = est.shrinkage * mu * Eigen::MatrixXd::Identity(features, features) +
                   (1.0 - est.shrinkage) * s;
  return est;
}

Eigen::MatrixXd ledoit_wolf_covariance(const Eigen::MatrixXd& x) { return ledoit_wolf(x).covariance; }

Eigen::MatrixXd covariance_to_correlation(const Eigen::MatrixXd& covariance) {
  if (covariance.rows() != covariance.cols()) throw DimensionError("correlation: matrix not square");
  const auto n = covariance.rows();
  Eigen::VectorXd inv_sd(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double v = covariance(i, i);
    if (!(v > 0.0)) {
      throw DegenerateError("correlation: nonpositive variance on node " + std::to_string(i));
    }
    inv_sd(i) = 1.0 / std::sqrt(v);
  }
  Eigen::MatrixXd r(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    r(i, i) = 1.0;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      r(i, j) = r(j, i) = covariance(i, j) * inv_sd(i) * inv_sd(j);
    }
  }
  return r;
}

std::size_t threshold_edge_count(std::size_t nodes, double percent) {
  if (!(percent > 0.0 && percent <= 100.0)) {
    throw ConfigError("threshold percent must lie in (0, 100], got " + std::to_string(percent));
  }
  const std::size_t pairs = nodes * (nodes > 0 ? nodes - 1 : 0) / 2;
  // Multiply before dividing so integral percents stay exact.
  return static_cast<std::size_t>(std::floor(percent * static_cast<double>(pairs) / 100.0 + 1e-9));
}

AdjacencyMatrix threshold_edges(const Eigen::MatrixXd& correlation, double percent) {
  if (correlation.rows() != correlation.cols()) throw DimensionError("threshold: matrix not square");
  const auto n = static_cast<std::size_t>(correlation.rows());
  const std::size_t keep = threshold_edge_count(n, percent);

  std::vector<AdjacencyMatrix::Edge> pairs;
  pairs.reserve(n * (n > 0 ? n - 1 : 0) / 2);
  for (std::uint32_t i = 0; i < n; ++i) {
    for (std::uint32_t j = i + 1; j < n; ++j) pairs.emplace_back(i, j);
  }
  // pairs is already in lexicographic order, so a stable sort on strength
  // resolves ties by (i, j).
  std::stable_sort(pairs.begin(), pairs.end(), [&](const auto& a, const auto& b) {
    return std::abs(correlation(a.first, a.second)) > std::abs(correlation(b.first, b.second));
  });
  pairs.resize(keep);
  return AdjacencyMatrix::from_edges(n, std::move(pairs));
}

}  // namespace stgnn::prep
