#pragma once

#include <Eigen/Core>

#include "stgnn/prep/types.hpp"

namespace stgnn::prep {

struct ShrinkageEstimate {
  Eigen::MatrixXd covariance;
  // Weight on the scaled-identity target, in [0, 1].
  double shrinkage = 0.0;
  // Empirical covariance (divisor T) of the centered data.
  Eigen::MatrixXd empirical;
};

// Ledoit-Wolf shrinkage towards mu * I, mu = trace(S) / N. Columns of `x` are
// variables, rows observations; data is centered first. Requires T >= 2.
ShrinkageEstimate ledoit_wolf(const Eigen::MatrixXd& x);
Eigen::MatrixXd ledoit_wolf_covariance(const Eigen::MatrixXd& x);

// r_ij = c_ij / sqrt(c_ii c_jj); DegenerateError on a nonpositive diagonal.
Eigen::MatrixXd covariance_to_correlation(const Eigen::MatrixXd& covariance);

// Number of undirected edges kept out of N(N-1)/2 at `percent`.
std::size_t threshold_edge_count(std::size_t nodes, double percent);

// Keeps the strongest |r_ij| pairs (ties by ascending (i, j)) and binarizes.
AdjacencyMatrix threshold_edges(const Eigen::MatrixXd& correlation, double percent);

}  // namespace stgnn::prep
