#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace stgnn::prep {

// Rows are timesteps, columns are nodes.
using TimeSeries = Eigen::MatrixXd;
// Rows are nodes, columns are timesteps.
using FeatureMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct SubjectRecord {
  std::string subject_id;
  int label = 0;
  std::vector<TimeSeries> sessions;

  std::size_t node_count() const { return sessions.empty() ? 0 : sessions.front().cols(); }
};

struct SampleWindow {
  std::string subject_id;
  std::size_t scan_index = 0;
  std::size_t window_index = 0;
  int label = 0;
  FeatureMatrix features;
};

// Binary, symmetric, zero-diagonal graph with a dense view and an undirected
// edge list (i < j) kept in agreement.
class AdjacencyMatrix {
 public:
  using Edge = std::pair<std::uint32_t, std::uint32_t>;

  AdjacencyMatrix() = default;
  // Edges are normalized to i < j, deduplicated and sorted.
  static AdjacencyMatrix from_edges(std::size_t nodes, std::vector<Edge> edges);

  std::size_t size() const { return nodes_; }
  std::size_t edge_count() const { return edges_.size(); }
  bool connected(std::size_t i, std::size_t j) const { return dense_[i * nodes_ + j] != 0; }
  const std::vector<std::uint8_t>& dense() const { return dense_; }
  const std::vector<Edge>& edges() const { return edges_; }
  // 2 x E layout: row 0 holds sources, row 1 targets.
  std::vector<std::vector<std::uint32_t>> edge_index() const;
  std::size_t degree(std::size_t i) const;

 private:
  std::size_t nodes_ = 0;
  std::vector<std::uint8_t> dense_;
  std::vector<Edge> edges_;
};

struct GraphSample {
  SampleWindow window;
  AdjacencyMatrix adjacency;
  // Upper triangle (i < j, row-major) of the sample's correlation matrix.
  std::vector<float> correlation_upper;
};

}  // namespace stgnn::prep
