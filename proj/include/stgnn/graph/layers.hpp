#pragma once

#include <string>
#include <vector>

#include "stgnn/diff/layers.hpp"

namespace stgnn::graph {

using diff::Rng;
using diff::Tensor;

// Batched graphs are dense: features [B x N x F], adjacency [B x N x N].
// Messages never cross the batch axis.

// D^-1/2 (A + I) D^-1/2 per graph, where D is the degree matrix of A + I.
// ContractError unless every A is symmetric with a zero diagonal.
template <typename T>
Tensor<T> normalized_adjacency(const Tensor<T>& adjacency);

template <typename T>
void check_symmetric_adjacency(const Tensor<T>& adjacency, bool require_zero_diagonal);

// relu(P H W + b) with P the symmetric normalized operator.
template <typename T>
class GcnLayer {
 public:
  GcnLayer() = default;
  GcnLayer(std::size_t features, Rng& rng);

  // `propagation` is the output of normalized_adjacency.
  Tensor<T> forward(const Tensor<T>& h, const Tensor<T>& propagation) const;
  void collect(nn::TensorRegistry<T>& reg, const std::string& prefix) const;
  const nn::Linear<T>& transform() const { return transform_; }
  nn::Linear<T>& transform() { return transform_; }

 private:
  nn::Linear<T> transform_;
};

// Validates and normalizes `adjacency`, then applies `layer`.
template <typename T>
Tensor<T> gcn_forward(const Tensor<T>& h, const Tensor<T>& adjacency, const GcnLayer<T>& layer);

// Column means over nodes: [B x N x F] -> [B x F], or [N x F] -> [1 x F].
template <typename T>
Tensor<T> global_mean_pool(const Tensor<T>& h);

// relu(H W_self^T + b + mean_{u in N(v)} h_u W_neigh^T). The neighbour mean is
// A H / max(rowsum(A), 1), so isolated nodes get a zero neighbour term and
// soft (pooled) adjacencies are handled the same way.
template <typename T>
class SageLayer {
 public:
  SageLayer() = default;
  SageLayer(std::size_t in, std::size_t out, Rng& rng);

  Tensor<T> forward(const Tensor<T>& h, const Tensor<T>& adjacency) const;
  void collect(nn::TensorRegistry<T>& reg, const std::string& prefix) const;
  nn::Linear<T>& self_transform() { return self_; }
  nn::Linear<T>& neighbour_transform() { return neighbour_; }

 private:
  nn::Linear<T> self_;
  nn::Linear<T> neighbour_;
};

template <typename T>
Tensor<T> graphsage_forward(const Tensor<T>& h, const Tensor<T>& adjacency, const SageLayer<T>& layer) {
  return layer.forward(h, adjacency);
}

// Three SAGE layers, each followed by batchnorm over all nodes in the batch;
// the three outputs are concatenated and projected to `out` features.
template <typename T>
class SageStack {
 public:
  SageStack() = default;
  SageStack(std::size_t in, std::size_t hidden, std::size_t out, bool relu_output, Rng& rng);

  Tensor<T> forward(const Tensor<T>& h, const Tensor<T>& adjacency, bool train) const;
  void collect(nn::TensorRegistry<T>& reg, const std::string& prefix) const;

 private:
  std::vector<SageLayer<T>> layers_;
  std::vector<nn::BatchNorm1d<T>> norms_;
  nn::Linear<T> projection_;
  bool relu_output_ = false;
};

// ceil(0.25 * nodes).
std::size_t cluster_count(std::size_t nodes);

template <typename T>
struct DiffPoolOutput {
  Tensor<T> features;    // S^T Z, [B x n' x F]
  Tensor<T> adjacency;   // S^T A S, [B x n' x n']
  Tensor<T> assignment;  // S, [B x n x n'], rows sum to 1
  Tensor<T> link_loss;   // ||A - S S^T||_F / (B n^2)
  Tensor<T> entropy_loss;
};

template <typename T>
class DiffPoolLevel {
 public:
  DiffPoolLevel() = default;
  DiffPoolLevel(std::size_t features, std::size_t hidden, std::size_t clusters, Rng& rng);

  DiffPoolOutput<T> forward(const Tensor<T>& x, const Tensor<T>& adjacency, bool train) const;
  void collect(nn::TensorRegistry<T>& reg, const std::string& prefix) const;
  std::size_t clusters() const { return clusters_; }

 private:
  SageStack<T> embed_;
  SageStack<T> pool_;
  std::size_t clusters_ = 0;
};

template <typename T>
DiffPoolOutput<T> diffpool_level(const Tensor<T>& x, const Tensor<T>& adjacency,
                                 const DiffPoolLevel<T>& level, bool train) {
  return level.forward(x, adjacency, train);
}

template <typename T>
struct DiffPoolReadout {
  Tensor<T> pooled;  // [B x F], mean over the final clusters
  Tensor<T> link_loss;
  Tensor<T> entropy_loss;
  std::vector<std::size_t> node_counts;
};

// Two levels, nodes -> ceil(nodes/4) -> ceil(ceil(nodes/4)/4), then a mean pool.
template <typename T>
class DiffPoolStack {
 public:
  DiffPoolStack() = default;
  DiffPoolStack(std::size_t nodes, std::size_t features, Rng& rng, std::size_t levels = 2);

  DiffPoolReadout<T> forward(const Tensor<T>& x, const Tensor<T>& adjacency, bool train) const;
  void collect(nn::TensorRegistry<T>& reg, const std::string& prefix) const;
  const std::vector<DiffPoolLevel<T>>& levels() const { return levels_; }

 private:
  std::vector<DiffPoolLevel<T>> levels_;
};

}  // namespace stgnn::graph
