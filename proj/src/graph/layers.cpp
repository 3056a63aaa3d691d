#include "stgnn/graph/layers.hpp"

#include <cmath>

#include "stgnn/errors.hpp"

namespace stgnn::graph {

namespace {

template <typename T>
Tensor<T> as_batched(const Tensor<T>& t) {
  if (t.rank() == 3) return t;
  if (t.rank() == 2) return diff::reshape(t, {1, t.dim(0), t.dim(1)});
  throw DimensionError("expected a [N x F] or [B x N x F] tensor, got " + diff::shape_str(t.shape()));
}

template <typename T>
void check_graph_shapes(const Tensor<T>& h, const Tensor<T>& adjacency) {
  if (h.rank() != 3 || adjacency.rank() != 3 || adjacency.dim(0) != h.dim(0) ||
      adjacency.dim(1) != h.dim(1) || adjacency.dim(2) != h.dim(1)) {
    throw DimensionError("graph layer: features " + diff::shape_str(h.shape()) + " vs adjacency " +
                         diff::shape_str(adjacency.shape()));
  }
}

// [B x N x F] <-> [B*N x F] around a per-feature batchnorm.
template <typename T>
Tensor<T> node_batchnorm(const nn::BatchNorm1d<T>& bn, const Tensor<T>& h, bool train) {
  const auto shape = h.shape();
  Tensor<T> flat = diff::reshape(h, {shape[0] * shape[1], shape[2]});
  return diff::reshape(bn.forward(flat, train), shape);
}

}  // namespace

template <typename T>
void check_symmetric_adjacency(const Tensor<T>& adjacency, bool require_zero_diagonal) {
  if (adjacency.rank() != 3 || adjacency.dim(1) != adjacency.dim(2)) {
    throw DimensionError("adjacency must be [B x N x N], got " + diff::shape_str(adjacency.shape()));
  }
  const std::size_t batch = adjacency.dim(0), n = adjacency.dim(1);
  auto a = adjacency.data();
  for (std::size_t b = 0; b < batch; ++b) {
    const T* m = a.data() + b * n * n;
    for (std::size_t i = 0; i < n; ++i) {
      if (require_zero_diagonal && m[i * n + i] != T(0)) {
        throw ContractError("adjacency has a nonzero diagonal entry at node " + std::to_string(i));
      }
      for (std::size_t j = i + 1; j < n; ++j) {
        if (m[i * n + j] != m[j * n + i]) {
          throw ContractError("adjacency is not symmetric at (" + std::to_string(i) + ", " +
                              std::to_string(j) + ")");
        }
      }
    }
  }
}

template <typename T>
Tensor<T> normalized_adjacency(const Tensor<T>& adjacency) {
  check_symmetric_adjacency(adjacency, true);
  const std::size_t batch = adjacency.dim(0), n = adjacency.dim(1);
  auto a = adjacency.data();
  std::vector<T> out(batch * n * n);
  std::vector<T> inv_sqrt(n);
  for (std::size_t b = 0; b < batch; ++b) {
    const T* m = a.data() + b * n * n;
    for (std::size_t i = 0; i < n; ++i) {
      T degree = T(1);
      for (std::size_t j = 0; j < n; ++j) degree += m[i * n + j];
      inv_sqrt[i] = T(1) / std::sqrt(degree);
    }
    T* o = out.data() + b * n * n;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const T tilde = m[i * n + j] + (i == j ? T(1) : T(0));
        o[i * n + j] = inv_sqrt[i] * tilde * inv_sqrt[j];
      }
    }
  }
  return Tensor<T>::from({batch, n, n}, std::move(out));
}

template <typename T>
GcnLayer<T>::GcnLayer(std::size_t features, Rng& rng) : transform_(features, features, rng) {}

template <typename T>
Tensor<T> GcnLayer<T>::forward(const Tensor<T>& h, const Tensor<T>& propagation) const {
  check_graph_shapes(h, propagation);
  // (P H) W == P (H W); aggregating first keeps the bias outside the mix.
  return diff::relu(transform_.forward(diff::bmm(propagation, h)));
}

template <typename T>
void GcnLayer<T>::collect(nn::TensorRegistry<T>& reg, const std::string& prefix) const {
  transform_.collect(reg, prefix);
}

template <typename T>
Tensor<T> gcn_forward(const Tensor<T>& h, const Tensor<T>& adjacency, const GcnLayer<T>& layer) {
  const bool single = h.rank() == 2;
  Tensor<T> out = layer.forward(as_batched(h), normalized_adjacency(as_batched(adjacency)));
  return single ? diff::reshape(out, {h.dim(0), out.dim(2)}) : out;
}

template <typename T>
Tensor<T> global_mean_pool(const Tensor<T>& h) {
  if (h.rank() == 2) {
    Tensor<T> pooled = diff::mean_over_axis(h, 0);
    return diff::reshape(pooled, {1, h.dim(1)});
  }
  if (h.rank() != 3) throw DimensionError("global_mean_pool: expected rank 2 or 3");
  return diff::mean_over_axis(h, 1);
}

template <typename T>
SageLayer<T>::SageLayer(std::size_t in, std::size_t out, Rng& rng)
    : self_(in, out, rng, true), neighbour_(in, out, rng, false) {}

template <typename T>
Tensor<T> SageLayer<T>::forward(const Tensor<T>& h, const Tensor<T>& adjacency) const {
  check_graph_shapes(h, adjacency);
  Tensor<T> neighbour_mean = diff::bmm(diff::row_normalize_clamped(adjacency), h);
  return diff::relu(diff::add(self_.forward(h), neighbour_.forward(neighbour_mean)));
}

template <typename T>
void SageLayer<T>::collect(nn::TensorRegistry<T>& reg, const std::string& prefix) const {
  self_.collect(reg, prefix + ".self");
  neighbour_.collect(reg, prefix + ".neigh");
}

template <typename T>
SageStack<T>::SageStack(std::size_t in, std::size_t hidden, std::size_t out, bool relu_output,
                        Rng& rng)
    : relu_output_(relu_output) {
  std::size_t width = in;
  for (int l = 0; l < 3; ++l) {
    layers_.emplace_back(width, hidden, rng);
    norms_.emplace_back(hidden);
    width = hidden;
  }
  projection_ = nn::Linear<T>(3 * hidden, out, rng);
}

template <typename T>
Tensor<T> SageStack<T>::forward(const Tensor<T>& h, const Tensor<T>& adjacency, bool train) const {
  std::vector<Tensor<T>> skips;
  Tensor<T> x = h;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    x = node_batchnorm(norms_[l], layers_[l].forward(x, adjacency), train);
    skips.push_back(x);
  }
  Tensor<T> projected = projection_.forward(diff::concat_last(skips));
  return relu_output_ ? diff::relu(projected) : projected;
}

template <typename T>
void SageStack<T>::collect(nn::TensorRegistry<T>& reg, const std::string& prefix) const {
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    layers_[l].collect(reg, prefix + ".sage" + std::to_string(l));
    norms_[l].collect(reg, prefix + ".bn" + std::to_string(l));
  }
  projection_.collect(reg, prefix + ".proj");
}

std::size_t cluster_count(std::size_t nodes) { return (nodes + 3) / 4; }

template <typename T>
DiffPoolLevel<T>::DiffPoolLevel(std::size_t features, std::size_t hidden, std::size_t clusters,
                                Rng& rng)
    : clusters_(clusters) {
  if (clusters < 1) throw ConfigError("diffpool level needs at least one cluster");
  embed_ = SageStack<T>(features, hidden, features, true, rng);
  pool_ = SageStack<T>(features, hidden, clusters, false, rng);
}

template <typename T>
DiffPoolOutput<T> DiffPoolLevel<T>::forward(const Tensor<T>& x, const Tensor<T>& adjacency,
                                            bool train) const {
  check_graph_shapes(x, adjacency);
  DiffPoolOutput<T> out;
  Tensor<T> z = embed_.forward(x, adjacency, train);
  out.assignment = diff::softmax_rows(pool_.forward(x, adjacency, train));
  Tensor<T> st = diff::transpose_last(out.assignment);
  out.features = diff::bmm(st, z);
  out.adjacency = diff::bmm(diff::bmm(st, adjacency), out.assignment);

  const std::size_t batch = x.dim(0), n = x.dim(1);
  Tensor<T> gap = diff::sub(adjacency, diff::bmm(out.assignment, st));
  out.link_loss = diff::scale(diff::frobenius_norm(gap), T(1) / static_cast<T>(batch * n * n));
  out.entropy_loss = diff::row_entropy_mean(out.assignment);
  return out;
}

template <typename T>
void DiffPoolLevel<T>::collect(nn::TensorRegistry<T>& reg, const std::string& prefix) const {
  embed_.collect(reg, prefix + ".embed");
  pool_.collect(reg, prefix + ".pool");
}

template <typename T>
DiffPoolStack<T>::DiffPoolStack(std::size_t nodes, std::size_t features, Rng& rng,
                                std::size_t levels) {
  std::size_t n = nodes;
  for (std::size_t l = 0; l < levels; ++l) {
    const std::size_t next = cluster_count(n);
    if (next < 1 || next >= n) {
      throw ConfigError("diffpool: " + std::to_string(nodes) + " nodes cannot be coarsened over " +
                        std::to_string(levels) + " strictly shrinking levels");
    }
    levels_.emplace_back(features, features, next, rng);
    n = next;
  }
}

template <typename T>
DiffPoolReadout<T> DiffPoolStack<T>::forward(const Tensor<T>& x, const Tensor<T>& adjacency,
                                             bool train) const {
  DiffPoolReadout<T> out;
  Tensor<T> h = x;
  Tensor<T> a = adjacency;
  out.node_counts.push_back(x.dim(1));
  for (std::size_t l = 0; l < levels_.size(); ++l) {
    DiffPoolOutput<T> level = levels_[l].forward(h, a, train);
    h = level.features;
    a = level.adjacency;
    out.link_loss = l == 0 ? level.link_loss : diff::add(out.link_loss, level.link_loss);
    out.entropy_loss = l == 0 ? level.entropy_loss : diff::add(out.entropy_loss, level.entropy_loss);
    out.node_counts.push_back(h.dim(1));
  }
  out.pooled = global_mean_pool(h);
  return out;
}

template <typename T>
void DiffPoolStack<T>::collect(nn::TensorRegistry<T>& reg, const std::string& prefix) const {
  for (std::size_t l = 0; l < levels_.size(); ++l) {
    levels_[l].collect(reg, prefix + ".level" + std::to_string(l));
  }
}

#define STGNN_INSTANTIATE_GRAPH(T)                                                          \
  template void check_symmetric_adjacency(const Tensor<T>&, bool);                          \
  template Tensor<T> normalized_adjacency(const Tensor<T>&);                                \
  template class GcnLayer<T>;                                                               \
  template Tensor<T> gcn_forward(const Tensor<T>&, const Tensor<T>&, const GcnLayer<T>&);   \
  template Tensor<T> global_mean_pool(const Tensor<T>&);                                    \
  template class SageLayer<T>;                                                              \
  template class SageStack<T>;                                                              \
  template class DiffPoolLevel<T>;                                                          \
  template class DiffPoolStack<T>;

STGNN_INSTANTIATE_GRAPH(float)
STGNN_INSTANTIATE_GRAPH(double)

#undef STGNN_INSTANTIATE_GRAPH

}  // namespace stgnn::graph
