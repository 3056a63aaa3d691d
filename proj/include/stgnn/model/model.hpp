#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stgnn/diff/layers.hpp"
#include "stgnn/encoders/temporal.hpp"
#include "stgnn/graph/layers.hpp"
#include "stgnn/prep/types.hpp"

namespace stgnn::model {

using diff::Rng;
using diff::Tensor;
using encoders::EncoderKind;

enum class Pooling { mean, diffpool };

struct ModelSpec {
  EncoderKind encoder = EncoderKind::cnn;
  bool use_gcn = false;
  Pooling pooling = Pooling::mean;
  double threshold_percent = 5.0;
  std::size_t windows_per_scan = 1;
  std::size_t embed_dim = 256;
  double dropout = 0.0;
  std::uint64_t seed = 0;

  // Table naming: mean_CNN, mean_CNN_GCN5, diff20_TCN_GCN, ..._64split.
  std::string name() const;
  // ConfigError on an illegal combination.
  void validate() const;
};

struct ParsedModelName {
  ModelSpec spec;
  bool threshold_in_name = false;
  bool windows_in_name = false;
};

ParsedModelName parse_model_name(const std::string& name);

// Nodes per graph and timesteps per node series.
struct InputGeometry {
  std::size_t nodes = 0;
  std::size_t length = 0;
};

template <typename T>
struct GraphBatch {
  Tensor<T> features;     // [B x N x T]
  Tensor<T> adjacency;    // [B x N x N], binary
  Tensor<T> propagation;  // [B x N x N], normalized operator (GCN models only)
  std::vector<T> labels;

  std::size_t size() const { return labels.size(); }
};

// Stacks samples[indices] into a batch; DimensionError if they disagree on
// node count or length.
template <typename T>
GraphBatch<T> make_batch(std::span<const prep::GraphSample> samples,
                         std::span<const std::size_t> indices, bool with_propagation);

template <typename T>
struct ModelOutput {
  Tensor<T> probabilities;  // [B]
  Tensor<T> link_loss;      // diffpool only
  Tensor<T> entropy_loss;   // diffpool only
};

// encoder per node -> optional GCN -> mean pool | two-level DiffPool -> head
// (dropout, linear 256 -> 1, sigmoid).
template <typename T>
class Model {
 public:
  Model(ModelSpec spec, InputGeometry geometry);

  ModelOutput<T> forward(const GraphBatch<T>& batch, bool train, Rng& rng) const;

  const ModelSpec& spec() const { return spec_; }
  const InputGeometry& geometry() const { return geometry_; }
  const nn::TensorRegistry<T>& registry() const { return registry_; }
  std::vector<Tensor<T>> parameters() const { return registry_.parameter_tensors(); }
  std::size_t parameter_count() const { return registry_.parameter_count(); }

  // Copies of every parameter and buffer, in registry order.
  std::vector<std::vector<T>> snapshot() const;
  void restore(const std::vector<std::vector<T>>& state);

 private:
  ModelSpec spec_;
  InputGeometry geometry_;
  std::unique_ptr<encoders::TemporalEncoder<T>> encoder_;
  std::optional<graph::GcnLayer<T>> gcn_;
  std::optional<graph::DiffPoolStack<T>> diffpool_;
  nn::Linear<T> head_;
  nn::TensorRegistry<T> registry_;
};

template <typename T>
std::size_t parameter_count(const Model<T>& model) {
  return model.parameter_count();
}

// Builds a throwaway float model and counts its trainable scalars.
std::size_t parameter_count(const ModelSpec& spec, InputGeometry geometry);

template <typename T>
Tensor<T> bce_loss(const Tensor<T>& probabilities, const std::vector<T>& labels) {
  return diff::bce_loss(probabilities, labels);
}

// Eval-mode probabilities for every sample, batched internally.
template <typename T>
std::vector<double> predict(const Model<T>& model, std::span<const prep::GraphSample> samples,
                            std::span<const std::size_t> indices, std::size_t batch_size = 256);

}  // namespace stgnn::model
