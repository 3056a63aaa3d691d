#pragma once

#include <string>
#include <vector>

#include "stgnn/diff/ops.hpp"
#include "stgnn/diff/tensor.hpp"

namespace stgnn::nn {

using diff::Rng;
using diff::Tensor;

template <typename T>
struct NamedTensor {
  std::string name;
  Tensor<T> tensor;
};

// Collects trainable parameters and non-trainable state buffers (batchnorm
// running statistics) under dotted names.
template <typename T>
class TensorRegistry {
 public:
  void add_parameter(const std::string& name, const Tensor<T>& t) { parameters_.push_back({name, t}); }
  void add_buffer(const std::string& name, const Tensor<T>& t) { buffers_.push_back({name, t}); }

  const std::vector<NamedTensor<T>>& parameters() const { return parameters_; }
  const std::vector<NamedTensor<T>>& buffers() const { return buffers_; }

  std::vector<Tensor<T>> parameter_tensors() const {
    std::vector<Tensor<T>> out;
    for (const auto& p : parameters_) out.push_back(p.tensor);
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : parameters_) n += p.tensor.numel();
    return n;
  }

 private:
  std::vector<NamedTensor<T>> parameters_;
  std::vector<NamedTensor<T>> buffers_;
};

// Weight [out x in] ~ U(-1/sqrt(in), 1/sqrt(in)), zero bias.
template <typename T>
struct Linear {
  Tensor<T> weight;
  Tensor<T> bias;

  Linear() = default;
  Linear(std::size_t in, std::size_t out, Rng& rng, bool with_bias = true);

  Tensor<T> forward(const Tensor<T>& x) const { return diff::linear(x, weight, bias); }
  void collect(TensorRegistry<T>& reg, const std::string& prefix) const;
};

// Weight [out x in x K] ~ N(0, 0.01^2), zero bias.
template <typename T>
struct Conv1d {
  Tensor<T> weight;
  Tensor<T> bias;
  diff::Conv1dGeometry geometry;

  Conv1d() = default;
  Conv1d(std::size_t in, std::size_t out, std::size_t kernel, diff::Conv1dGeometry geo, Rng& rng);

  Tensor<T> forward(const Tensor<T>& x) const { return diff::conv1d(x, weight, bias, geometry); }
  void collect(TensorRegistry<T>& reg, const std::string& prefix) const;
};

// Conv1d whose kernel is gain * direction / ||direction|| per output channel.
// The gain starts at the initial direction norm, so the first effective
// kernel equals the sampled direction.
template <typename T>
struct WeightNormConv1d {
  Tensor<T> direction;
  Tensor<T> gain;
  Tensor<T> bias;
  diff::Conv1dGeometry geometry;

  WeightNormConv1d() = default;
  WeightNormConv1d(std::size_t in, std::size_t out, std::size_t kernel, diff::Conv1dGeometry geo,
                   Rng& rng);

  Tensor<T> effective_weight() const { return diff::weight_norm(direction, gain); }
  Tensor<T> forward(const Tensor<T>& x) const {
    return diff::conv1d(x, effective_weight(), bias, geometry);
  }
  void collect(TensorRegistry<T>& reg, const std::string& prefix) const;
};

template <typename T>
struct BatchNorm1d {
  Tensor<T> gamma;
  Tensor<T> beta;
  // Mutable through the shared handle even when the layer is const.
  Tensor<T> running_mean;
  Tensor<T> running_var;
  T epsilon = T(1e-5);
  T momentum = T(0.1);

  BatchNorm1d() = default;
  explicit BatchNorm1d(std::size_t channels);

  Tensor<T> forward(const Tensor<T>& x, bool train) const;
  void collect(TensorRegistry<T>& reg, const std::string& prefix) const;
};

}  // namespace stgnn::nn
