#include "stgnn/diff/layers.hpp"

#include <cmath>

namespace stgnn::nn {

namespace {

template <typename T>
Tensor<T> normal_tensor(diff::Shape shape, double stddev, Rng& rng) {
  std::normal_distribution<double> normal(0.0, stddev);
  std::vector<T> values(diff::shape_numel(shape));
  for (auto& v : values) v = static_cast<T>(normal(rng));
  return Tensor<T>::from(std::move(shape), std::move(values), true);
}

constexpr double kConvInitStd = 0.01;

}  // namespace

template <typename T>
Linear<T>::Linear(std::size_t in, std::size_t out, Rng& rng, bool with_bias) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  std::uniform_real_distribution<double> uniform(-bound, bound);
  std::vector<T> w(in * out);
  for (auto& v : w) v = static_cast<T>(uniform(rng));
  weight = Tensor<T>::from({out, in}, std::move(w), true);
  if (with_bias) bias = Tensor<T>::zeros({out}, true);
}

template <typename T>
void Linear<T>::collect(TensorRegistry<T>& reg, const std::string& prefix) const {
  reg.add_parameter(prefix + ".weight", weight);
  if (bias.defined()) reg.add_parameter(prefix + ".bias", bias);
}

template <typename T>
Conv1d<T>::Conv1d(std::size_t in, std::size_t out, std::size_t kernel, diff::Conv1dGeometry geo,
                  Rng& rng)
    : weight(normal_tensor<T>({out, in, kernel}, kConvInitStd, rng)),
      bias(Tensor<T>::zeros({out}, true)),
      geometry(geo) {}

template <typename T>
void Conv1d<T>::collect(TensorRegistry<T>& reg, const std::string& prefix) const {
  reg.add_parameter(prefix + ".weight", weight);
  reg.add_parameter(prefix + ".bias", bias);
}

template <typename T>
WeightNormConv1d<T>::WeightNormConv1d(std::size_t in, std::size_t out, std::size_t kernel,
                                      diff::Conv1dGeometry geo, Rng& rng)
    : direction(normal_tensor<T>({out, in, kernel}, kConvInitStd, rng)),
      bias(Tensor<T>::zeros({out}, true)),
      geometry(geo) {
  std::vector<T> norms(out);
  const std::size_t width = in * kernel;
  auto v = direction.data();
  for (std::size_t o = 0; o < out; ++o) {
    T s = 0;
    for (std::size_t j = 0; j < width; ++j) s += v[o * width + j] * v[o * width + j];
    norms[o] = std::sqrt(s);
  }
  gain = Tensor<T>::from({out}, std::move(norms), true);
}

template <typename T>
void WeightNormConv1d<T>::collect(TensorRegistry<T>& reg, const std::string& prefix) const {
  reg.add_parameter(prefix + ".direction", direction);
  reg.add_parameter(prefix + ".gain", gain);
  reg.add_parameter(prefix + ".bias", bias);
}

template <typename T>
BatchNorm1d<T>::BatchNorm1d(std::size_t channels)
    : gamma(Tensor<T>::full({channels}, T(1), true)),
      beta(Tensor<T>::zeros({channels}, true)),
      running_mean(Tensor<T>::zeros({channels})),
      running_var(Tensor<T>::full({channels}, T(1))) {}

template <typename T>
Tensor<T> BatchNorm1d<T>::forward(const Tensor<T>& x, bool train) const {
  Tensor<T> mean = running_mean;
  Tensor<T> var = running_var;
  return diff::batchnorm1d(x, gamma, beta, mean, var, train, epsilon, momentum);
}

template <typename T>
void BatchNorm1d<T>::collect(TensorRegistry<T>& reg, const std::string& prefix) const {
  reg.add_parameter(prefix + ".gamma", gamma);
  reg.add_parameter(prefix + ".beta", beta);
  reg.add_buffer(prefix + ".running_mean", running_mean);
  reg.add_buffer(prefix + ".running_var", running_var);
}

template struct Linear<float>;
template struct Linear<double>;
template struct Conv1d<float>;
template struct Conv1d<double>;
template struct WeightNormConv1d<float>;
template struct WeightNormConv1d<double>;
template struct BatchNorm1d<float>;
template struct BatchNorm1d<double>;

}  // namespace stgnn::nn
