#pragma once

#include <cstddef>
#include <random>
#include <vector>

#include "stgnn/diff/tensor.hpp"

namespace stgnn::diff {

using Rng = std::mt19937_64;

// Padding and sampling pattern of a 1D convolution.
struct Conv1dGeometry {
  std::size_t stride = 1;
  std::size_t pad_left = 0;
  std::size_t pad_right = 0;
  std::size_t dilation = 1;

  static Conv1dGeometry symmetric(std::size_t padding, std::size_t stride = 1,
                                  std::size_t dilation = 1);
  // All (kernel - 1) * dilation padding goes on the left.
  static Conv1dGeometry causal(std::size_t kernel, std::size_t stride = 1,
                               std::size_t dilation = 1);

  // floor((L + pad - dilation*(K-1) - 1) / stride) + 1; GeometryError when it
  // would not be positive.
  std::size_t output_length(std::size_t length, std::size_t kernel) const;
};

// Elementwise, identical shapes.
template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> scale(const Tensor<T>& a, T factor);
template <typename T> Tensor<T> square(const Tensor<T>& a);
template <typename T> Tensor<T> relu(const Tensor<T>& a);
template <typename T> Tensor<T> sigmoid(const Tensor<T>& a);

// Inverted dropout: zeroes with probability `rate` and rescales survivors by
// 1/(1-rate). Identity when !train or rate == 0.
template <typename T>
Tensor<T> dropout(const Tensor<T>& a, double rate, bool train, Rng& rng);

// Softmax over the last axis.
template <typename T> Tensor<T> softmax_rows(const Tensor<T>& a);

template <typename T> Tensor<T> sum_all(const Tensor<T>& a);
template <typename T> Tensor<T> mean_all(const Tensor<T>& a);
template <typename T> Tensor<T> mean_over_axis(const Tensor<T>& a, std::size_t axis);

template <typename T> Tensor<T> reshape(const Tensor<T>& a, Shape shape);
// Keeps the leading axis, collapses the rest.
template <typename T> Tensor<T> flatten(const Tensor<T>& a);
// Swaps the two trailing axes of a rank-2 or rank-3 tensor.
template <typename T> Tensor<T> transpose_last(const Tensor<T>& a);
template <typename T> Tensor<T> concat_last(const std::vector<Tensor<T>>& parts);

// [m x k] . [k x n]
template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
// [B x m x k] . [B x k x n]
template <typename T> Tensor<T> bmm(const Tensor<T>& a, const Tensor<T>& b);

// x[..., in] -> x W^T + bias, W is [out x in]. `bias` may be undefined.
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);

// input [B x C_in x L], weight [C_out x C_in x K], bias [C_out] (may be undefined).
template <typename T>
Tensor<T> conv1d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                 const Conv1dGeometry& geometry);

// Per-channel normalization of [B x C x L] (or [R x C]) over every axis but C.
// Train mode uses batch statistics and updates the running buffers in place.
template <typename T>
Tensor<T> batchnorm1d(const Tensor<T>& input, const Tensor<T>& gamma, const Tensor<T>& beta,
                      Tensor<T>& running_mean, Tensor<T>& running_var, bool train, T epsilon,
                      T momentum);

// gain[o] * direction[o, ...] / (||direction[o, ...]|| + 1e-12)
template <typename T>
Tensor<T> weight_norm(const Tensor<T>& direction, const Tensor<T>& gain);

// Divides each row of a [B x n x n] matrix by max(row sum, 1).
template <typename T> Tensor<T> row_normalize_clamped(const Tensor<T>& a);

// sqrt(sum(a^2)) as a scalar.
template <typename T> Tensor<T> frobenius_norm(const Tensor<T>& a);
// Mean over rows of -sum_j s_ij log(s_ij + 1e-15), last axis as the row.
template <typename T> Tensor<T> row_entropy_mean(const Tensor<T>& s);

// Mean binary cross-entropy with p clamped to [1e-7, 1 - 1e-7].
template <typename T>
Tensor<T> bce_loss(const Tensor<T>& probabilities, const std::vector<T>& labels);

}  // namespace stgnn::diff
