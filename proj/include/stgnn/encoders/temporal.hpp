#pragma once

#include <memory>
#include <string>
#include <vector>

#include "stgnn/diff/layers.hpp"

namespace stgnn::encoders {

using diff::Rng;
using diff::Tensor;

enum class EncoderKind { cnn, tcn };

std::string to_string(EncoderKind kind);
EncoderKind parse_encoder_kind(const std::string& text);

struct EncoderSpec {
  EncoderKind kind = EncoderKind::cnn;
  std::size_t kernel = 7;
  std::vector<std::size_t> channels{1, 8, 16, 32, 64};
  std::size_t stride = 2;
  // Symmetric padding for the CNN; the TCN pads causally instead.
  std::size_t padding = 3;
  std::vector<std::size_t> dilations{1, 1, 1, 1};
  std::size_t embed_dim = 256;
  std::size_t input_length = 0;
  double dropout = 0.0;

  static EncoderSpec cnn(std::size_t input_length);
  static EncoderSpec tcn(std::size_t input_length, double dropout = 0.0);

  std::size_t layer_count() const { return channels.size() - 1; }
  diff::Conv1dGeometry geometry(std::size_t layer) const;
  // Output length after each convolutional layer; GeometryError when the
  // input is shorter than 2^layers.
  std::vector<std::size_t> layer_lengths() const;
  std::size_t flattened_width() const;
};

// Maps [rows x 1 x T] node series to [rows x embed_dim].
template <typename T>
class TemporalEncoder {
 public:
  virtual ~TemporalEncoder() = default;
  virtual Tensor<T> forward(const Tensor<T>& x, bool train, Rng& rng) const = 0;
  virtual void collect(nn::TensorRegistry<T>& reg, const std::string& prefix) const = 0;
  const EncoderSpec& spec() const { return spec_; }

 protected:
  explicit TemporalEncoder(EncoderSpec spec) : spec_(std::move(spec)) {}
  void check_input(const Tensor<T>& x) const;

 private:
  EncoderSpec spec_;
};

// Four conv -> batchnorm -> relu blocks, flatten (channel-major), linear.
template <typename T>
class CnnEncoder final : public TemporalEncoder<T> {
 public:
  CnnEncoder(EncoderSpec spec, Rng& rng);
  Tensor<T> forward(const Tensor<T>& x, bool train, Rng& rng) const override;
  void collect(nn::TensorRegistry<T>& reg, const std::string& prefix) const override;

 private:
  std::vector<nn::Conv1d<T>> convs_;
  std::vector<nn::BatchNorm1d<T>> norms_;
  nn::Linear<T> projection_;
};

// Four strided causal blocks:
//   relu(dropout(relu(wn_conv(x))) + conv1x1_stride(x))
// with dilations 1, 2, 4, 8, then flatten and linear.
template <typename T>
class TcnEncoder final : public TemporalEncoder<T> {
 public:
  struct Trace {
    std::vector<Tensor<T>> main_path;     // per block, before the residual sum
    std::vector<Tensor<T>> block_output;  // per block, after it
    Tensor<T> embedding;
  };

  TcnEncoder(EncoderSpec spec, Rng& rng);
  Tensor<T> forward(const Tensor<T>& x, bool train, Rng& rng) const override;
  Trace trace(const Tensor<T>& x, bool train, Rng& rng) const;
  void collect(nn::TensorRegistry<T>& reg, const std::string& prefix) const override;

 private:
  std::vector<nn::WeightNormConv1d<T>> convs_;
  std::vector<nn::Conv1d<T>> residuals_;
  nn::Linear<T> projection_;
};

template <typename T>
std::unique_ptr<TemporalEncoder<T>> make_encoder(const EncoderSpec& spec, Rng& rng);

template <typename T>
Tensor<T> cnn_encode(const CnnEncoder<T>& encoder, const Tensor<T>& x, bool train, Rng& rng) {
  return encoder.forward(x, train, rng);
}

template <typename T>
Tensor<T> tcn_encode(const TcnEncoder<T>& encoder, const Tensor<T>& x, bool train, Rng& rng) {
  return encoder.forward(x, train, rng);
}

}  // namespace stgnn::encoders
