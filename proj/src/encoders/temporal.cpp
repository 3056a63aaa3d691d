#include "stgnn/encoders/temporal.hpp"

#include "stgnn/errors.hpp"

namespace stgnn::encoders {

std::string to_string(EncoderKind kind) { return kind == EncoderKind::cnn ? "CNN" : "TCN"; }

EncoderKind parse_encoder_kind(const std::string& text) {
  if (text == "CNN" || text == "cnn") return EncoderKind::cnn;
  if (text == "TCN" || text == "tcn") return EncoderKind::tcn;
  throw ConfigError("unknown encoder kind '" + text + "'");
}

EncoderSpec EncoderSpec::cnn(std::size_t input_length) {
  EncoderSpec spec;
  spec.input_length = input_length;
  return spec;
}

EncoderSpec EncoderSpec::tcn(std::size_t input_length, double dropout) {
  EncoderSpec spec;
  spec.kind = EncoderKind::tcn;
  spec.dilations = {1, 2, 4, 8};
  spec.input_length = input_length;
  spec.dropout = dropout;
  return spec;
}

diff::Conv1dGeometry EncoderSpec::geometry(std::size_t layer) const {
  if (kind == EncoderKind::tcn) return diff::Conv1dGeometry::causal(kernel, stride, dilations.at(layer));
  return diff::Conv1dGeometry::symmetric(padding, stride, dilations.at(layer));
}

std::vector<std::size_t> EncoderSpec::layer_lengths() const {
  if (channels.size() < 2 || dilations.size() != layer_count()) {
    throw ConfigError("encoder spec: channel and dilation lists disagree");
  }
  const std::size_t minimum = std::size_t{1} << layer_count();
  if (input_length < minimum) {
    throw GeometryError("encoder needs at least " + std::to_string(minimum) +
                        " timesteps, got " + std::to_string(input_length));
  }
  std::vector<std::size_t> lengths;
  std::size_t length = input_length;
  for (std::size_t l = 0; l < layer_count(); ++l) {
    length = geometry(l).output_length(length, kernel);
    lengths.push_back(length);
  }
  return lengths;
}

std::size_t EncoderSpec::flattened_width() const { return channels.back() * layer_lengths().back(); }

template <typename T>
void TemporalEncoder<T>::check_input(const Tensor<T>& x) const {
  if (x.rank() != 3 || x.dim(1) != spec_.channels.front() || x.dim(2) != spec_.input_length) {
    throw DimensionError("encoder expects [rows x " + std::to_string(spec_.channels.front()) +
                         " x " + std::to_string(spec_.input_length) + "], got " +
                         diff::shape_str(x.shape()));
  }
}

template <typename T>
CnnEncoder<T>::CnnEncoder(EncoderSpec spec, Rng& rng) : TemporalEncoder<T>(std::move(spec)) {
  const EncoderSpec& s = this->spec();
  const std::size_t flat = s.flattened_width();
  for (std::size_t l = 0; l < s.layer_count(); ++l) {
    convs_.emplace_back(s.channels[l], s.channels[l + 1], s.kernel, s.geometry(l), rng);
    norms_.emplace_back(s.channels[l + 1]);
  }
  projection_ = nn::Linear<T>(flat, s.embed_dim, rng);
}

template <typename T>
Tensor<T> CnnEncoder<T>::forward(const Tensor<T>& x, bool train, Rng&) const {
  this->check_input(x);
  Tensor<T> h = x;
  for (std::size_t l = 0; l < convs_.size(); ++l) {
    h = diff::relu(norms_[l].forward(convs_[l].forward(h), train));
  }
  return projection_.forward(diff::flatten(h));
}

template <typename T>
void CnnEncoder<T>::collect(nn::TensorRegistry<T>& reg, const std::string& prefix) const {
  for (std::size_t l = 0; l < convs_.size(); ++l) {
    convs_[l].collect(reg, prefix + ".conv" + std::to_string(l));
    norms_[l].collect(reg, prefix + ".bn" + std::to_string(l));
  }
  projection_.collect(reg, prefix + ".proj");
}

template <typename T>
TcnEncoder<T>::TcnEncoder(EncoderSpec spec, Rng& rng) : TemporalEncoder<T>(std::move(spec)) {
  const EncoderSpec& s = this->spec();
  const std::size_t flat = s.flattened_width();
  for (std::size_t l = 0; l < s.layer_count(); ++l) {
    convs_.emplace_back(s.channels[l], s.channels[l + 1], s.kernel, s.geometry(l), rng);
    residuals_.emplace_back(s.channels[l], s.channels[l + 1], 1,
                            diff::Conv1dGeometry{s.stride, 0, 0, 1}, rng);
  }
  projection_ = nn::Linear<T>(flat, s.embed_dim, rng);
}

template <typename T>
typename TcnEncoder<T>::Trace TcnEncoder<T>::trace(const Tensor<T>& x, bool train, Rng& rng) const {
  this->check_input(x);
  Trace out;
  Tensor<T> h = x;
  for (std::size_t l = 0; l < convs_.size(); ++l) {
    Tensor<T> main = diff::dropout(diff::relu(convs_[l].forward(h)), this->spec().dropout, train, rng);
    h = diff::relu(diff::add(main, residuals_[l].forward(h)));
    out.main_path.push_back(main);
    out.block_output.push_back(h);
  }
  out.embedding = projection_.forward(diff::flatten(h));
  return out;
}

template <typename T>
Tensor<T> TcnEncoder<T>::forward(const Tensor<T>& x, bool train, Rng& rng) const {
  return trace(x, train, rng).embedding;
}

template <typename T>
void TcnEncoder<T>::collect(nn::TensorRegistry<T>& reg, const std::string& prefix) const {
  for (std::size_t l = 0; l < convs_.size(); ++l) {
    convs_[l].collect(reg, prefix + ".conv" + std::to_string(l));
    residuals_[l].collect(reg, prefix + ".skip" + std::to_string(l));
  }
  projection_.collect(reg, prefix + ".proj");
}

template <typename T>
std::unique_ptr<TemporalEncoder<T>> make_encoder(const EncoderSpec& spec, Rng& rng) {
  if (spec.kind == EncoderKind::cnn) return std::make_unique<CnnEncoder<T>>(spec, rng);
  return std::make_unique<TcnEncoder<T>>(spec, rng);
}

template class TemporalEncoder<float>;
template class TemporalEncoder<double>;
template class CnnEncoder<float>;
template class CnnEncoder<double>;
template class TcnEncoder<float>;
template class TcnEncoder<double>;
template std::unique_ptr<TemporalEncoder<float>> make_encoder(const EncoderSpec&, Rng&);
template std::unique_ptr<TemporalEncoder<double>> make_encoder(const EncoderSpec&, Rng&);

}  // namespace stgnn::encoders
