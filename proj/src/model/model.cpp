#include "stgnn/model/model.hpp"

#include <regex>

#include "stgnn/errors.hpp"

namespace stgnn::model {

namespace {

std::string format_percent(double percent) {
  if (percent == static_cast<double>(static_cast<long long>(percent))) {
    return std::to_string(static_cast<long long>(percent));
  }
  std::string s = std::to_string(percent);
  s.erase(s.find_last_not_of('0') + 1);
  return s;
}

}  // namespace

std::string ModelSpec::name() const {
  std::string out = pooling == Pooling::mean ? "mean" : "diff" + format_percent(threshold_percent);
  out += "_" + encoders::to_string(encoder);
  if (use_gcn) {
    out += "_GCN";
    if (pooling == Pooling::mean) out += format_percent(threshold_percent);
  }
  if (windows_per_scan == 16) out += "_64split";
  return out;
}

void ModelSpec::validate() const {
  if (!(threshold_percent > 0.0 && threshold_percent <= 100.0)) {
    throw ConfigError("threshold percent must lie in (0, 100]");
  }
  if (windows_per_scan == 0) throw ConfigError("windows_per_scan must be positive");
  if (embed_dim == 0) throw ConfigError("embedding width must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
}

ParsedModelName parse_model_name(const std::string& name) {
  static const std::regex pattern(R"(^(mean|diff)(\d+)?_(CNN|TCN)(_GCN(\d+)?)?(_(4|64)split)?$)");
  std::smatch m;
  if (!std::regex_match(name, m, pattern)) {
    throw ConfigError("unrecognized model name '" + name + "'");
  }
  ParsedModelName parsed;
  ModelSpec& spec = parsed.spec;
  spec.pooling = m[1] == "mean" ? Pooling::mean : Pooling::diffpool;
  spec.encoder = encoders::parse_encoder_kind(m[3]);
  spec.use_gcn = m[4].matched;
  if (spec.pooling == Pooling::mean) {
    if (m[2].matched) throw ConfigError("'" + name + "': mean models carry the threshold on _GCN");
    if (m[5].matched) {
      spec.threshold_percent = std::stod(m[5]);
      parsed.threshold_in_name = true;
    }
  } else {
    if (m[5].matched) throw ConfigError("'" + name + "': diff models carry the threshold on diff");
    if (m[2].matched) {
      spec.threshold_percent = std::stod(m[2]);
      parsed.threshold_in_name = true;
    }
  }
  if (m[7].matched) {
    spec.windows_per_scan = m[7] == "64" ? 16 : 1;
    parsed.windows_in_name = true;
  }
  spec.validate();
  return parsed;
}

template <typename T>
GraphBatch<T> make_batch(std::span<const prep::GraphSample> samples,
                         std::span<const std::size_t> indices, bool with_propagation) {
  if (indices.empty()) throw DimensionError("batch: no samples");
  const auto& first = samples[indices[0]].window.features;
  const std::size_t nodes = static_cast<std::size_t>(first.rows());
  const std::size_t length = static_cast<std::size_t>(first.cols());
  const std::size_t batch = indices.size();
  std::vector<T> features(batch * nodes * length);
  std::vector<T> adjacency(batch * nodes * nodes);
  GraphBatch<T> out;
  for (std::size_t b = 0; b < batch; ++b) {
    const auto& sample = samples[indices[b]];
    const auto& f = sample.window.features;
    if (static_cast<std::size_t>(f.rows()) != nodes || static_cast<std::size_t>(f.cols()) != length ||
        sample.adjacency.size() != nodes) {
      throw DimensionError("batch: sample " + std::to_string(indices[b]) + " is " +
                           std::to_string(f.rows()) + "x" + std::to_string(f.cols()) +
                           ", batch expects " + std::to_string(nodes) + "x" + std::to_string(length));
    }
    std::copy(f.data(), f.data() + nodes * length, features.begin() + b * nodes * length);
    const auto& dense = sample.adjacency.dense();
    std::copy(dense.begin(), dense.end(), adjacency.begin() + b * nodes * nodes);
    out.labels.push_back(static_cast<T>(sample.window.label));
  }
  out.features = Tensor<T>::from({batch, nodes, length}, std::move(features));
  out.adjacency = Tensor<T>::from({batch, nodes, nodes}, std::move(adjacency));
  if (with_propagation) out.propagation = graph::normalized_adjacency(out.adjacency);
  return out;
}

template <typename T>
Model<T>::Model(ModelSpec spec, InputGeometry geometry) : spec_(spec), geometry_(geometry) {
  spec_.validate();
  if (geometry_.nodes < 1) throw ConfigError("model needs at least one node");
  Rng rng(spec_.seed);
  encoders::EncoderSpec enc = spec_.encoder == EncoderKind::cnn
                                  ? encoders::EncoderSpec::cnn(geometry_.length)
                                  : encoders::EncoderSpec::tcn(geometry_.length, spec_.dropout);
  enc.embed_dim = spec_.embed_dim;
  encoder_ = encoders::make_encoder<T>(enc, rng);
  encoder_->collect(registry_, "encoder");
  if (spec_.use_gcn) {
    gcn_.emplace(spec_.embed_dim, rng);
    gcn_->collect(registry_, "gcn");
  }
  if (spec_.pooling == Pooling::diffpool) {
    diffpool_.emplace(geometry_.nodes, spec_.embed_dim, rng);
    diffpool_->collect(registry_, "diffpool");
  }
  head_ = nn::Linear<T>(spec_.embed_dim, 1, rng);
  head_.collect(registry_, "head");
}

template <typename T>
ModelOutput<T> Model<T>::forward(const GraphBatch<T>& batch, bool train, Rng& rng) const {
  const Tensor<T>& x = batch.features;
  if (x.rank() != 3 || x.dim(1) != geometry_.nodes || x.dim(2) != geometry_.length) {
    throw DimensionError("model built for " + std::to_string(geometry_.nodes) + " nodes x " +
                         std::to_string(geometry_.length) + " steps, batch is " +
                         diff::shape_str(x.shape()));
  }
  const std::size_t b = x.dim(0), n = x.dim(1);
  Tensor<T> h = encoder_->forward(diff::reshape(x, {b * n, 1, geometry_.length}), train, rng);
  h = diff::reshape(h, {b, n, spec_.embed_dim});
  if (gcn_) {
    const Tensor<T> propagation =
        batch.propagation.defined() ? batch.propagation : graph::normalized_adjacency(batch.adjacency);
    h = gcn_->forward(h, propagation);
  }

  ModelOutput<T> out;
  Tensor<T> pooled;
  if (diffpool_) {
    auto readout = diffpool_->forward(h, batch.adjacency, train);
    pooled = readout.pooled;
    out.link_loss = readout.link_loss;
    out.entropy_loss = readout.entropy_loss;
  } else {
    pooled = graph::global_mean_pool(h);
  }
  Tensor<T> logits = head_.forward(diff::dropout(pooled, spec_.dropout, train, rng));
  out.probabilities = diff::reshape(diff::sigmoid(logits), {b});
  return out;
}

template <typename T>
std::vector<std::vector<T>> Model<T>::snapshot() const {
  std::vector<std::vector<T>> state;
  for (const auto& p : registry_.parameters()) state.emplace_back(p.tensor.data().begin(), p.tensor.data().end());
  for (const auto& p : registry_.buffers()) state.emplace_back(p.tensor.data().begin(), p.tensor.data().end());
  return state;
}

template <typename T>
void Model<T>::restore(const std::vector<std::vector<T>>& state) {
  const std::size_t total = registry_.parameters().size() + registry_.buffers().size();
  if (state.size() != total) throw DimensionError("restore: snapshot has wrong tensor count");
  std::size_t i = 0;
  auto load = [&](const nn::NamedTensor<T>& named) {
    Tensor<T> t = named.tensor;
    if (state[i].size() != t.numel()) throw DimensionError("restore: size mismatch for " + named.name);
    std::copy(state[i].begin(), state[i].end(), t.data().begin());
    ++i;
  };
  for (const auto& p : registry_.parameters()) load(p);
  for (const auto& p : registry_.buffers()) load(p);
}

std::size_t parameter_count(const ModelSpec& spec, InputGeometry geometry) {
  return Model<float>(spec, geometry).parameter_count();
}

template <typename T>
std::vector<double> predict(const Model<T>& model, std::span<const prep::GraphSample> samples,
                            std::span<const std::size_t> indices, std::size_t batch_size) {
  diff::NoGradGuard no_grad;
  Rng unused(0);
  std::vector<double> out;
  out.reserve(indices.size());
  for (std::size_t start = 0; start < indices.size(); start += batch_size) {
    const std::size_t count = std::min(batch_size, indices.size() - start);
    auto batch = make_batch<T>(samples, indices.subspan(start, count), model.spec().use_gcn);
    auto result = model.forward(batch, false, unused);
    for (T p : result.probabilities.data()) out.push_back(static_cast<double>(p));
  }
  return out;
}

template GraphBatch<float> make_batch(std::span<const prep::GraphSample>, std::span<const std::size_t>, bool);
template GraphBatch<double> make_batch(std::span<const prep::GraphSample>, std::span<const std::size_t>, bool);
template class Model<float>;
template class Model<double>;
template std::vector<double> predict(const Model<float>&, std::span<const prep::GraphSample>,
                                     std::span<const std::size_t>, std::size_t);
template std::vector<double> predict(const Model<double>&, std::span<const prep::GraphSample>,
                                     std::span<const std::size_t>, std::size_t);

}  // namespace stgnn::model
