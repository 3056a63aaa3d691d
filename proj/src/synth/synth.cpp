#include "stgnn/synth/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

#include "stgnn/errors.hpp"

namespace stgnn::synth {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

prep::TimeSeries draw_session(const SynthConfig& config, const std::vector<bool>& in_subset, bool positive,
                              std::mt19937_64& rng) {
  const std::size_t n = config.nodes, t_len = config.length;
  const bool covariance = positive && config.kind != SignalKind::spectral;
  const bool spectral = positive && config.kind != SignalKind::covariance;
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> ar(n, kBaseAr);
  for (std::size_t i = 0; i < n; ++i)
    if (spectral && in_subset[i]) ar[i] += kSpectralShift * config.effect;

  prep::TimeSeries x(t_len, n);
  std::vector<double> state(n);
  for (std::size_t i = 0; i < n; ++i) state[i] = normal(rng) / std::sqrt(1.0 - ar[i] * ar[i]);
  const double phi = config.latent_ar, innovation = std::sqrt(1.0 - phi * phi);
  double latent = normal(rng);
  for (std::size_t t = 0; t < t_len; ++t) {
    if (t > 0) latent = phi * latent + innovation * normal(rng);
    for (std::size_t i = 0; i < n; ++i) {
      if (t > 0) state[i] = ar[i] * state[i] + normal(rng);
      double v = state[i];
      if (covariance && in_subset[i]) v += kLatentGain * config.effect * latent;
      x(t, i) = static_cast<double>(static_cast<float>(v));
    }
  }
  return x;
}

}  // namespace

SignalKind parse_signal_kind(const std::string& text) {
  if (text == "covariance") return SignalKind::covariance;
  if (text == "spectral") return SignalKind::spectral;
  if (text == "both") return SignalKind::both;
  throw ConfigError("unknown signal kind '" + text + "' (covariance, spectral, both)");
}

std::string to_string(SignalKind kind) {
  switch (kind) {
    case SignalKind::spectral: return "spectral";
    case SignalKind::both: return "both";
    case SignalKind::covariance: break;
  }
  return "covariance";
}

void SynthConfig::validate() const {
  if (subjects < 2 || subjects % 2 != 0)
    throw ConfigError("synth: subject count must be even and at least 2, got " + std::to_string(subjects));
  if (nodes < 2) throw ConfigError("synth: need at least 2 nodes, got " + std::to_string(nodes));
  if (length < 32) throw ConfigError("synth: session length must be at least 32, got " + std::to_string(length));
  if (sessions < 1) throw ConfigError("synth: need at least one session");
  if (!(effect >= 0.0 && effect <= 1.0)) throw ConfigError("synth: effect must lie in [0, 1]");
  if (!(latent_ar >= 0.0 && latent_ar < 1.0)) throw ConfigError("synth: latent AR coefficient must lie in [0, 1)");
}

std::vector<std::size_t> signal_subset(std::size_t nodes, std::uint64_t seed) {
  const std::size_t k = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(nodes / 5.0)));
  std::vector<std::size_t> order(nodes);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(splitmix64(seed ^ 0x5167a1ULL));
  std::shuffle(order.begin(), order.end(), rng);
  order.resize(k);
  std::sort(order.begin(), order.end());
  return order;
}

SynthDataset generate(const SynthConfig& config) {
  config.validate();
  SynthDataset out;
  out.signal_nodes = signal_subset(config.nodes, config.seed);
  std::vector<bool> in_subset(config.nodes, false);
  for (auto i : out.signal_nodes) in_subset[i] = true;

  std::vector<int> labels(config.subjects, 0);
  std::fill(labels.begin() + config.subjects / 2, labels.end(), 1);
  std::mt19937_64 label_rng(splitmix64(config.seed ^ 0x1abe15ULL));
  std::shuffle(labels.begin(), labels.end(), label_rng);

  for (std::size_t s = 0; s < config.subjects; ++s) {
    prep::SubjectRecord record;
    char id[32];
    std::snprintf(id, sizeof id, "sub-%04zu", s + 1);
    record.subject_id = id;
    record.label = labels[s];
    std::mt19937_64 rng(splitmix64(config.seed + 0x100000001b3ULL * (s + 1)));
    for (std::size_t k = 0; k < config.sessions; ++k)
      record.sessions.push_back(draw_session(config, in_subset, record.label == 1, rng));
    out.subjects.push_back(std::move(record));
  }
  return out;
}

std::filesystem::path write_dataset(const SynthDataset& dataset, const std::filesystem::path& out_dir,
                                    prep::MatrixFormat format) {
  std::filesystem::create_directories(out_dir);
  prep::Manifest manifest;
  manifest.version = prep::kManifestVersion;
  manifest.n_nodes = dataset.subjects.empty() ? 0 : dataset.subjects.front().node_count();
  const char* ext = format == prep::MatrixFormat::csv ? "csv" : "bin";
  for (const auto& subject : dataset.subjects) {
    prep::ManifestSubject entry{subject.subject_id, subject.label, {}};
    for (std::size_t k = 0; k < subject.sessions.size(); ++k) {
      const std::string name = subject.subject_id + "_ses-" + std::to_string(k + 1) + "." + ext;
      if (format == prep::MatrixFormat::csv) prep::write_matrix_csv(subject.sessions[k], out_dir / name);
      else prep::write_matrix_binary(subject.sessions[k], out_dir / name);
      entry.sessions.push_back(name);
    }
    manifest.subjects.push_back(std::move(entry));
  }
  const auto path = out_dir / "manifest.json";
  prep::write_manifest(manifest, path);
  return path;
}

}  // namespace stgnn::synth
