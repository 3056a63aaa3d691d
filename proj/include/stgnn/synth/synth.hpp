#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "stgnn/prep/io.hpp"
#include "stgnn/prep/types.hpp"

namespace stgnn::synth {

enum class SignalKind { covariance, spectral, both };

SignalKind parse_signal_kind(const std::string& text);
std::string to_string(SignalKind kind);

struct SynthConfig {
  std::size_t subjects = 40;
  std::size_t nodes = 20;
  std::size_t sessions = 4;
  std::size_t length = 160;
  double effect = 1.0;
  SignalKind kind = SignalKind::covariance;
  std::uint64_t seed = 0;
  // AR coefficient of the shared latent; it is scaled to unit variance.
  double latent_ar = 0.9;

  // ConfigError unless subjects is even and >= 2, nodes >= 2, length >= 32,
  // sessions >= 1, effect in [0, 1] and latent_ar in [0, 1).
  void validate() const;
};

inline constexpr double kBaseAr = 0.3;
inline constexpr double kSpectralShift = 0.3;
inline constexpr double kLatentGain = 1.0;

struct SynthDataset {
  std::vector<prep::SubjectRecord> subjects;
  std::vector<std::size_t> signal_nodes;  // ascending
};

// Subjects alternate between a seeded label order with exactly half positive.
// Values are rounded to float so both matrix formats store them exactly.
SynthDataset generate(const SynthConfig& config);

// The signal subset: round(nodes / 5) (at least 1) nodes fixed by the seed.
std::vector<std::size_t> signal_subset(std::size_t nodes, std::uint64_t seed);

// Writes manifest.json and sub-XXXX_ses-Y.{csv,bin}; returns the manifest path.
std::filesystem::path write_dataset(const SynthDataset& dataset, const std::filesystem::path& out_dir,
                                    prep::MatrixFormat format = prep::MatrixFormat::csv);

}  // namespace stgnn::synth
