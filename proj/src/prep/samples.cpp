#include "stgnn/prep/samples.hpp"

#include <algorithm>
#include <random>

#include "stgnn/errors.hpp"
#include "stgnn/prep/connectivity.hpp"
#include "stgnn/prep/scaling.hpp"

namespace stgnn::prep {

std::vector<SampleWindow> window_split(const SubjectRecord& record, std::size_t windows_per_scan,
                                       bool scale) {
  if (windows_per_scan == 0) throw ConfigError("windows_per_scan must be positive");
  std::vector<SampleWindow> out;
  const std::size_t nodes = record.node_count();
  for (std::size_t scan = 0; scan < record.sessions.size(); ++scan) {
    const TimeSeries& session = record.sessions[scan];
    if (static_cast<std::size_t>(session.cols()) != nodes) {
      throw DimensionError("subject " + record.subject_id + ": sessions disagree on node count");
    }
    const auto length = static_cast<std::size_t>(session.rows());
    if (length % windows_per_scan != 0) {
      throw ConfigError("subject " + record.subject_id + " session " + std::to_string(scan) +
                        ": length " + std::to_string(length) + " not divisible into " +
                        std::to_string(windows_per_scan) + " windows");
    }
    const std::size_t width = length / windows_per_scan;
    for (std::size_t w = 0; w < windows_per_scan; ++w) {
      SampleWindow window;
      window.subject_id = record.subject_id;
      window.scan_index = scan;
      window.window_index = w;
      window.label = record.label;
      window.features.resize(static_cast<Eigen::Index>(nodes), static_cast<Eigen::Index>(width));
      std::vector<double> series(width);
      for (std::size_t node = 0; node < nodes; ++node) {
        for (std::size_t t = 0; t < width; ++t) series[t] = session(w * width + t, node);
        if (scale) series = robust_scale(series);
        for (std::size_t t = 0; t < width; ++t) {
          window.features(node, t) = static_cast<float>(series[t]);
        }
      }
      out.push_back(std::move(window));
    }
  }
  return out;
}

std::vector<SubjectRecord> balance_by_subject(const std::vector<SubjectRecord>& records,
                                              std::uint64_t seed) {
  std::vector<std::size_t> by_class[2];
  for (std::size_t i = 0; i < records.size(); ++i) {
    const int label = records[i].label;
    if (label != 0 && label != 1) throw ContractError("labels must be 0 or 1");
    by_class[label].push_back(i);
  }
  if (by_class[0].empty() || by_class[1].empty()) {
    throw ContractError("balance_by_subject: one class has no subjects");
  }
  const int dominant = by_class[1].size() > by_class[0].size() ? 1 : 0;
  const std::size_t target = by_class[1 - dominant].size();
  std::vector<bool> keep(records.size(), true);
  if (by_class[dominant].size() > target) {
    std::vector<std::size_t> candidates = by_class[dominant];
    std::mt19937_64 rng(seed);
    std::shuffle(candidates.begin(), candidates.end(), rng);
    for (std::size_t i = target; i < candidates.size(); ++i) keep[candidates[i]] = false;
  }
  std::vector<SubjectRecord> out;
  out.reserve(2 * target);
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (keep[i]) out.push_back(records[i]);
  }
  return out;
}

GraphSample make_graph_sample(SampleWindow window, double threshold_percent) {
  GraphSample sample;
  const Eigen::MatrixXd series = window.features.transpose().cast<double>();
  const Eigen::MatrixXd correlation = covariance_to_correlation(ledoit_wolf_covariance(series));
  sample.adjacency = threshold_edges(correlation, threshold_percent);
  const auto n = correlation.rows();
  sample.correlation_upper.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      sample.correlation_upper.push_back(static_cast<float>(correlation(i, j)));
    }
  }
  sample.window = std::move(window);
  return sample;
}

std::vector<GraphSample> build_samples(const std::vector<SubjectRecord>& records,
                                       const PrepConfig& config) {
  std::vector<GraphSample> out;
  for (const auto& record : records) {
    for (auto& window : window_split(record, config.windows_per_scan)) {
      out.push_back(make_graph_sample(std::move(window), config.threshold_percent));
    }
  }
  return out;
}

}  // namespace stgnn::prep
