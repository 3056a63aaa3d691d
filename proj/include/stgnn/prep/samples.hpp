#pragma once

#include <cstdint>
#include <vector>

#include "stgnn/prep/types.hpp"

namespace stgnn::prep {

// Cuts every session into `windows_per_scan` contiguous, non-overlapping
// windows and transposes each to nodes x time. With `scale`, each node row is
// robust-scaled within its window.
std::vector<SampleWindow> window_split(const SubjectRecord& record, std::size_t windows_per_scan,
                                       bool scale = true);

// Drops randomly chosen whole subjects of the larger class until both classes
// hold the same number of subjects. Input order is preserved for survivors.
std::vector<SubjectRecord> balance_by_subject(const std::vector<SubjectRecord>& records,
                                              std::uint64_t seed);

struct PrepConfig {
  std::size_t windows_per_scan = 1;
  double threshold_percent = 5.0;
};

// Window, scale and attach per-window Ledoit-Wolf correlation graphs.
GraphSample make_graph_sample(SampleWindow window, double threshold_percent);
std::vector<GraphSample> build_samples(const std::vector<SubjectRecord>& records,
                                       const PrepConfig& config);

}  // namespace stgnn::prep
