#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "stgnn/eval/experiment.hpp"

namespace stgnn::eval {

inline constexpr int kResultsVersion = 1;

struct ResultsOptions {
  bool timestamp = true;  // false drops the timestamp and wall-clock fields
};

std::string results_json(const ExperimentReport& report, const ResultsOptions& options = {});

// Header `threshold,fpr,tpr`; the leading point's threshold is written as inf.
std::string roc_csv(const std::vector<RocPoint>& roc);
std::vector<RocPoint> parse_roc_csv(const std::string& text);

// results.json plus roc_fold{k}.csv for k = 1..folds; returns the files written.
std::vector<std::filesystem::path> write_results(const ExperimentReport& report,
                                                 const std::filesystem::path& out_dir,
                                                 const ResultsOptions& options = {});

// Model, AUC, sensitivity, specificity as "mean ( sd )", then the parameter count.
std::string table_row(const ExperimentReport& report);

}  // namespace stgnn::eval
