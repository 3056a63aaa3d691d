#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stgnn/eval/folds.hpp"
#include "stgnn/eval/metrics.hpp"
#include "stgnn/model/model.hpp"
#include "stgnn/prep/types.hpp"

namespace stgnn::eval {

struct HyperPoint {
  double dropout = 0.0;
  double learning_rate = 1e-4;
  double weight_decay = 0.0;
  std::size_t epochs = 30;
  std::size_t batch_size = 500;  // 0 means the whole training set
  double l2_penalty = 0.0;       // baseline only

  bool operator==(const HyperPoint&) const = default;
};

struct HyperGrid {
  std::vector<HyperPoint> points;

  // dropout x learning rate x weight decay = 27 points, 30 epochs; batch 500,
  // 400 for TCN encoders, 1000 when scans are split into 16 windows.
  static HyperGrid paper(const model::ModelSpec& spec);
  // One point for quick synthetic runs.
  static HyperGrid fast(const model::ModelSpec& spec);
  // Full-batch logistic regression over four L2 strengths.
  static HyperGrid baseline();
};

std::size_t paper_batch_size(const model::ModelSpec& spec);

struct TrainOptions {
  bool select_final_epoch = false;
  double link_weight = 0.0;
  double entropy_weight = 0.0;
};

struct TrainResult {
  std::vector<double> train_loss;  // per epoch, mean over minibatches
  std::vector<double> val_loss;    // per epoch, eval mode
  std::vector<double> link_loss;   // per epoch, diffpool models only
  std::vector<double> entropy_loss;
  std::size_t best_epoch = 0;      // 0-based epoch whose state was kept
  double best_val_loss = 0.0;
  bool failed = false;
  std::string failure;
};

// Trains in place with Adam; the model ends in the best-validation state (or
// the final one with select_final_epoch). A non-finite loss marks the run
// failed and stops it.
template <typename T>
TrainResult train_model(model::Model<T>& model, std::span<const prep::GraphSample> samples,
                        std::span<const std::size_t> train, std::span<const std::size_t> validation,
                        const HyperPoint& point, const TrainOptions& options, std::uint64_t seed);

double mean_bce(std::span<const double> probabilities, std::span<const int> labels);

enum class Precision { f32, f64 };

enum class ExperimentKind { deep, baseline_flat, baseline_flat_bin };

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::deep;
  model::ModelSpec spec;  // threshold and windows apply to baselines too
  std::size_t folds = 5;
  std::uint64_t seed = 0;
  HyperGrid grid;         // empty: paper grid (deep) or baseline grid
  bool grid_fast = false;
  bool permute_labels = false;
  TrainOptions train;
  std::size_t jobs = 1;
  Precision precision = Precision::f32;
  std::string data_path;  // echoed only
  std::function<void(const std::string&)> log;

  std::string model_name() const;
};

struct FoldReport {
  std::size_t fold = 0;
  std::size_t grid_index = 0;
  HyperPoint selected;
  TrainResult training;
  Metrics metrics;
  std::size_t train_samples = 0;
  std::size_t validation_samples = 0;
  std::size_t test_samples = 0;
  std::size_t test_subjects = 0;
  std::vector<double> grid_val_loss;  // best validation loss per grid point (NaN if failed)
};

struct DatasetInfo {
  std::size_t subjects_loaded = 0;
  std::size_t subjects_balanced = 0;
  std::size_t samples = 0;
  std::size_t nodes = 0;
  std::size_t length = 0;
  std::size_t edges_per_sample = 0;
};

struct ExperimentReport {
  std::string model_name;
  ExperimentConfig config;
  HyperGrid grid;
  DatasetInfo dataset;
  std::size_t parameter_count = 0;
  std::vector<FoldReport> folds;
  Summary auc, sensitivity, specificity;
  double wall_clock_seconds = 0.0;
};

// One permuted label per plan subject. Within every outer test fold, each true
// class is split evenly between the two permuted labels (odd counts round at
// random), so the permuted labels carry no information about the true class
// in any training or test split while a subject keeps one label everywhere.
std::vector<int> balanced_label_permutation(const FoldPlan& plan, std::uint64_t seed);

// Per-job seed: seed XOR a mix of (fold, grid index).
std::uint64_t job_seed(std::uint64_t seed, std::size_t fold, std::size_t grid_index);

ExperimentReport run_experiment(const std::vector<prep::SubjectRecord>& records,
                                const ExperimentConfig& config);

// Upper-triangle correlations, or the thresholded adjacency as 0/1 values.
std::vector<double> flat_features(const prep::GraphSample& sample, bool binarize);

}  // namespace stgnn::eval
