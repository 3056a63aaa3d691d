#include "stgnn/eval/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <random>
#include <thread>
#include <unordered_map>

#include "stgnn/diff/adam.hpp"
#include "stgnn/errors.hpp"
#include "stgnn/prep/samples.hpp"

namespace stgnn::eval {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct JobOutcome {
  TrainResult training;
  std::vector<double> test_scores;
};

std::vector<int> labels_of(std::span<const prep::GraphSample> samples, std::span<const std::size_t> idx) {
  std::vector<int> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(samples[i].window.label);
  return out;
}

template <typename T>
JobOutcome run_deep_job(const ExperimentConfig& config, std::span<const prep::GraphSample> samples,
                        const FoldPlan& plan, model::InputGeometry geometry, std::size_t fold,
                        std::size_t grid_index, const HyperPoint& point) {
  model::ModelSpec spec = config.spec;
  spec.dropout = point.dropout;
  spec.seed = job_seed(config.seed, fold, grid_index);
  model::Model<T> net(spec, geometry);
  const auto train = plan.sample_indices(samples, fold, Role::inner_train);
  const auto validation = plan.sample_indices(samples, fold, Role::validation);
  const auto test = plan.sample_indices(samples, fold, Role::test);
  JobOutcome out;
  out.training = train_model(net, samples, train, validation, point, config.train, splitmix64(spec.seed));
  if (!out.training.failed) out.test_scores = model::predict(net, samples, test);
  return out;
}

diff::Tensor<double> feature_tensor(const std::vector<std::vector<double>>& features,
                                    std::span<const std::size_t> idx) {
  const std::size_t width = features.front().size();
  std::vector<double> data;
  data.reserve(idx.size() * width);
  for (auto i : idx) data.insert(data.end(), features[i].begin(), features[i].end());
  return diff::Tensor<double>::from({idx.size(), width}, std::move(data));
}

std::vector<double> logistic_scores(const diff::Tensor<double>& x, const diff::Tensor<double>& w,
                                    const diff::Tensor<double>& b) {
  diff::NoGradGuard guard;
  auto p = diff::sigmoid(diff::linear(x, w, b));
  return {p.data().begin(), p.data().end()};
}

JobOutcome run_baseline_job(const std::vector<std::vector<double>>& features,
                            std::span<const prep::GraphSample> samples, const FoldPlan& plan,
                            std::size_t fold, const HyperPoint& point, const TrainOptions& options) {
  const auto train = plan.sample_indices(samples, fold, Role::inner_train);
  const auto validation = plan.sample_indices(samples, fold, Role::validation);
  const auto test = plan.sample_indices(samples, fold, Role::test);
  const std::size_t width = features.front().size();
  auto w = diff::Tensor<double>::zeros({1, width}, true);
  auto b = diff::Tensor<double>::zeros({1}, true);
  const auto x_train = feature_tensor(features, train);
  const auto x_val = feature_tensor(features, validation);
  std::vector<double> y_train;
  for (int y : labels_of(samples, train)) y_train.push_back(y);
  const auto y_val = labels_of(samples, validation);

  diff::Adam<double> opt({w, b}, {point.learning_rate, 0.9, 0.999, 1e-8, point.weight_decay});
  JobOutcome out;
  TrainResult& r = out.training;
  r.best_val_loss = std::numeric_limits<double>::infinity();
  std::vector<double> best_w(width, 0.0);
  double best_b = 0.0;
  for (std::size_t epoch = 0; epoch < point.epochs; ++epoch) {
    auto p = diff::reshape(diff::sigmoid(diff::linear(x_train, w, b)), {train.size()});
    auto loss = diff::add(diff::bce_loss(p, y_train),
                          diff::scale(diff::sum_all(diff::square(w)), point.l2_penalty));
    opt.zero_grad();
    loss.backward();
    opt.step();
    const double val = mean_bce(logistic_scores(x_val, w, b), y_val);
    r.train_loss.push_back(loss.item());
    r.val_loss.push_back(val);
    if (!std::isfinite(loss.item()) || !std::isfinite(val)) {
      r.failed = true;
      r.failure = "non-finite loss at epoch " + std::to_string(epoch);
      return out;
    }
    if (val < r.best_val_loss || options.select_final_epoch) {
      r.best_val_loss = val;
      r.best_epoch = epoch;
      best_w.assign(w.data().begin(), w.data().end());
      best_b = b.data()[0];
    }
  }
  std::copy(best_w.begin(), best_w.end(), w.data().begin());
  b.data()[0] = best_b;
  out.test_scores = logistic_scores(feature_tensor(features, test), w, b);
  return out;
}

template <typename Job>
std::vector<JobOutcome> run_jobs(std::size_t count, std::size_t workers, Job&& job) {
  std::vector<JobOutcome> outcomes(count);
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (std::size_t j = next++; j < count; j = next++) {
      try {
        outcomes[j] = job(j);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next = count;
      }
    }
  };
  workers = std::clamp<std::size_t>(workers, 1, count);
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (error) std::rethrow_exception(error);
  return outcomes;
}

}  // namespace

std::size_t paper_batch_size(const model::ModelSpec& spec) {
  if (spec.windows_per_scan == 16) return 1000;
  if (spec.encoder == model::EncoderKind::tcn) return 400;
  return 500;
}

HyperGrid HyperGrid::paper(const model::ModelSpec& spec) {
  HyperGrid grid;
  for (double dropout : {0.0, 0.5, 0.7})
    for (double lr : {1e-4, 1e-5, 1e-6})
      for (double wd : {0.005, 0.5, 0.0}) grid.points.push_back({dropout, lr, wd, 30, paper_batch_size(spec), 0.0});
  return grid;
}

HyperGrid HyperGrid::fast(const model::ModelSpec&) {
  return {{{0.0, 1e-4, 0.0, 30, 8, 0.0}}};
}

HyperGrid HyperGrid::baseline() {
  HyperGrid grid;
  for (double l2 : {1e-4, 1e-3, 1e-2, 1e-1}) grid.points.push_back({0.0, 1e-2, 0.0, 300, 0, l2});
  return grid;
}

double mean_bce(std::span<const double> probabilities, std::span<const int> labels) {
  if (probabilities.size() != labels.size() || probabilities.empty()) {
    throw DimensionError("mean_bce: " + std::to_string(probabilities.size()) + " probabilities for " +
                         std::to_string(labels.size()) + " labels");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double p = std::clamp(probabilities[i], 1e-7, 1.0 - 1e-7);
    total -= labels[i] ? std::log(p) : std::log(1.0 - p);
  }
  return total / static_cast<double>(labels.size());
}

template <typename T>
TrainResult train_model(model::Model<T>& net, std::span<const prep::GraphSample> samples,
                        std::span<const std::size_t> train, std::span<const std::size_t> validation,
                        const HyperPoint& point, const TrainOptions& options, std::uint64_t seed) {
  if (train.empty() || validation.empty()) throw HarnessError("training needs train and validation samples");
  TrainResult r;
  r.best_val_loss = std::numeric_limits<double>::infinity();
  diff::Rng rng(seed);
  diff::Adam<T> opt(net.parameters(), {point.learning_rate, 0.9, 0.999, 1e-8, point.weight_decay});
  std::vector<std::size_t> order(train.begin(), train.end());
  const std::size_t batch = point.batch_size == 0 ? order.size() : point.batch_size;
  const auto val_labels = labels_of(samples, validation);
  const bool propagate = net.spec().use_gcn;
  const bool pooled = net.spec().pooling == model::Pooling::diffpool;
  auto best_state = net.snapshot();

  for (std::size_t epoch = 0; epoch < point.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0, link_sum = 0.0, entropy_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const auto idx = std::span<const std::size_t>(order).subspan(start, std::min(batch, order.size() - start));
      const auto b = model::make_batch<T>(samples, idx, propagate);
      const auto out = net.forward(b, true, rng);
      auto loss = model::bce_loss(out.probabilities, b.labels);
      if (pooled) {
        if (options.link_weight != 0.0) loss = diff::add(loss, diff::scale(out.link_loss, static_cast<T>(options.link_weight)));
        if (options.entropy_weight != 0.0) loss = diff::add(loss, diff::scale(out.entropy_loss, static_cast<T>(options.entropy_weight)));
        link_sum += static_cast<double>(out.link_loss.item()) * static_cast<double>(idx.size());
        entropy_sum += static_cast<double>(out.entropy_loss.item()) * static_cast<double>(idx.size());
      }
      opt.zero_grad();
      loss.backward();
      const double value = static_cast<double>(loss.item());
      if (!std::isfinite(value)) {
        r.failed = true;
        r.failure = "non-finite training loss at epoch " + std::to_string(epoch);
        return r;
      }
      opt.step();
      loss_sum += value * static_cast<double>(idx.size());
    }
    const double n = static_cast<double>(order.size());
    r.train_loss.push_back(loss_sum / n);
    if (pooled) {
      r.link_loss.push_back(link_sum / n);
      r.entropy_loss.push_back(entropy_sum / n);
    }
    const double val = mean_bce(model::predict(net, samples, validation), val_labels);
    r.val_loss.push_back(val);
    if (!std::isfinite(val)) {
      r.failed = true;
      r.failure = "non-finite validation loss at epoch " + std::to_string(epoch);
      return r;
    }
    if (val < r.best_val_loss) {
      r.best_val_loss = val;
      r.best_epoch = epoch;
      if (!options.select_final_epoch) best_state = net.snapshot();
    }
  }
  if (options.select_final_epoch) {
    r.best_epoch = r.val_loss.size() - 1;
    r.best_val_loss = r.val_loss.back();
  } else {
    net.restore(best_state);
  }
  return r;
}

std::string ExperimentConfig::model_name() const {
  switch (kind) {
    case ExperimentKind::baseline_flat: return "baseline_flat";
    case ExperimentKind::baseline_flat_bin: return "baseline_flat_bin";
    case ExperimentKind::deep: break;
  }
  return spec.name();
}

std::vector<int> balanced_label_permutation(const FoldPlan& plan, std::uint64_t seed) {
  std::mt19937_64 rng(splitmix64(seed ^ 0x70e12d5ULL));
  std::vector<int> labels(plan.subjects.size(), 0);
  for (std::size_t f = 0; f < plan.folds; ++f) {
    for (int cls : {0, 1}) {
      std::vector<std::size_t> members;
      for (std::size_t s = 0; s < plan.subjects.size(); ++s)
        if (plan.fold_of[s] == f && plan.subjects[s].label == cls) members.push_back(s);
      std::shuffle(members.begin(), members.end(), rng);
      std::size_t positives = members.size() / 2;
      if (members.size() % 2 == 1 && rng() % 2 == 1) ++positives;
      for (std::size_t i = 0; i < positives; ++i) labels[members[i]] = 1;
    }
  }
  return labels;
}

std::uint64_t job_seed(std::uint64_t seed, std::size_t fold, std::size_t grid_index) {
  return seed ^ splitmix64((static_cast<std::uint64_t>(fold) << 32) | grid_index);
}

std::vector<double> flat_features(const prep::GraphSample& sample, bool binarize) {
  if (!binarize) return {sample.correlation_upper.begin(), sample.correlation_upper.end()};
  const std::size_t n = sample.adjacency.size();
  std::vector<double> out;
  out.reserve(n * (n - 1) / 2);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) out.push_back(sample.adjacency.connected(i, j) ? 1.0 : 0.0);
  return out;
}

ExperimentReport run_experiment(const std::vector<prep::SubjectRecord>& records,
                                const ExperimentConfig& config) {
  const auto started = std::chrono::steady_clock::now();
  config.spec.validate();
  ExperimentReport report;
  report.config = config;
  report.model_name = config.model_name();
  const bool deep = config.kind == ExperimentKind::deep;
  if (!config.grid.points.empty()) report.grid = config.grid;
  else if (!deep) report.grid = HyperGrid::baseline();
  else report.grid = config.grid_fast ? HyperGrid::fast(config.spec) : HyperGrid::paper(config.spec);
  auto log = [&](const std::string& line) {
    if (config.log) config.log(line);
  };

  const auto balanced = prep::balance_by_subject(records, config.seed);
  auto samples = prep::build_samples(balanced, {config.spec.windows_per_scan, config.spec.threshold_percent});
  if (samples.empty()) throw HarnessError("dataset produced no samples");
  FoldPlan plan = plan_folds(samples, config.folds, config.seed);
  if (config.permute_labels) {
    const auto permuted = balanced_label_permutation(plan, config.seed);
    std::unordered_map<std::string, int> by_id;
    for (std::size_t s = 0; s < plan.subjects.size(); ++s) {
      by_id[plan.subjects[s].id] = permuted[s];
      plan.subjects[s].label = permuted[s];
    }
    for (auto& sample : samples) sample.window.label = by_id.at(sample.window.subject_id);
    check_fold_plan(plan);
  }

  DatasetInfo& info = report.dataset;
  info.subjects_loaded = records.size();
  info.subjects_balanced = balanced.size();
  info.samples = samples.size();
  info.nodes = samples.front().adjacency.size();
  info.length = static_cast<std::size_t>(samples.front().window.features.cols());
  info.edges_per_sample = samples.front().adjacency.edge_count();
  const model::InputGeometry geometry{info.nodes, info.length};
  log("dataset: " + std::to_string(balanced.size()) + " subjects, " + std::to_string(samples.size()) +
      " samples of " + std::to_string(info.nodes) + " x " + std::to_string(info.length));

  const std::size_t grid_size = report.grid.points.size();
  if (grid_size == 0) throw ConfigError("hyperparameter grid is empty");
  std::vector<std::vector<double>> features;
  if (deep) {
    report.parameter_count = model::parameter_count(config.spec, geometry);
  } else {
    for (const auto& s : samples) features.push_back(flat_features(s, config.kind == ExperimentKind::baseline_flat_bin));
    report.parameter_count = features.front().size() + 1;
  }

  std::mutex log_mutex;
  const auto outcomes = run_jobs(config.folds * grid_size, config.jobs, [&](std::size_t j) {
    const std::size_t fold = j / grid_size, gi = j % grid_size;
    const HyperPoint& point = report.grid.points[gi];
    JobOutcome out;
    if (!deep) out = run_baseline_job(features, samples, plan, fold, point, config.train);
    else if (config.precision == Precision::f64) out = run_deep_job<double>(config, samples, plan, geometry, fold, gi, point);
    else out = run_deep_job<float>(config, samples, plan, geometry, fold, gi, point);
    if (config.log) {
      std::lock_guard lock(log_mutex);
      const auto& t = out.training;
      log("fold " + std::to_string(fold) + " grid " + std::to_string(gi) +
          (t.failed ? ": failed (" + t.failure + ")"
                    : ": best validation loss " + std::to_string(t.best_val_loss) + " at epoch " +
                          std::to_string(t.best_epoch + 1)));
    }
    return out;
  });

  std::vector<double> aucs, sens, specs;
  for (std::size_t fold = 0; fold < config.folds; ++fold) {
    FoldReport fr;
    fr.fold = fold;
    std::optional<std::size_t> chosen;
    for (std::size_t gi = 0; gi < grid_size; ++gi) {
      const auto& t = outcomes[fold * grid_size + gi].training;
      fr.grid_val_loss.push_back(t.failed ? kNaN : t.best_val_loss);
      if (!t.failed && (!chosen || t.best_val_loss < outcomes[fold * grid_size + *chosen].training.best_val_loss)) {
        chosen = gi;
      }
    }
    if (!chosen) throw HarnessError("every grid point failed in fold " + std::to_string(fold));
    const JobOutcome& best = outcomes[fold * grid_size + *chosen];
    fr.grid_index = *chosen;
    fr.selected = report.grid.points[*chosen];
    fr.training = best.training;
    const auto test = plan.sample_indices(samples, fold, Role::test);
    fr.metrics = compute_metrics(best.test_scores, labels_of(samples, test));
    fr.train_samples = plan.sample_indices(samples, fold, Role::inner_train).size();
    fr.validation_samples = plan.sample_indices(samples, fold, Role::validation).size();
    fr.test_samples = test.size();
    fr.test_subjects = plan.subjects_with(fold, Role::test).size();
    aucs.push_back(fr.metrics.auc);
    sens.push_back(fr.metrics.sensitivity);
    specs.push_back(fr.metrics.specificity);
    report.folds.push_back(std::move(fr));
  }
  report.auc = summarize(aucs);
  report.sensitivity = summarize(sens);
  report.specificity = summarize(specs);
  report.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

template TrainResult train_model(model::Model<float>&, std::span<const prep::GraphSample>,
                                 std::span<const std::size_t>, std::span<const std::size_t>,
                                 const HyperPoint&, const TrainOptions&, std::uint64_t);
template TrainResult train_model(model::Model<double>&, std::span<const prep::GraphSample>,
                                 std::span<const std::size_t>, std::span<const std::size_t>,
                                 const HyperPoint&, const TrainOptions&, std::uint64_t);

}  // namespace stgnn::eval
