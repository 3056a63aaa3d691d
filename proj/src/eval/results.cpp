#include "stgnn/eval/results.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <json.hpp>
#include <sstream>

#include "stgnn/encoders/temporal.hpp"
#include "stgnn/errors.hpp"
#include "stgnn/prep/io.hpp"

namespace stgnn::eval {

namespace {

using json = nlohmann::ordered_json;

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json point_json(const HyperPoint& p) {
  return {{"dropout", p.dropout},         {"learning_rate", p.learning_rate},
          {"weight_decay", p.weight_decay}, {"epochs", p.epochs},
          {"batch_size", p.batch_size},     {"l2_penalty", p.l2_penalty}};
}

json series_json(const std::vector<double>& values) {
  json out = json::array();
  for (double v : values) out.push_back(number_or_null(v));
  return out;
}

json summary_json(const Summary& s) { return {{"mean", s.mean}, {"sd", s.sd}}; }

const char* kind_name(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::baseline_flat: return "baseline_flat";
    case ExperimentKind::baseline_flat_bin: return "baseline_flat_bin";
    case ExperimentKind::deep: break;
  }
  return "deep";
}

json config_json(const ExperimentConfig& c) {
  return {{"kind", kind_name(c.kind)},
          {"encoder", encoders::to_string(c.spec.encoder)},
          {"use_gcn", c.spec.use_gcn},
          {"pooling", c.spec.pooling == model::Pooling::mean ? "mean" : "diffpool"},
          {"threshold_percent", c.spec.threshold_percent},
          {"windows_per_scan", c.spec.windows_per_scan},
          {"embed_dim", c.spec.embed_dim},
          {"folds", c.folds},
          {"seed", c.seed},
          {"grid_fast", c.grid_fast},
          {"permute_labels", c.permute_labels},
          {"select_final_epoch", c.train.select_final_epoch},
          {"link_weight", c.train.link_weight},
          {"entropy_weight", c.train.entropy_weight},
          {"precision", c.precision == Precision::f64 ? "f64" : "f32"},
          {"adjacency_scope", "per_window"},
          {"data", c.data_path}};
}

std::string format_fixed(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

std::string results_json(const ExperimentReport& report, const ResultsOptions& options) {
  json doc;
  doc["format"] = "stgnn-results";
  doc["version"] = kResultsVersion;
  doc["model"] = report.model_name;
  doc["seed"] = report.config.seed;
  doc["config"] = config_json(report.config);
  json grid = json::array();
  for (const auto& p : report.grid.points) grid.push_back(point_json(p));
  doc["grid"] = std::move(grid);
  const auto& d = report.dataset;
  doc["dataset"] = {{"subjects_loaded", d.subjects_loaded}, {"subjects_balanced", d.subjects_balanced},
                    {"samples", d.samples},                 {"nodes", d.nodes},
                    {"length", d.length},                   {"edges_per_sample", d.edges_per_sample}};
  doc["parameter_count"] = report.parameter_count;

  json folds = json::array();
  for (const auto& f : report.folds) {
    json roc = json::array();
    for (const auto& p : f.metrics.roc) roc.push_back({number_or_null(p.threshold), p.fpr, p.tpr});
    folds.push_back({{"fold", f.fold + 1},
                     {"grid_index", f.grid_index},
                     {"selected", point_json(f.selected)},
                     {"grid_validation_loss", series_json(f.grid_val_loss)},
                     {"best_epoch", f.training.best_epoch + 1},
                     {"best_validation_loss", f.training.best_val_loss},
                     {"auc", f.metrics.auc},
                     {"sensitivity", f.metrics.sensitivity},
                     {"specificity", f.metrics.specificity},
                     {"train_samples", f.train_samples},
                     {"validation_samples", f.validation_samples},
                     {"test_samples", f.test_samples},
                     {"test_subjects", f.test_subjects},
                     {"train_loss", series_json(f.training.train_loss)},
                     {"validation_loss", series_json(f.training.val_loss)},
                     {"link_loss", series_json(f.training.link_loss)},
                     {"entropy_loss", series_json(f.training.entropy_loss)},
                     {"roc", std::move(roc)}});
  }
  doc["folds"] = std::move(folds);
  doc["aggregate"] = {{"auc", summary_json(report.auc)},
                      {"sensitivity", summary_json(report.sensitivity)},
                      {"specificity", summary_json(report.specificity)}};
  if (options.timestamp) {
    doc["wall_clock_seconds"] = report.wall_clock_seconds;
    doc["timestamp"] = utc_timestamp();
  }
  return doc.dump(2) + "\n";
}

std::string roc_csv(const std::vector<RocPoint>& roc) {
  std::ostringstream out;
  out << "threshold,fpr,tpr\n";
  char buf[96];
  for (const auto& p : roc) {
    if (std::isinf(p.threshold)) std::snprintf(buf, sizeof buf, "inf,%.17g,%.17g\n", p.fpr, p.tpr);
    else std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", p.threshold, p.fpr, p.tpr);
    out << buf;
  }
  return out.str();
}

std::vector<RocPoint> parse_roc_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "threshold,fpr,tpr") throw IoError("ROC file: bad header");
  std::vector<RocPoint> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    RocPoint p{};
    char* end = nullptr;
    p.threshold = std::strtod(line.c_str(), &end);
    if (*end != ',') throw IoError("ROC file: malformed line " + std::to_string(line_no));
    p.fpr = std::strtod(end + 1, &end);
    if (*end != ',') throw IoError("ROC file: malformed line " + std::to_string(line_no));
    p.tpr = std::strtod(end + 1, &end);
    if (*end != '\0' && *end != '\r') throw IoError("ROC file: malformed line " + std::to_string(line_no));
    out.push_back(p);
  }
  return out;
}

std::vector<std::filesystem::path> write_results(const ExperimentReport& report,
                                                 const std::filesystem::path& out_dir,
                                                 const ResultsOptions& options) {
  std::filesystem::create_directories(out_dir);
  std::vector<std::filesystem::path> written;
  written.push_back(out_dir / "results.json");
  prep::write_file_atomic(written.back(), results_json(report, options));
  for (const auto& f : report.folds) {
    written.push_back(out_dir / ("roc_fold" + std::to_string(f.fold + 1) + ".csv"));
    prep::write_file_atomic(written.back(), roc_csv(f.metrics.roc));
  }
  return written;
}

std::string table_row(const ExperimentReport& report) {
  auto cell = [](const Summary& s) { return format_fixed(s.mean) + " ( " + format_fixed(s.sd) + " )"; };
  char name[40];
  std::snprintf(name, sizeof name, "%-24s", report.model_name.c_str());
  return std::string(name) + "  " + cell(report.auc) + "  " + cell(report.sensitivity) + "  " +
         cell(report.specificity) + "  " + std::to_string(report.parameter_count);
}

}  // namespace stgnn::eval
