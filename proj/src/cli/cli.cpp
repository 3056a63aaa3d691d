#include "stgnn/cli/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <set>
#include <sstream>

#include "stgnn/errors.hpp"
#include "stgnn/eval/experiment.hpp"
#include "stgnn/eval/results.hpp"
#include "stgnn/model/model.hpp"
#include "stgnn/prep/io.hpp"
#include "stgnn/prep/samples.hpp"
#include "stgnn/synth/synth.hpp"

namespace stgnn::cli {

namespace fs = std::filesystem;

namespace {

struct CommonFlags {
  std::uint64_t seed = 0;
  std::string out;
  std::size_t jobs = 1;
  std::string precision = "f32";
};

struct SynthFlags {
  synth::SynthConfig config;
  std::string kind = "covariance";
  std::string format = "csv";
};

struct PrepFlags {
  std::string data;
  std::size_t splits = 4;
  double threshold = 5.0;
};

struct RunFlags {
  std::string data;
  std::string model = "mean_CNN_GCN5";
  std::optional<double> threshold;
  std::optional<std::size_t> splits;
  std::size_t folds = 5;
  bool grid_fast = false;
  bool permute_labels = false;
  bool select_final_epoch = false;
  bool no_timestamp = false;
  double link_weight = 0.0;
  double entropy_weight = 0.0;
  std::vector<double> dropout, learning_rate, weight_decay, l2_penalty;
  std::optional<std::size_t> epochs, batch_size;
  bool quiet = false;
};

struct ParamsFlags {
  std::string model = "mean_CNN";
  std::size_t length = 1200;
  std::size_t nodes = 50;
  std::optional<double> threshold;
};

struct RocFlags {
  std::vector<std::string> inputs;
  std::string title = "ROC";
};

void add_common(CLI::App* cmd, CommonFlags& c, bool with_precision) {
  cmd->add_option("--seed", c.seed, "Random seed");
  cmd->add_option("--out", c.out, "Output path");
  cmd->add_option("--jobs", c.jobs, "Worker threads")->check(CLI::PositiveNumber);
  if (with_precision)
    cmd->add_option("--precision", c.precision, "Element type")->check(CLI::IsMember({"f32", "f64"}));
  else
    cmd->add_option("--precision", c.precision, "Accepted for uniformity; unused")
        ->check(CLI::IsMember({"f32", "f64"}));
}

void require_out(const CommonFlags& c) {
  if (c.out.empty()) throw ConfigError("--out is required");
}

std::size_t windows_for(std::size_t splits, const std::vector<prep::SubjectRecord>& records) {
  const std::size_t sessions = records.empty() ? 0 : records.front().sessions.size();
  if (splits == 0 || sessions == 0 || splits % sessions != 0)
    throw ConfigError("--splits " + std::to_string(splits) + " is not a multiple of the " +
                      std::to_string(sessions) + " sessions per subject");
  for (const auto& r : records)
    if (r.sessions.size() != sessions) throw ConfigError("subjects disagree on session count");
  return splits / sessions;
}

int cmd_synth(const SynthFlags& f, const CommonFlags& c, std::ostream& out) {
  require_out(c);
  auto config = f.config;
  config.seed = c.seed;
  config.kind = synth::parse_signal_kind(f.kind);
  const auto dataset = synth::generate(config);
  const auto manifest = synth::write_dataset(
      dataset, c.out, f.format == "csv" ? prep::MatrixFormat::csv : prep::MatrixFormat::binary);
  out << manifest.string() << "\n";
  return 0;
}

int cmd_preprocess(const PrepFlags& f, const CommonFlags& c, std::ostream& out) {
  require_out(c);
  if (f.data.empty()) throw ConfigError("--data is required");
  const auto records = prep::load_dataset(f.data);
  const auto balanced = prep::balance_by_subject(records, c.seed);
  const auto samples = prep::build_samples(balanced, {windows_for(f.splits, records), f.threshold});
  const fs::path dir(c.out);
  fs::create_directories(dir / "windows");
  nlohmann::ordered_json doc;
  doc["format"] = "stgnn-preprocessed";
  doc["version"] = 1;
  doc["source"] = f.data;
  doc["seed"] = c.seed;
  doc["splits"] = f.splits;
  doc["threshold_percent"] = f.threshold;
  doc["adjacency_scope"] = "per_window";
  doc["subjects_loaded"] = records.size();
  doc["subjects_balanced"] = balanced.size();
  auto list = nlohmann::ordered_json::array();
  for (const auto& s : samples) {
    const auto& w = s.window;
    const std::string name = w.subject_id + "_scan" + std::to_string(w.scan_index + 1) + "_win" +
                             std::to_string(w.window_index + 1) + ".bin";
    prep::write_matrix_binary(w.features.cast<double>().transpose(), dir / "windows" / name);
    auto edges = nlohmann::ordered_json::array();
    for (const auto& [i, j] : s.adjacency.edges()) edges.push_back({i, j});
    list.push_back({{"subject", w.subject_id},
                    {"label", w.label},
                    {"scan", w.scan_index},
                    {"window", w.window_index},
                    {"features", "windows/" + name},
                    {"edges", std::move(edges)}});
  }
  doc["samples"] = std::move(list);
  prep::write_file_atomic(dir / "preprocessed.json", doc.dump(2) + "\n");
  out << samples.size() << " samples from " << balanced.size() << " subjects\n";
  return 0;
}

eval::HyperGrid build_grid(const RunFlags& f, const eval::ExperimentConfig& config) {
  const bool overridden = !f.dropout.empty() || !f.learning_rate.empty() || !f.weight_decay.empty() ||
                          !f.l2_penalty.empty() || f.epochs || f.batch_size;
  if (!overridden) return {};
  eval::HyperGrid base = config.kind != eval::ExperimentKind::deep ? eval::HyperGrid::baseline()
                         : f.grid_fast ? eval::HyperGrid::fast(config.spec)
                                       : eval::HyperGrid::paper(config.spec);
  auto axis = [&](const std::vector<double>& given, auto member) {
    if (!given.empty()) return given;
    std::vector<double> values;
    for (const auto& p : base.points)
      if (std::find(values.begin(), values.end(), p.*member) == values.end()) values.push_back(p.*member);
    return values;
  };
  const auto dropouts = axis(f.dropout, &eval::HyperPoint::dropout);
  const auto rates = axis(f.learning_rate, &eval::HyperPoint::learning_rate);
  const auto decays = axis(f.weight_decay, &eval::HyperPoint::weight_decay);
  const auto penalties = axis(f.l2_penalty, &eval::HyperPoint::l2_penalty);
  eval::HyperGrid grid;
  for (double d : dropouts)
    for (double lr : rates)
      for (double wd : decays)
        for (double l2 : penalties)
          grid.points.push_back({d, lr, wd, f.epochs.value_or(base.points.front().epochs),
                                 f.batch_size.value_or(base.points.front().batch_size), l2});
  return grid;
}

int cmd_run(const RunFlags& f, const CommonFlags& c, std::ostream& out, std::ostream& err) {
  require_out(c);
  if (f.data.empty()) throw ConfigError("--data is required");
  eval::ExperimentConfig config;
  bool windows_in_name = false, threshold_in_name = false;
  if (f.model == "baseline_flat" || f.model == "baseline_flat_bin") {
    config.kind = f.model == "baseline_flat" ? eval::ExperimentKind::baseline_flat
                                             : eval::ExperimentKind::baseline_flat_bin;
  } else {
    const auto parsed = model::parse_model_name(f.model);
    config.spec = parsed.spec;
    windows_in_name = parsed.windows_in_name;
    threshold_in_name = parsed.threshold_in_name;
  }
  if (f.threshold) {
    if (threshold_in_name && *f.threshold != config.spec.threshold_percent)
      throw ConfigError("--threshold contradicts the threshold in '" + f.model + "'");
    config.spec.threshold_percent = *f.threshold;
  }
  const auto records = prep::load_dataset(f.data);
  if (f.splits) {
    const std::size_t windows = windows_for(*f.splits, records);
    if (windows_in_name && windows != config.spec.windows_per_scan)
      throw ConfigError("--splits contradicts the split in '" + f.model + "'");
    config.spec.windows_per_scan = windows;
  }
  config.spec.seed = c.seed;
  config.spec.validate();
  config.folds = f.folds;
  config.seed = c.seed;
  config.grid_fast = f.grid_fast;
  config.permute_labels = f.permute_labels;
  config.train = {f.select_final_epoch, f.link_weight, f.entropy_weight};
  config.jobs = c.jobs;
  config.precision = c.precision == "f64" ? eval::Precision::f64 : eval::Precision::f32;
  config.data_path = f.data;
  config.grid = build_grid(f, config);
  if (!f.quiet) config.log = [&err](const std::string& line) { err << line << std::endl; };

  const auto report = eval::run_experiment(records, config);
  eval::write_results(report, c.out, {!f.no_timestamp});
  out << eval::table_row(report) << "\n";
  return 0;
}

int cmd_params(const ParamsFlags& f, std::ostream& out) {
  auto parsed = model::parse_model_name(f.model);
  if (f.threshold) {
    if (parsed.threshold_in_name && *f.threshold != parsed.spec.threshold_percent)
      throw ConfigError("--threshold contradicts the threshold in '" + f.model + "'");
    parsed.spec.threshold_percent = *f.threshold;
  }
  out << model::parameter_count(parsed.spec, {f.nodes, f.length}) << "\n";
  return 0;
}

int cmd_roc_plot(const RocFlags& f, const CommonFlags& c, std::ostream& out) {
  require_out(c);
  std::vector<fs::path> files;
  for (const auto& in : f.inputs) {
    const fs::path p(in);
    if (fs::is_directory(p)) {
      std::vector<fs::path> found;
      for (const auto& e : fs::directory_iterator(p)) {
        const auto name = e.path().filename().string();
        if (name.starts_with("roc_fold") && e.path().extension() == ".csv") found.push_back(e.path());
      }
      std::sort(found.begin(), found.end());
      if (found.empty()) throw IoError("no roc_fold*.csv files in " + p.string());
      files.insert(files.end(), found.begin(), found.end());
    } else {
      if (!fs::exists(p)) throw IoError("missing ROC file " + p.string());
      files.push_back(p);
    }
  }
  if (files.empty()) throw ConfigError("roc-plot needs at least one input");
  std::vector<RocSeries> series;
  for (const auto& p : files) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream buf;
    buf << in.rdbuf();
    series.push_back({p.stem().string(), eval::parse_roc_csv(buf.str())});
  }
  prep::write_file_atomic(c.out, render_roc_svg(series, f.title));
  out << c.out << "\n";
  return 0;
}

std::string json_error(const std::string& kind, const std::string& message) {
  return nlohmann::json{{"error", {{"kind", kind}, {"message", message}}}}.dump();
}

// Config entries become --key=value arguments placed ahead of the command
// line flags, skipping any key the command line already sets.
std::vector<std::string> merge_config(const std::vector<std::string>& args, CLI::App* command,
                                      const std::string& config_path) {
  std::vector<std::string> merged;
  std::set<std::string> given;
  for (const auto& a : args)
    if (a.starts_with("--")) given.insert(a.substr(2, a.find('=') == std::string::npos ? std::string::npos : a.find('=') - 2));
  for (const auto& [key, value] : read_config_file(config_path)) {
    if (key == "config" || command->get_option_no_throw("--" + key) == nullptr)
      throw ConfigError("unknown configuration key '" + key + "' in " + config_path);
    if (!given.contains(key)) merged.push_back("--" + key + "=" + value);
  }
  return merged;
}

}  // namespace

std::vector<std::pair<std::string, std::string>> read_config_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config file " + path.string());
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  std::size_t line_no = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": expected key = value");
    out.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    if (out.back().first.empty())
      throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": empty key");
  }
  return out;
}

std::string render_roc_svg(const std::vector<RocSeries>& series, const std::string& title) {
  static const char* colors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                 "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  constexpr double size = 400.0, left = 60.0, top = 40.0;
  auto px = [&](double fpr) { return left + fpr * size; };
  auto py = [&](double tpr) { return top + (1.0 - tpr) * size; };
  std::ostringstream svg;
  char buf[160];
  svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"620\" height=\"500\" viewBox=\"0 0 620 500\">\n"
      << "<rect width=\"620\" height=\"500\" fill=\"white\"/>\n";
  std::string escaped;
  for (char ch : title) {
    if (ch == '<') escaped += "&lt;";
    else if (ch == '>') escaped += "&gt;";
    else if (ch == '&') escaped += "&amp;";
    else escaped += ch;
  }
  svg << "<text x=\"260\" y=\"25\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">"
      << escaped << "</text>\n";
  std::snprintf(buf, sizeof buf, "<rect x=\"%g\" y=\"%g\" width=\"%g\" height=\"%g\" fill=\"none\" stroke=\"black\"/>\n",
                left, top, size, size);
  svg << buf;
  for (int i = 0; i <= 5; ++i) {
    const double v = i / 5.0;
    std::snprintf(buf, sizeof buf,
                  "<text x=\"%g\" y=\"%g\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">%.1f</text>\n",
                  px(v), top + size + 16, v);
    svg << buf;
    std::snprintf(buf, sizeof buf,
                  "<text x=\"%g\" y=\"%g\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">%.1f</text>\n",
                  left - 6, py(v) + 4, v);
    svg << buf;
  }
  svg << "<text x=\"260\" y=\"485\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">False positive rate</text>\n"
      << "<text x=\"18\" y=\"240\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" "
         "transform=\"rotate(-90 18 240)\">True positive rate</text>\n";
  std::snprintf(buf, sizeof buf,
                "<line class=\"diagonal\" x1=\"%g\" y1=\"%g\" x2=\"%g\" y2=\"%g\" stroke=\"gray\" stroke-dasharray=\"6,4\"/>\n",
                px(0), py(0), px(1), py(1));
  svg << buf;
  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = colors[s % std::size(colors)];
    svg << "<polyline class=\"roc\" fill=\"none\" stroke-width=\"1.5\" stroke=\"" << color << "\" points=\"";
    for (std::size_t i = 0; i < series[s].points.size(); ++i) {
      const auto& p = series[s].points[i];
      std::snprintf(buf, sizeof buf, "%s%.2f,%.2f", i ? " " : "", px(p.fpr), py(p.tpr));
      svg << buf;
    }
    svg << "\"/>\n";
    double area = 0.0;
    const auto& pts = series[s].points;
    for (std::size_t i = 1; i < pts.size(); ++i)
      area += (pts[i].fpr - pts[i - 1].fpr) * (pts[i].tpr + pts[i - 1].tpr) / 2.0;
    const double y = top + 14.0 + 18.0 * s;
    std::snprintf(buf, sizeof buf, "<line x1=\"470\" y1=\"%g\" x2=\"490\" y2=\"%g\" stroke=\"%s\" stroke-width=\"2\"/>\n",
                  y - 4, y - 4, color);
    svg << buf;
    std::snprintf(buf, sizeof buf, "<text x=\"495\" y=\"%g\" font-family=\"sans-serif\" font-size=\"11\">", y);
    svg << buf << series[s].label;
    std::snprintf(buf, sizeof buf, " (%.3f)</text>\n", area);
    svg << buf;
  }
  svg << "</svg>\n";
  return svg.str();
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Spatio-temporal graph classification of node time series", "stgnn"};
  app.require_subcommand(1);
  CommonFlags common;
  SynthFlags synth_flags;
  PrepFlags prep_flags;
  RunFlags run_flags;
  ParamsFlags params_flags;
  RocFlags roc_flags;
  std::string config_path;

  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic labelled dataset");
  add_common(synth_cmd, common, false);
  synth_cmd->add_option("--subjects", synth_flags.config.subjects, "Subject count (even)");
  synth_cmd->add_option("--nodes", synth_flags.config.nodes, "Nodes per subject");
  synth_cmd->add_option("--sessions", synth_flags.config.sessions, "Sessions per subject");
  synth_cmd->add_option("--length", synth_flags.config.length, "Timesteps per session");
  synth_cmd->add_option("--effect", synth_flags.config.effect, "Class effect size in [0, 1]");
  synth_cmd->add_option("--latent-ar", synth_flags.config.latent_ar, "AR coefficient of the shared latent");
  synth_cmd->add_option("--kind", synth_flags.kind, "covariance, spectral or both")
      ->check(CLI::IsMember({"covariance", "spectral", "both"}));
  synth_cmd->add_option("--format", synth_flags.format, "Matrix files: csv or bin")
      ->check(CLI::IsMember({"csv", "bin"}));

  auto* prep_cmd = app.add_subcommand("preprocess", "Window, scale and threshold a dataset");
  add_common(prep_cmd, common, false);
  prep_cmd->add_option("--data", prep_flags.data, "Dataset manifest");
  prep_cmd->add_option("--splits", prep_flags.splits, "Samples per subject");
  prep_cmd->add_option("--threshold", prep_flags.threshold, "Edge density in percent");

  auto* run_cmd = app.add_subcommand("run", "Cross-validated experiment");
  add_common(run_cmd, common, true);
  run_cmd->add_option("--config", config_path, "key = value file; command line flags win");
  run_cmd->add_option("--data", run_flags.data, "Dataset manifest");
  run_cmd->add_option("--model", run_flags.model, "Model name or baseline_flat / baseline_flat_bin");
  run_cmd->add_option("--threshold", run_flags.threshold, "Edge density in percent");
  run_cmd->add_option("--splits", run_flags.splits, "Samples per subject");
  run_cmd->add_option("--folds", run_flags.folds, "Outer folds");
  run_cmd->add_flag("--grid-fast", run_flags.grid_fast, "Single-point grid");
  run_cmd->add_flag("--permute-labels", run_flags.permute_labels, "Random labels, balanced within each fold and class");
  run_cmd->add_flag("--select-final-epoch", run_flags.select_final_epoch, "Keep the last epoch, not the best");
  run_cmd->add_flag("--no-timestamp", run_flags.no_timestamp, "Omit timestamp and wall-clock fields");
  run_cmd->add_flag("--quiet", run_flags.quiet, "No progress log");
  run_cmd->add_option("--link-weight", run_flags.link_weight, "DiffPool link loss weight");
  run_cmd->add_option("--entropy-weight", run_flags.entropy_weight, "DiffPool entropy loss weight");
  run_cmd->add_option("--dropout", run_flags.dropout, "Grid override")->delimiter(',');
  run_cmd->add_option("--lr", run_flags.learning_rate, "Grid override")->delimiter(',');
  run_cmd->add_option("--weight-decay", run_flags.weight_decay, "Grid override")->delimiter(',');
  run_cmd->add_option("--l2", run_flags.l2_penalty, "Grid override (baselines)")->delimiter(',');
  run_cmd->add_option("--epochs", run_flags.epochs, "Grid override");
  run_cmd->add_option("--batch-size", run_flags.batch_size, "Grid override; 0 is full batch");

  auto* params_cmd = app.add_subcommand("params", "Print a model's trainable parameter count");
  add_common(params_cmd, common, true);
  params_cmd->add_option("--model", params_flags.model, "Model name");
  params_cmd->add_option("--length", params_flags.length, "Timesteps per sample");
  params_cmd->add_option("--nodes", params_flags.nodes, "Nodes per graph");
  params_cmd->add_option("--threshold", params_flags.threshold, "Edge density in percent");

  auto* roc_cmd = app.add_subcommand("roc-plot", "Render ROC CSVs as an SVG");
  add_common(roc_cmd, common, false);
  roc_cmd->add_option("--in", roc_flags.inputs, "ROC CSV files or a results directory")->required();
  roc_cmd->add_option("--title", roc_flags.title, "Plot title");

  try {
    std::vector<std::string> argv(args.rbegin(), args.rend());
    app.parse(argv);
    if (!config_path.empty()) {
      std::vector<std::string> merged{"run"};
      const auto extra = merge_config({args.begin() + 1, args.end()}, run_cmd, config_path);
      merged.insert(merged.end(), extra.begin(), extra.end());
      merged.insert(merged.end(), args.begin() + 1, args.end());
      run_flags = RunFlags{};
      common = CommonFlags{};
      app.clear();
      std::vector<std::string> again(merged.rbegin(), merged.rend());
      app.parse(again);
    }
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e, out, err);
    err << json_error("usage", e.what()) << "\n";
    return 2;
  } catch (const ConfigError& e) {
    err << json_error(e.kind(), e.what()) << "\n";
    return 2;
  } catch (const Error& e) {
    err << json_error(e.kind(), e.what()) << "\n";
    return 1;
  }

  try {
    if (synth_cmd->parsed()) return cmd_synth(synth_flags, common, out);
    if (prep_cmd->parsed()) return cmd_preprocess(prep_flags, common, out);
    if (run_cmd->parsed()) return cmd_run(run_flags, common, out, err);
    if (params_cmd->parsed()) return cmd_params(params_flags, out);
    if (roc_cmd->parsed()) return cmd_roc_plot(roc_flags, common, out);
  } catch (const ConfigError& e) {
    err << json_error(e.kind(), e.what()) << "\n";
    return 2;
  } catch (const Error& e) {
    err << json_error(e.kind(), e.what()) << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << json_error("internal", e.what()) << "\n";
    return 1;
  }
  return 1;
}

}  // namespace stgnn::cli
