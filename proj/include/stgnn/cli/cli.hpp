#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "stgnn/eval/metrics.hpp"

namespace stgnn::cli {

// Runs one command line (args excludes the program name). Errors are
// reported on `err` as a single-line JSON object and turned into a nonzero
// exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Reads `key = value` lines; blank lines and lines starting with # are skipped.
std::vector<std::pair<std::string, std::string>> read_config_file(const std::filesystem::path& path);

struct RocSeries {
  std::string label;
  std::vector<eval::RocPoint> points;
};

// Standalone SVG: one polyline per series plus the chance diagonal.
std::string render_roc_svg(const std::vector<RocSeries>& series, const std::string& title);

}  // namespace stgnn::cli
