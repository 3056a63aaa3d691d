#include "stgnn/prep/io.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "stgnn/errors.hpp"

namespace stgnn::prep {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int s = 0; s < 32; s += 8) out.push_back(static_cast<char>((v >> s) & 0xff));
}

std::uint32_t get_u32(const std::string& bytes, std::size_t offset) {
  std::uint32_t v = 0;
  for (int k = 0; k < 4; ++k) {
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[offset + k])) << (8 * k);
  }
  return v;
}

TimeSeries parse_csv(const std::string& text, const fs::path& path) {
  std::vector<double> values;
  std::size_t rows = 0, cols = 0;
  std::istringstream lines(text);
  std::string line;
  while (std::getline(lines, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::size_t count = 0;
    const char* p = line.data();
    const char* end = line.data() + line.size();
    while (p <= end) {
      const char* comma = std::find(p, end, ',');
      std::string cell(p, comma);
      char* parsed_end = nullptr;
      const double v = std::strtod(cell.c_str(), &parsed_end);
      if (cell.empty() || parsed_end == cell.c_str()) {
        throw IoError(path.string() + ": bad value '" + cell + "' on row " + std::to_string(rows + 1));
      }
      values.push_back(v);
      ++count;
      p = comma + 1;
    }
    if (rows == 0) cols = count;
    if (count != cols) {
      throw IoError(path.string() + ": row " + std::to_string(rows + 1) + " has " +
                    std::to_string(count) + " columns, expected " + std::to_string(cols));
    }
    ++rows;
  }
  TimeSeries m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) m(r, c) = values[r * cols + c];
  }
  return m;
}

TimeSeries parse_binary(const std::string& bytes, const fs::path& path) {
  constexpr std::size_t kHeader = 4 + 2 + 4 + 4;
  if (bytes.size() < kHeader || bytes.compare(0, 4, "STGM") != 0) {
    throw IoError(path.string() + ": missing STGM header");
  }
  const auto version = static_cast<std::uint16_t>(static_cast<unsigned char>(bytes[4]) |
                                                  (static_cast<unsigned char>(bytes[5]) << 8));
  if (version != kBinaryMatrixVersion) {
    throw IoError(path.string() + ": unsupported matrix version " + std::to_string(version));
  }
  const std::uint32_t rows = get_u32(bytes, 6);
  const std::uint32_t cols = get_u32(bytes, 10);
  if (bytes.size() != kHeader + std::size_t{rows} * cols * 4) {
    throw IoError(path.string() + ": payload size does not match " + std::to_string(rows) + "x" +
                  std::to_string(cols));
  }
  TimeSeries m(rows, cols);
  for (std::uint32_t r = 0; r < rows; ++r) {
    for (std::uint32_t c = 0; c < cols; ++c) {
      const std::uint32_t raw = get_u32(bytes, kHeader + (std::size_t{r} * cols + c) * 4);
      float f;
      std::memcpy(&f, &raw, 4);
      m(r, c) = f;
    }
  }
  return m;
}

}  // namespace

void write_file_atomic(const fs::path& path, const std::string& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

Manifest read_manifest(const fs::path& path) {
  json doc;
  try {
    doc = json::parse(read_bytes(path));
  } catch (const json::parse_error& e) {
    throw IoError(path.string() + ": " + e.what());
  }
  Manifest m;
  try {
    m.version = doc.at("version").get<int>();
    m.n_nodes = doc.at("n_nodes").get<std::size_t>();
    for (const auto& s : doc.at("subjects")) {
      ManifestSubject subject;
      subject.id = s.at("id").get<std::string>();
      subject.label = s.at("label").get<int>();
      subject.sessions = s.at("sessions").get<std::vector<std::string>>();
      if (subject.label != 0 && subject.label != 1) {
        throw IoError(path.string() + ": subject " + subject.id + " has label outside {0,1}");
      }
      m.subjects.push_back(std::move(subject));
    }
  } catch (const json::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  }
  if (m.version != kManifestVersion) {
    throw IoError(path.string() + ": unsupported manifest version " + std::to_string(m.version));
  }
  return m;
}

void write_manifest(const Manifest& manifest, const fs::path& path) {
  json doc;
  doc["version"] = manifest.version;
  doc["n_nodes"] = manifest.n_nodes;
  doc["subjects"] = json::array();
  for (const auto& s : manifest.subjects) {
    doc["subjects"].push_back({{"id", s.id}, {"label", s.label}, {"sessions", s.sessions}});
  }
  write_file_atomic(path, doc.dump(2) + "\n");
}

MatrixFormat format_for_path(const fs::path& path) {
  return path.extension() == ".csv" ? MatrixFormat::csv : MatrixFormat::binary;
}

TimeSeries read_matrix(const fs::path& path) {
  const std::string bytes = read_bytes(path);
  return format_for_path(path) == MatrixFormat::csv ? parse_csv(bytes, path) : parse_binary(bytes, path);
}

void write_matrix_csv(const TimeSeries& matrix, const fs::path& path) {
  std::string out;
  char buf[32];
  for (Eigen::Index r = 0; r < matrix.rows(); ++r) {
    for (Eigen::Index c = 0; c < matrix.cols(); ++c) {
      if (c) out.push_back(',');
      // Shortest text that parses back to the same double.
      const auto res = std::to_chars(buf, buf + sizeof buf, matrix(r, c));
      out.append(buf, res.ptr);
    }
    out.push_back('\n');
  }
  write_file_atomic(path, out);
}

void write_matrix_binary(const TimeSeries& matrix, const fs::path& path) {
  std::string out = "STGM";
  put_u16(out, kBinaryMatrixVersion);
  put_u32(out, static_cast<std::uint32_t>(matrix.rows()));
  put_u32(out, static_cast<std::uint32_t>(matrix.cols()));
  for (Eigen::Index r = 0; r < matrix.rows(); ++r) {
    for (Eigen::Index c = 0; c < matrix.cols(); ++c) {
      const float f = static_cast<float>(matrix(r, c));
      std::uint32_t raw;
      std::memcpy(&raw, &f, 4);
      put_u32(out, raw);
    }
  }
  write_file_atomic(path, out);
}

std::vector<SubjectRecord> load_dataset(const fs::path& manifest_path) {
  const Manifest manifest = read_manifest(manifest_path);
  const fs::path base = manifest_path.parent_path();
  std::vector<SubjectRecord> records;
  for (const auto& s : manifest.subjects) {
    SubjectRecord record;
    record.subject_id = s.id;
    record.label = s.label;
    for (const auto& session : s.sessions) {
      fs::path p(session);
      if (p.is_relative()) p = base / p;
      TimeSeries m = read_matrix(p);
      if (static_cast<std::size_t>(m.cols()) != manifest.n_nodes) {
        throw IoError(p.string() + ": has " + std::to_string(m.cols()) + " columns, manifest says " +
                      std::to_string(manifest.n_nodes));
      }
      record.sessions.push_back(std::move(m));
    }
    if (record.sessions.empty()) throw IoError("subject " + s.id + " lists no sessions");
    records.push_back(std::move(record));
  }
  return records;
}

}  // namespace stgnn::prep
