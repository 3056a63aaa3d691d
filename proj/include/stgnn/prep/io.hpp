#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "stgnn/prep/types.hpp"

namespace stgnn::prep {

enum class MatrixFormat { csv, binary };

struct ManifestSubject {
  std::string id;
  int label = 0;
  // As written in the manifest; relative paths resolve against its directory.
  std::vector<std::string> sessions;
};

struct Manifest {
  int version = 1;
  std::size_t n_nodes = 0;
  std::vector<ManifestSubject> subjects;
};

inline constexpr int kManifestVersion = 1;
inline constexpr std::uint16_t kBinaryMatrixVersion = 1;

Manifest read_manifest(const std::filesystem::path& path);
void write_manifest(const Manifest& manifest, const std::filesystem::path& path);

// CSV: no header, one row per timestep. Binary: "STGM", u16 version, u32 rows,
// u32 cols, row-major float32, all little-endian. Format is chosen by
// extension (.csv, anything else binary) when reading.
TimeSeries read_matrix(const std::filesystem::path& path);
void write_matrix_csv(const TimeSeries& matrix, const std::filesystem::path& path);
void write_matrix_binary(const TimeSeries& matrix, const std::filesystem::path& path);
MatrixFormat format_for_path(const std::filesystem::path& path);

// Loads every subject listed in a manifest and checks node counts.
std::vector<SubjectRecord> load_dataset(const std::filesystem::path& manifest_path);

// Writes through a sibling temp file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);

}  // namespace stgnn::prep
