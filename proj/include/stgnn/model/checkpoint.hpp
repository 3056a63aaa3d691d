#pragma once

#include <filesystem>
#include <string>

#include "stgnn/model/model.hpp"

namespace stgnn::model {

// Layout, little-endian throughout:
//   "STGC" | u16 version | u32 json length | JSON {spec, geometry}
//   | u32 tensor count | per tensor: u32 name length, name bytes,
//     u32 rank, u32 dims[rank], float32 values
// Parameters come first, then buffers, each in registry order.
inline constexpr std::uint16_t kCheckpointVersion = 1;

std::string spec_to_json(const ModelSpec& spec, const InputGeometry& geometry);
std::pair<ModelSpec, InputGeometry> spec_from_json(const std::string& text);

template <typename T>
std::string serialize_checkpoint(const Model<T>& model);

// Rebuilds the model from the embedded spec and loads every tensor.
template <typename T>
Model<T> deserialize_checkpoint(const std::string& bytes);

template <typename T>
void save_checkpoint(const Model<T>& model, const std::filesystem::path& path);

template <typename T>
Model<T> load_checkpoint(const std::filesystem::path& path);

}  // namespace stgnn::model
