#include "stgnn/model/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "stgnn/errors.hpp"
#include "stgnn/prep/io.hpp"

namespace stgnn::model {

using nlohmann::json;

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int s = 0; s < 32; s += 8) out.push_back(static_cast<char>((v >> s) & 0xff));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int k = 0; k < 4; ++k) {
      v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + k])) << (8 * k);
    }
    pos_ += 4;
    return v;
  }

  std::uint16_t u16() {
    need(2);
    const auto v = static_cast<std::uint16_t>(static_cast<unsigned char>(bytes_[pos_]) |
                                              (static_cast<unsigned char>(bytes_[pos_ + 1]) << 8));
    pos_ += 2;
    return v;
  }

  std::string take(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw IoError("checkpoint truncated");
  }

  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string spec_to_json(const ModelSpec& spec, const InputGeometry& geometry) {
  json doc = {
      {"name", spec.name()},
      {"encoder", encoders::to_string(spec.encoder)},
      {"use_gcn", spec.use_gcn},
      {"pooling", spec.pooling == Pooling::mean ? "mean" : "diffpool"},
      {"threshold_percent", spec.threshold_percent},
      {"windows_per_scan", spec.windows_per_scan},
      {"embed_dim", spec.embed_dim},
      {"dropout", spec.dropout},
      {"seed", spec.seed},
      {"nodes", geometry.nodes},
      {"length", geometry.length},
  };
  return doc.dump();
}

std::pair<ModelSpec, InputGeometry> spec_from_json(const std::string& text) {
  try {
    const json doc = json::parse(text);
    ModelSpec spec;
    spec.encoder = encoders::parse_encoder_kind(doc.at("encoder").get<std::string>());
    spec.use_gcn = doc.at("use_gcn").get<bool>();
    const auto pooling = doc.at("pooling").get<std::string>();
    if (pooling != "mean" && pooling != "diffpool") throw IoError("unknown pooling " + pooling);
    spec.pooling = pooling == "mean" ? Pooling::mean : Pooling::diffpool;
    spec.threshold_percent = doc.at("threshold_percent").get<double>();
    spec.windows_per_scan = doc.at("windows_per_scan").get<std::size_t>();
    spec.embed_dim = doc.at("embed_dim").get<std::size_t>();
    spec.dropout = doc.at("dropout").get<double>();
    spec.seed = doc.at("seed").get<std::uint64_t>();
    InputGeometry geometry{doc.at("nodes").get<std::size_t>(), doc.at("length").get<std::size_t>()};
    return {spec, geometry};
  } catch (const json::exception& e) {
    throw IoError(std::string("checkpoint spec: ") + e.what());
  }
}

template <typename T>
std::string serialize_checkpoint(const Model<T>& model) {
  std::string out = "STGC";
  out.push_back(static_cast<char>(kCheckpointVersion & 0xff));
  out.push_back(static_cast<char>(kCheckpointVersion >> 8));
  const std::string header = spec_to_json(model.spec(), model.geometry());
  put_u32(out, static_cast<std::uint32_t>(header.size()));
  out += header;

  const auto& reg = model.registry();
  put_u32(out, static_cast<std::uint32_t>(reg.parameters().size() + reg.buffers().size()));
  auto write_tensor = [&](const nn::NamedTensor<T>& named) {
    put_u32(out, static_cast<std::uint32_t>(named.name.size()));
    out += named.name;
    const auto& shape = named.tensor.shape();
    put_u32(out, static_cast<std::uint32_t>(shape.size()));
    for (auto d : shape) put_u32(out, static_cast<std::uint32_t>(d));
    for (T v : named.tensor.data()) {
      const float f = static_cast<float>(v);
      std::uint32_t raw;
      std::memcpy(&raw, &f, 4);
      put_u32(out, raw);
    }
  };
  for (const auto& p : reg.parameters()) write_tensor(p);
  for (const auto& b : reg.buffers()) write_tensor(b);
  return out;
}

template <typename T>
Model<T> deserialize_checkpoint(const std::string& bytes) {
  Reader in(bytes);
  if (in.take(4) != "STGC") throw IoError("not a checkpoint (bad magic)");
  const std::uint16_t version = in.u16();
  if (version != kCheckpointVersion) {
    throw IoError("unsupported checkpoint version " + std::to_string(version));
  }
  const std::uint32_t header_len = in.u32();
  auto [spec, geometry] = spec_from_json(in.take(header_len));
  Model<T> model(spec, geometry);

  std::vector<nn::NamedTensor<T>> slots = model.registry().parameters();
  const auto& buffers = model.registry().buffers();
  slots.insert(slots.end(), buffers.begin(), buffers.end());
  const std::uint32_t count = in.u32();
  if (count != slots.size()) {
    throw IoError("checkpoint holds " + std::to_string(count) + " tensors, model expects " +
                  std::to_string(slots.size()));
  }
  for (auto& slot : slots) {
    const std::string name = in.take(in.u32());
    if (name != slot.name) throw IoError("checkpoint tensor '" + name + "' where '" + slot.name + "' expected");
    const std::uint32_t rank = in.u32();
    diff::Shape shape;
    for (std::uint32_t r = 0; r < rank; ++r) shape.push_back(in.u32());
    if (shape != slot.tensor.shape()) throw IoError("checkpoint shape mismatch for " + name);
    auto data = slot.tensor.data();
    for (auto& v : data) {
      const std::uint32_t raw = in.u32();
      float f;
      std::memcpy(&f, &raw, 4);
      v = static_cast<T>(f);
    }
  }
  if (!in.done()) throw IoError("trailing bytes after checkpoint");
  return model;
}

template <typename T>
void save_checkpoint(const Model<T>& model, const std::filesystem::path& path) {
  prep::write_file_atomic(path, serialize_checkpoint(model));
}

template <typename T>
Model<T> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_checkpoint<T>(ss.str());
}

template std::string serialize_checkpoint(const Model<float>&);
template std::string serialize_checkpoint(const Model<double>&);
template Model<float> deserialize_checkpoint(const std::string&);
template Model<double> deserialize_checkpoint(const std::string&);
template void save_checkpoint(const Model<float>&, const std::filesystem::path&);
template void save_checkpoint(const Model<double>&, const std::filesystem::path&);
template Model<float> load_checkpoint(const std::filesystem::path&);
template Model<double> load_checkpoint(const std::filesystem::path&);

}  // namespace stgnn::model
