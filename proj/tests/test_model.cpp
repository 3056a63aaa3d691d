#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <numeric>
#include <random>

#include "stgnn/diff/adam.hpp"
#include "stgnn/errors.hpp"
#include "stgnn/model/checkpoint.hpp"
#include "stgnn/model/model.hpp"
#include "stgnn/prep/samples.hpp"

using namespace stgnn;
using namespace stgnn::model;

namespace {

ModelSpec spec_for(const std::string& name, std::uint64_t seed = 0) {
  ModelSpec s = parse_model_name(name).spec;
  s.seed = seed;
  return s;
}

std::vector<prep::GraphSample> tiny_samples(std::size_t subjects, std::size_t nodes, std::size_t length,
                                            std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n;
  std::vector<prep::SubjectRecord> records;
  for (std::size_t s = 0; s < subjects; ++s) {
    prep::SubjectRecord r{"s" + std::to_string(s), static_cast<int>(s % 2), {}};
    prep::TimeSeries ts(length, nodes);
    for (Eigen::Index i = 0; i < ts.rows(); ++i)
      for (Eigen::Index j = 0; j < ts.cols(); ++j) ts(i, j) = n(rng) + (r.label ? 0.5 * ts(i, 0) : 0.0);
    r.sessions.push_back(ts);
    records.push_back(r);
  }
  return prep::build_samples(records, {1, 20});
}

std::vector<std::size_t> all_indices(std::size_t n) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  return idx;
}

// conv + batchnorm parameters depend only on the channel list; the projection
// on the flattened width.
std::size_t mean_cnn_formula(std::size_t length) {
  std::size_t l = length;
  for (int layer = 0; layer < 4; ++layer) l = (l + 6 - 6 - 1) / 2 + 1;
  return 19232 + 64 * l * 256 + 256 + 257;
}

}  // namespace

TEST_CASE("parameter counts reproduce the published table") {
  CHECK(parameter_count(spec_for("mean_CNN"), {50, 1200}) == 1248545);
  CHECK(parameter_count(spec_for("mean_CNN_GCN5"), {50, 1200}) == 1314337);
  CHECK(parameter_count(spec_for("mean_CNN_64split"), {50, 75}) == 101665);
  for (std::size_t t : {16u, 75u, 160u, 333u, 1200u}) {
    const auto plain = parameter_count(spec_for("mean_CNN"), {20, t});
    CHECK(plain == mean_cnn_formula(t));
    CHECK(parameter_count(spec_for("mean_CNN_GCN5"), {20, t}) - plain == 65792);
    CHECK(parameter_count(spec_for("mean_TCN_GCN"), {20, t}) - parameter_count(spec_for("mean_TCN"), {20, t}) == 65792);
  }
  CHECK(parameter_count(spec_for("mean_CNN"), {7, 1200}) == parameter_count(spec_for("mean_CNN"), {50, 1200}));
}

TEST_CASE("model names parse and print") {
  for (std::string name : {"mean_CNN", "mean_CNN_GCN5", "mean_TCN_GCN20", "diff5_CNN_GCN", "diff20_TCN",
                           "mean_CNN_64split", "diff5_TCN_GCN_64split"}) {
    CHECK(spec_for(name).name() == name);
  }
  CHECK(parse_model_name("mean_CNN_GCN").threshold_in_name == false);
  CHECK(parse_model_name("mean_CNN_GCN_4split").windows_in_name);
  CHECK(spec_for("mean_CNN_GCN_4split").name() == "mean_CNN_GCN5");
  CHECK(spec_for("diff20_CNN").pooling == Pooling::diffpool);
  CHECK(spec_for("diff20_CNN").threshold_percent == 20.0);
  CHECK_THROWS_AS(parse_model_name("max_CNN"), ConfigError);
  CHECK_THROWS_AS(parse_model_name("mean5_CNN"), ConfigError);
  CHECK_THROWS_AS(parse_model_name("diff5_CNN_GCN5"), ConfigError);
  ModelSpec bad;
  bad.dropout = 1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("builds are deterministic per seed") {
  Model<float> a(spec_for("diff5_CNN_GCN", 3), {8, 32});
  Model<float> b(spec_for("diff5_CNN_GCN", 3), {8, 32});
  Model<float> c(spec_for("diff5_CNN_GCN", 4), {8, 32});
  CHECK(a.snapshot() == b.snapshot());
  CHECK(a.snapshot() != c.snapshot());
  std::vector<std::string> names;
  for (const auto& p : a.registry().parameters()) names.push_back(p.name);
  CHECK(std::find(names.begin(), names.end(), "gcn.weight") != names.end());
  CHECK(std::find(names.begin(), names.end(), "head.weight") != names.end());
  CHECK(std::find_if(names.begin(), names.end(), [](auto& s) { return s.rfind("diffpool.level1", 0) == 0; }) != names.end());
}

TEST_CASE("forward produces probabilities and respects batch independence") {
  auto samples = tiny_samples(6, 8, 32, 1);
  for (std::string name : {"mean_CNN", "mean_TCN_GCN", "diff20_CNN_GCN", "diff20_TCN"}) {
    Model<double> m(spec_for(name, 2), {8, 32});
    auto idx = all_indices(samples.size());
    Rng rng(0);
    {
      diff::NoGradGuard g;
      m.forward(make_batch<double>(samples, idx, true), true, rng);
    }
    auto together = predict(m, samples, idx, 4);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      CHECK(together[i] > 0.0);
      CHECK(together[i] < 1.0);
      std::size_t one[] = {i};
      auto alone = predict(m, samples, one);
      CHECK(alone[0] == doctest::Approx(together[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("zero head gives one half") {
  auto samples = tiny_samples(2, 8, 32, 2);
  Model<double> m(spec_for("mean_CNN_GCN5", 1), {8, 32});
  for (const auto& p : m.registry().parameters()) {
    if (p.name.rfind("head", 0) != 0) continue;
    auto t = p.tensor;
    std::fill(t.data().begin(), t.data().end(), 0.0);
  }
  for (double p : predict(m, samples, all_indices(2))) CHECK(p == 0.5);
}

TEST_CASE("mixed batch shapes are rejected") {
  auto a = tiny_samples(2, 8, 32, 3);
  auto b = tiny_samples(2, 6, 32, 3);
  a.push_back(b[0]);
  auto idx = all_indices(3);
  CHECK_THROWS_AS(make_batch<float>(a, idx, false), DimensionError);
  Model<float> m(spec_for("mean_CNN"), {8, 40});
  Rng rng(0);
  auto batch = make_batch<float>(std::span(a).first(2), std::vector<std::size_t>{0, 1}, false);
  CHECK_THROWS_AS(m.forward(batch, false, rng), DimensionError);
}

TEST_CASE("mean-pool models are consistent under node permutation") {
  auto samples = tiny_samples(2, 8, 32, 4);
  std::mt19937_64 gen(9);
  Model<float> m(spec_for("mean_CNN_GCN5", 5), {8, 32});
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<std::uint32_t> perm(8);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), gen);
    auto permuted = samples[0];
    for (std::size_t i = 0; i < 8; ++i) permuted.window.features.row(i) = samples[0].window.features.row(perm[i]);
    std::vector<prep::AdjacencyMatrix::Edge> edges;
    std::vector<std::uint32_t> inverse(8);
    for (std::uint32_t i = 0; i < 8; ++i) inverse[perm[i]] = i;
    for (auto [i, j] : samples[0].adjacency.edges()) edges.emplace_back(inverse[i], inverse[j]);
    permuted.adjacency = prep::AdjacencyMatrix::from_edges(8, edges);
    std::vector<prep::GraphSample> pair{samples[0], permuted};
    auto p = predict(m, pair, all_indices(2));
    CHECK(std::abs(p[0] - p[1]) < 1e-5);
  }
}

TEST_CASE("bce loss") {
  auto p = diff::Tensor<double>::from({1}, {0.5});
  CHECK(model::bce_loss(p, std::vector<double>{1}).item() == doctest::Approx(0.693147).epsilon(1e-5));
}

TEST_CASE("one optimizer step lowers the training loss") {
  auto samples = tiny_samples(4, 6, 16, 5);
  auto idx = all_indices(samples.size());
  int decreased = 0;
  for (int trial = 0; trial < 100; ++trial) {
    Model<double> m(spec_for(trial % 2 ? "mean_CNN_GCN5" : "mean_CNN", trial), {6, 16});
    auto batch = make_batch<double>(samples, idx, true);
    Rng rng(trial);
    diff::Adam<double> opt(m.parameters(), {1e-4, 0.9, 0.999, 1e-8, 0.0});
    auto loss = model::bce_loss(m.forward(batch, true, rng).probabilities, batch.labels);
    loss.backward();
    opt.step();
    diff::NoGradGuard g;
    const double after = model::bce_loss(m.forward(batch, true, rng).probabilities, batch.labels).item();
    decreased += after < loss.item();
  }
  CHECK(decreased >= 95);
}

TEST_CASE("checkpoints round-trip bit-exactly") {
  auto samples = tiny_samples(3, 8, 32, 6);
  for (std::string name : {"mean_TCN_GCN20", "diff5_CNN_GCN"}) {
    Model<float> m(spec_for(name, 8), {8, 32});
    Rng rng(1);
    {
      diff::NoGradGuard g;
      m.forward(make_batch<float>(samples, all_indices(3), true), true, rng);
    }
    const auto bytes = serialize_checkpoint(m);
    auto back = deserialize_checkpoint<float>(bytes);
    CHECK(back.spec().name() == name);
    CHECK(back.snapshot() == m.snapshot());
    CHECK(serialize_checkpoint(back) == bytes);
    CHECK(predict(back, samples, all_indices(3)) == predict(m, samples, all_indices(3)));
  }
  Model<float> m(spec_for("mean_CNN", 1), {4, 16});
  const auto dir = std::filesystem::temp_directory_path() / "stgnn_ckpt";
  std::filesystem::create_directories(dir);
  save_checkpoint(m, dir / "m.ckpt");
  CHECK(load_checkpoint<float>(dir / "m.ckpt").snapshot() == m.snapshot());
  auto bytes = serialize_checkpoint(m);
  CHECK_THROWS_AS(deserialize_checkpoint<float>(bytes.substr(0, bytes.size() - 1)), IoError);
  bytes[0] = 'X';
  CHECK_THROWS_AS(deserialize_checkpoint<float>(bytes), IoError);
  std::filesystem::remove_all(dir);
}
