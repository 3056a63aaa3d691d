#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <filesystem>
#include <random>

#include "stgnn/errors.hpp"
#include "stgnn/prep/connectivity.hpp"
#include "stgnn/prep/io.hpp"
#include "stgnn/prep/samples.hpp"
#include "stgnn/prep/scaling.hpp"
#include "support/oracles.hpp"

using namespace stgnn;
using namespace stgnn::prep;

namespace {

Eigen::MatrixXd gaussian(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = n(rng);
  return m;
}

SubjectRecord make_subject(const std::string& id, int label, std::size_t sessions, std::size_t length,
                           std::size_t nodes, std::mt19937_64& rng) {
  SubjectRecord r{id, label, {}};
  for (std::size_t s = 0; s < sessions; ++s) r.sessions.push_back(gaussian(length, nodes, rng));
  return r;
}

}  // namespace

TEST_CASE("robust scale examples") {
  std::vector<double> a{1, 2, 3, 4, 5};
  auto s = robust_scale(a);
  std::vector<double> expected{-1, -0.5, 0, 0.5, 1};
  for (int i = 0; i < 5; ++i) CHECK(s[i] == doctest::Approx(expected[i]));
  std::vector<double> flat{7, 7, 7};
  for (double v : robust_scale(flat)) CHECK(v == 0.0);
  CHECK_THROWS_AS(robust_scale(std::vector<double>{}), ContractError);
}

TEST_CASE("robust scale output has median 0 and IQR 1") {
  std::mt19937_64 rng(8);
  std::exponential_distribution<double> e(0.3);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> x(5 + trial * 3);
    for (auto& v : x) v = e(rng);
    auto y = robust_scale(x);
    CHECK(std::abs(quantile(y, 0.5)) < 1e-6);
    CHECK(std::abs(quantile(y, 0.75) - quantile(y, 0.25) - 1.0) < 1e-6);
  }
}

TEST_CASE("window split partitions each session") {
  TimeSeries session(8, 2);
  for (int t = 0; t < 8; ++t) {
    session(t, 0) = t;
    session(t, 1) = 10 * t;
  }
  SubjectRecord r{"s", 1, {session}};
  auto windows = window_split(r, 2, false);
  REQUIRE(windows.size() == 2);
  for (std::size_t w = 0; w < 2; ++w) {
    CHECK(windows[w].window_index == w);
    CHECK(windows[w].features.rows() == 2);
    CHECK(windows[w].features.cols() == 4);
    for (int t = 0; t < 4; ++t) {
      CHECK(windows[w].features(0, t) == static_cast<float>(w * 4 + t));
      CHECK(windows[w].features(1, t) == static_cast<float>(10 * (w * 4 + t)));
    }
  }
  CHECK_THROWS_AS(window_split(r, 3), ConfigError);
}

TEST_CASE("window split counts and per-window scaling") {
  std::mt19937_64 rng(1);
  auto r = make_subject("a", 0, 4, 1200, 3, rng);
  CHECK(window_split(r, 1).size() == 4);
  auto w64 = window_split(r, 16);
  CHECK(w64.size() == 64);
  for (const auto& w : w64) {
    CHECK(w.features.cols() == 75);
    std::vector<double> row(w.features.row(0).begin(), w.features.row(0).end());
    CHECK(std::abs(quantile(row, 0.5)) < 1e-5);
  }
}

TEST_CASE("ledoit-wolf matches the direct-formula oracle") {
  std::mt19937_64 rng(123);
  for (int trial = 0; trial < 50; ++trial) {
    Eigen::MatrixXd x = gaussian(500, 5, rng);
    x.col(trial % 5) *= 3.0;
    x.col((trial + 1) % 5) += 0.5 * x.col((trial + 2) % 5);
    auto est = ledoit_wolf(x);
    auto ref = testing::ledoit_wolf_direct(x);
    CHECK((est.covariance - ref.covariance).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(est.shrinkage >= 0.0);
    CHECK(est.shrinkage <= 1.0);
    CHECK(std::abs(est.shrinkage - ref.shrinkage) < 1e-10);
    const double mu = est.empirical.trace() / 5;
    Eigen::MatrixXd blend = est.shrinkage * mu * Eigen::MatrixXd::Identity(5, 5) +
                            (1 - est.shrinkage) * est.empirical;
    CHECK((blend - est.covariance).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((est.covariance - est.covariance.transpose()).cwiseAbs().maxCoeff() == 0.0);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(est.covariance);
    CHECK(eig.eigenvalues().minCoeff() >= -1e-10);
  }
}

TEST_CASE("ledoit-wolf edge cases") {
  Eigen::MatrixXd iso(4, 2);
  iso << 1, 1, -1, 1, 1, -1, -1, -1;
  auto est = ledoit_wolf(iso);
  CHECK((est.covariance - Eigen::MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-14);

  Eigen::MatrixXd single(4, 1);
  single << 1, 2, 3, 6;
  auto one = ledoit_wolf(single);
  CHECK(one.shrinkage == 0.0);
  CHECK(one.covariance(0, 0) == doctest::Approx(3.5));

  CHECK_THROWS_AS(ledoit_wolf(Eigen::MatrixXd::Ones(1, 3)), ContractError);
}

TEST_CASE("covariance to correlation") {
  Eigen::MatrixXd c(2, 2);
  c << 4, 0, 0, 9;
  CHECK(covariance_to_correlation(c).isApprox(Eigen::MatrixXd::Identity(2, 2)));
  Eigen::MatrixXd r(2, 2);
  r << 1, 0.5, 0.5, 1;
  CHECK(covariance_to_correlation(r).isApprox(r));
  Eigen::MatrixXd bad(2, 2);
  bad << 0, 0, 0, 1;
  CHECK_THROWS_AS(covariance_to_correlation(bad), DegenerateError);

  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::MatrixXd g = gaussian(6, 6, rng);
    Eigen::MatrixXd spd = g * g.transpose() + 0.1 * Eigen::MatrixXd::Identity(6, 6);
    auto corr = covariance_to_correlation(spd);
    for (int i = 0; i < 6; ++i) CHECK(corr(i, i) == 1.0);
    CHECK((corr - corr.transpose()).cwiseAbs().maxCoeff() == 0.0);
    CHECK(corr.cwiseAbs().maxCoeff() <= 1.0 + 1e-12);
  }
}

TEST_CASE("threshold examples") {
  Eigen::MatrixXd r(3, 3);
  r << 1, 0.9, 0.5, 0.9, 1, 0.1, 0.5, 0.1, 1;
  auto a = threshold_edges(r, 100.0 / 3.0);
  REQUIRE(a.edge_count() == 1);
  CHECK(a.edges()[0] == AdjacencyMatrix::Edge{0, 1});
  auto full = threshold_edges(r, 100);
  CHECK(full.edge_count() == 3);
  CHECK_THROWS_AS(threshold_edges(r, 0), ConfigError);
  CHECK_THROWS_AS(threshold_edges(r, 101), ConfigError);
  CHECK(threshold_edge_count(50, 5) == 61);
  CHECK(threshold_edge_count(50, 20) == 245);

  Eigen::MatrixXd ties = Eigen::MatrixXd::Constant(4, 4, 0.3);
  ties.diagonal().setOnes();
  auto t = threshold_edges(ties, 50);
  REQUIRE(t.edge_count() == 3);
  CHECK(t.edges()[0] == AdjacencyMatrix::Edge{0, 1});
  CHECK(t.edges()[1] == AdjacencyMatrix::Edge{0, 2});
  CHECK(t.edges()[2] == AdjacencyMatrix::Edge{0, 3});
}

TEST_CASE("thresholded adjacencies are symmetric, loop-free and sized by the percent rule") {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 5 + trial;
    Eigen::MatrixXd x = gaussian(3 * n, n, rng);
    auto corr = covariance_to_correlation(ledoit_wolf_covariance(x));
    for (double pct : {5.0, 20.0}) {
      auto a = threshold_edges(corr, pct);
      CHECK(a.edge_count() == testing::floor_edge_count(n, pct));
      const auto index = a.edge_index();
      CHECK(index[0].size() == a.edge_count());
      std::size_t ones = 0;
      for (std::size_t i = 0; i < n; ++i) {
        CHECK_FALSE(a.connected(i, i));
        for (std::size_t j = 0; j < n; ++j) {
          CHECK(a.connected(i, j) == a.connected(j, i));
          ones += a.connected(i, j);
        }
      }
      CHECK(ones == 2 * a.edge_count());
      // every kept pair is at least as strong as every dropped pair
      double weakest_kept = 2, strongest_dropped = -1;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
          const double s = std::abs(corr(i, j));
          if (a.connected(i, j)) weakest_kept = std::min(weakest_kept, s);
          else strongest_dropped = std::max(strongest_dropped, s);
        }
      CHECK(weakest_kept >= strongest_dropped);
    }
  }
}

TEST_CASE("adjacency edge list validation") {
  auto a = AdjacencyMatrix::from_edges(3, {{2, 0}, {0, 2}, {1, 2}});
  CHECK(a.edge_count() == 2);
  CHECK(a.degree(2) == 2);
  CHECK_THROWS_AS(AdjacencyMatrix::from_edges(3, {{1, 1}}), ContractError);
  CHECK_THROWS_AS(AdjacencyMatrix::from_edges(3, {{0, 3}}), DimensionError);
}

TEST_CASE("balance by subject") {
  std::vector<SubjectRecord> records;
  for (int i = 0; i < 534; ++i) records.push_back({"p" + std::to_string(i), 1, {}});
  for (int i = 0; i < 469; ++i) records.push_back({"n" + std::to_string(i), 0, {}});
  auto balanced = balance_by_subject(records, 3);
  const auto positives = std::count_if(balanced.begin(), balanced.end(), [](auto& r) { return r.label == 1; });
  CHECK(positives == 469);
  CHECK(balanced.size() == 938);
  CHECK(balanced.size() * 4 == 3752);
  CHECK(balanced.size() * 64 == 60032);
  auto again = balance_by_subject(records, 3);
  for (std::size_t i = 0; i < balanced.size(); ++i) CHECK(again[i].subject_id == balanced[i].subject_id);

  auto unchanged = balance_by_subject(balanced, 99);
  REQUIRE(unchanged.size() == balanced.size());
  for (std::size_t i = 0; i < balanced.size(); ++i) CHECK(unchanged[i].subject_id == balanced[i].subject_id);

  std::vector<SubjectRecord> lonely{{"a", 1, {}}};
  CHECK_THROWS_AS(balance_by_subject(lonely, 1), ContractError);
}

TEST_CASE("graph samples carry correlations and the configured edge count") {
  std::mt19937_64 rng(2);
  auto r = make_subject("x", 1, 2, 150, 10, rng);
  auto samples = build_samples({r}, PrepConfig{2, 20});
  REQUIRE(samples.size() == 4);
  for (const auto& s : samples) {
    CHECK(s.adjacency.edge_count() == 9);
    CHECK(s.correlation_upper.size() == 45);
    CHECK(s.window.features.cols() == 75);
  }
}

TEST_CASE("matrix and manifest files round-trip") {
  const auto dir = std::filesystem::temp_directory_path() / "stgnn_prep_io";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  std::mt19937_64 rng(4);
  Eigen::MatrixXd m = gaussian(7, 3, rng).cast<float>().cast<double>();
  write_matrix_csv(m, dir / "a.csv");
  write_matrix_binary(m, dir / "a.bin");
  CHECK(read_matrix(dir / "a.csv") == m);
  CHECK(read_matrix(dir / "a.bin") == m);

  Manifest manifest;
  manifest.n_nodes = 3;
  manifest.subjects = {{"s0", 1, {"a.csv", "a.bin"}}, {"s1", 0, {"a.bin"}}};
  write_manifest(manifest, dir / "manifest.json");
  auto back = read_manifest(dir / "manifest.json");
  CHECK(back.n_nodes == 3);
  REQUIRE(back.subjects.size() == 2);
  CHECK(back.subjects[0].sessions == manifest.subjects[0].sessions);
  auto records = load_dataset(dir / "manifest.json");
  REQUIRE(records.size() == 2);
  CHECK(records[0].sessions[1] == m);
  CHECK(records[1].label == 0);

  CHECK_THROWS_AS(read_matrix(dir / "missing.csv"), IoError);
  std::filesystem::remove_all(dir);
}
