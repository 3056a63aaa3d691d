#include <doctest.h>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "stgnn/errors.hpp"
#include "stgnn/prep/io.hpp"
#include "stgnn/synth/synth.hpp"

using namespace stgnn;
using namespace stgnn::synth;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("stgnn_synth_" + name);
  fs::remove_all(dir);
  return dir;
}

struct Welch {
  double t;
  double p;
};

Welch welch(const std::vector<double>& a, const std::vector<double>& b) {
  auto moments = [](const std::vector<double>& v) {
    double m = 0;
    for (double x : v) m += x;
    m /= v.size();
    double s = 0;
    for (double x : v) s += (x - m) * (x - m);
    return std::pair{m, s / (v.size() - 1)};
  };
  const auto [ma, va] = moments(a);
  const auto [mb, vb] = moments(b);
  const double se2 = va / a.size() + vb / b.size();
  const double t = (ma - mb) / std::sqrt(se2);
  const double df = se2 * se2 / (std::pow(va / a.size(), 2) / (a.size() - 1) + std::pow(vb / b.size(), 2) / (b.size() - 1));
  boost::math::students_t dist(df);
  return {t, 2 * boost::math::cdf(boost::math::complement(dist, std::abs(t)))};
}

double fisher_combined(const std::vector<double>& pvalues) {
  double stat = 0;
  for (double p : pvalues) stat += -2 * std::log(p);
  boost::math::chi_squared dist(2.0 * pvalues.size());
  return boost::math::cdf(boost::math::complement(dist, stat));
}

// Per subject: a statistic averaged over all sessions and the given nodes.
template <typename F>
std::pair<std::vector<double>, std::vector<double>> by_class(const SynthDataset& d, F stat) {
  std::vector<double> neg, pos;
  for (const auto& s : d.subjects) {
    double total = 0;
    for (const auto& m : s.sessions) total += stat(m);
    (s.label ? pos : neg).push_back(total / s.sessions.size());
  }
  return {neg, pos};
}

double node_mean(const prep::TimeSeries& m, std::size_t j) { return m.col(j).mean(); }

double node_var(const prep::TimeSeries& m, std::size_t j) {
  const double mu = m.col(j).mean();
  return (m.col(j).array() - mu).square().sum() / (m.rows() - 1);
}

double lag1(const prep::TimeSeries& m, std::size_t j) {
  const Eigen::VectorXd c = m.col(j).array() - m.col(j).mean();
  return c.head(c.size() - 1).dot(c.tail(c.size() - 1)) / c.squaredNorm();
}

double correlation(const prep::TimeSeries& m, std::size_t i, std::size_t j) {
  const Eigen::VectorXd a = m.col(i).array() - m.col(i).mean();
  const Eigen::VectorXd b = m.col(j).array() - m.col(j).mean();
  return a.dot(b) / std::sqrt(a.squaredNorm() * b.squaredNorm());
}

}  // namespace

TEST_CASE("configuration errors") {
  SynthConfig c;
  CHECK_NOTHROW(c.validate());
  c.subjects = 41;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.nodes = 1;
  CHECK_THROWS_AS(generate(c), ConfigError);
  c = {};
  c.length = 31;
  CHECK_THROWS_AS(generate(c), ConfigError);
  c = {};
  c.effect = 1.5;
  CHECK_THROWS_AS(generate(c), ConfigError);
  CHECK_THROWS_AS(parse_signal_kind("phase"), ConfigError);
  for (auto k : {SignalKind::covariance, SignalKind::spectral, SignalKind::both})
    CHECK(parse_signal_kind(to_string(k)) == k);
}

TEST_CASE("shape, balance and signal subset") {
  SynthConfig c{40, 20, 4, 160, 1.0, SignalKind::covariance, 7};
  const auto d = generate(c);
  REQUIRE(d.subjects.size() == 40);
  int positives = 0;
  for (const auto& s : d.subjects) {
    positives += s.label;
    REQUIRE(s.sessions.size() == 4);
    for (const auto& m : s.sessions) {
      CHECK(m.rows() == 160);
      CHECK(m.cols() == 20);
    }
  }
  CHECK(positives == 20);
  CHECK(d.signal_nodes.size() == 4);
  CHECK(d.signal_nodes == signal_subset(20, 7));
  CHECK(signal_subset(50, 7).size() == 10);
  CHECK(signal_subset(3, 1).size() == 1);
  CHECK(std::is_sorted(d.signal_nodes.begin(), d.signal_nodes.end()));
}

TEST_CASE("values are float representable and generation is seeded") {
  SynthConfig c{6, 5, 2, 40, 0.5, SignalKind::both, 3};
  const auto a = generate(c);
  const auto b = generate(c);
  c.seed = 4;
  const auto other = generate(c);
  for (std::size_t s = 0; s < a.subjects.size(); ++s)
    for (std::size_t k = 0; k < 2; ++k) {
      const auto& m = a.subjects[s].sessions[k];
      CHECK(m == b.subjects[s].sessions[k]);
      CHECK(m != other.subjects[s].sessions[k]);
      for (Eigen::Index i = 0; i < m.size(); ++i) CHECK(static_cast<double>(static_cast<float>(m(i))) == m(i));
    }
}

TEST_CASE("written datasets round trip and repeat byte for byte") {
  SynthConfig c{4, 6, 3, 40, 1.0, SignalKind::covariance, 11};
  const auto d = generate(c);
  for (auto format : {prep::MatrixFormat::csv, prep::MatrixFormat::binary}) {
    const auto dir_a = scratch("a"), dir_b = scratch("b");
    const auto manifest = write_dataset(d, dir_a, format);
    write_dataset(d, dir_b, format);
    std::size_t files = 0;
    for (const auto& e : fs::directory_iterator(dir_a)) {
      ++files;
      CHECK(slurp(e.path()) == slurp(dir_b / e.path().filename()));
    }
    CHECK(files == 1 + 4 * 3);
    const auto loaded = prep::load_dataset(manifest);
    REQUIRE(loaded.size() == d.subjects.size());
    for (std::size_t s = 0; s < loaded.size(); ++s) {
      CHECK(loaded[s].subject_id == d.subjects[s].subject_id);
      CHECK(loaded[s].label == d.subjects[s].label);
      for (std::size_t k = 0; k < 3; ++k) CHECK(loaded[s].sessions[k] == d.subjects[s].sessions[k]);
    }
    fs::remove_all(dir_a);
    fs::remove_all(dir_b);
  }
}

TEST_CASE("zero effect leaves node means and variances indistinguishable") {
  std::vector<double> p_mean, p_var;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto d = generate({40, 20, 4, 160, 0.0, SignalKind::both, seed});
    for (std::size_t j : d.signal_nodes) {
      const auto [m0, m1] = by_class(d, [j](const prep::TimeSeries& m) { return node_mean(m, j); });
      p_mean.push_back(welch(m0, m1).p);
      const auto [v0, v1] = by_class(d, [j](const prep::TimeSeries& m) { return node_var(m, j); });
      p_var.push_back(welch(v0, v1).p);
    }
  }
  CHECK(fisher_combined(p_mean) > 0.01);
  CHECK(fisher_combined(p_var) > 0.01);
}

TEST_CASE("covariance signal raises correlation within the subset") {
  const auto d = generate({40, 20, 4, 160, 1.0, SignalKind::covariance, 5});
  const auto i = d.signal_nodes[0], j = d.signal_nodes[1];
  const auto [r0, r1] = by_class(d, [&](const prep::TimeSeries& m) { return correlation(m, i, j); });
  const auto w = welch(r1, r0);
  CHECK(w.t > 0);
  CHECK(w.p < 1e-6);
  double mean1 = 0;
  for (double r : r1) mean1 += r / r1.size();
  CHECK(mean1 == doctest::Approx(1.0 / (1.0 + 1.0 / (1.0 - kBaseAr * kBaseAr))).epsilon(0.15));
}

TEST_CASE("spectral signal shifts the lag-one autocorrelation") {
  const auto d = generate({40, 20, 4, 400, 1.0, SignalKind::spectral, 6});
  const auto j = d.signal_nodes[0];
  const auto [a0, a1] = by_class(d, [&](const prep::TimeSeries& m) { return lag1(m, j); });
  double m0 = 0, m1 = 0;
  for (double v : a0) m0 += v / a0.size();
  for (double v : a1) m1 += v / a1.size();
  CHECK(m0 == doctest::Approx(kBaseAr).epsilon(0.1));
  CHECK(m1 == doctest::Approx(kBaseAr + kSpectralShift).epsilon(0.1));
  std::size_t off = 0;
  while (std::find(d.signal_nodes.begin(), d.signal_nodes.end(), off) != d.signal_nodes.end()) ++off;
  const auto [b0, b1] = by_class(d, [&](const prep::TimeSeries& m) { return lag1(m, off); });
  CHECK(welch(b0, b1).p > 1e-4);
}
