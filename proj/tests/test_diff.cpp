#include <doctest.h>

#include <cmath>
#include <random>

#include "stgnn/diff/adam.hpp"
#include "stgnn/diff/layers.hpp"
#include "stgnn/diff/ops.hpp"
#include "stgnn/errors.hpp"
#include "support/gradcheck.hpp"

using namespace stgnn;
using diff::Conv1dGeometry;
using diff::Tensor;
using testing::gradcheck;
using testing::project;
using testing::random_tensor;

namespace {

Tensor<double> vec(std::vector<double> v, bool grad = false) {
  const std::size_t n = v.size();
  return Tensor<double>::from({n}, std::move(v), grad);
}

// Direct nested-loop convolution with explicit zero padding.
std::vector<double> naive_conv(const Tensor<double>& x, const Tensor<double>& w,
                               const Tensor<double>& b, const Conv1dGeometry& g) {
  const std::size_t B = x.dim(0), C = x.dim(1), L = x.dim(2);
  const std::size_t O = w.dim(0), K = w.dim(2);
  std::vector<double> out;
  for (std::size_t bi = 0; bi < B; ++bi) {
    for (std::size_t o = 0; o < O; ++o) {
      for (std::size_t start = 0; start + g.dilation * (K - 1) < L + g.pad_left + g.pad_right;
           start += g.stride) {
        double s = b.data()[o];
        for (std::size_t c = 0; c < C; ++c) {
          for (std::size_t k = 0; k < K; ++k) {
            const long pos = static_cast<long>(start + k * g.dilation) - static_cast<long>(g.pad_left);
            if (pos < 0 || pos >= static_cast<long>(L)) continue;
            s += w.at({o, c, k}) * x.at({bi, c, static_cast<std::size_t>(pos)});
          }
        }
        out.push_back(s);
      }
    }
  }
  return out;
}

}  // namespace

TEST_CASE("conv1d moving sum and dilation examples") {
  auto x = Tensor<double>::from({1, 1, 5}, {1, 2, 3, 4, 5});
  auto w = Tensor<double>::from({1, 1, 3}, {1, 1, 1});
  auto b = Tensor<double>::from({1}, {0});
  auto y = diff::conv1d(x, w, b, Conv1dGeometry{});
  CHECK(std::vector<double>(y.data().begin(), y.data().end()) == std::vector<double>{6, 9, 12});

  auto x2 = Tensor<double>::from({1, 1, 4}, {1, 2, 3, 4});
  auto w2 = Tensor<double>::from({1, 1, 2}, {1, 1});
  auto y2 = diff::conv1d(x2, w2, b, Conv1dGeometry{1, 0, 0, 2});
  CHECK(std::vector<double>(y2.data().begin(), y2.data().end()) == std::vector<double>{4, 6});

  CHECK(Conv1dGeometry::symmetric(3, 2).output_length(1200, 7) == 600);
}

TEST_CASE("conv1d errors") {
  auto x = Tensor<double>::zeros({1, 2, 5});
  auto w = Tensor<double>::zeros({1, 3, 3});
  CHECK_THROWS_AS(diff::conv1d(x, w, Tensor<double>{}, Conv1dGeometry{}), DimensionError);
  auto w_long = Tensor<double>::zeros({1, 2, 7});
  CHECK_THROWS_AS(diff::conv1d(x, w_long, Tensor<double>{}, Conv1dGeometry{}), GeometryError);
}

TEST_CASE("conv1d length formula and values over an exhaustive geometry sweep") {
  std::mt19937_64 rng(3);
  std::size_t cases = 0;
  for (std::size_t L = 1; L <= 32; ++L) {
    for (std::size_t K = 1; K <= 7; ++K) {
      for (std::size_t s = 1; s <= 3; ++s) {
        for (std::size_t d = 1; d <= 4; ++d) {
          for (std::size_t pad : {std::size_t{0}, std::size_t{1}, std::size_t{3}}) {
            for (bool causal : {false, true}) {
              const Conv1dGeometry g =
                  causal ? Conv1dGeometry::causal(K, s, d) : Conv1dGeometry::symmetric(pad, s, d);
              const std::size_t padded = L + g.pad_left + g.pad_right;
              if (padded < d * (K - 1) + 1) {
                CHECK_THROWS_AS(g.output_length(L, K), GeometryError);
                continue;
              }
              std::size_t count = 0;
              for (std::size_t start = 0; start + d * (K - 1) < padded; start += s) ++count;
              REQUIRE(g.output_length(L, K) == count);
              if ((L + K + s + d) % 5 == 0) {
                auto x = random_tensor({2, 2, L}, rng, -1, 1, false);
                auto w = random_tensor({3, 2, K}, rng, -1, 1, false);
                auto b = random_tensor({3}, rng, -1, 1, false);
                auto y = diff::conv1d(x, w, b, g);
                auto ref = naive_conv(x, w, b, g);
                REQUIRE(y.numel() == ref.size());
                for (std::size_t i = 0; i < ref.size(); ++i) REQUIRE(y.data()[i] == doctest::Approx(ref[i]).epsilon(1e-12));
              }
              ++cases;
            }
          }
        }
      }
    }
  }
  CHECK(cases > 1000);
}

TEST_CASE("batchnorm examples") {
  auto x = Tensor<double>::from({2, 1, 1}, {1, 3});
  auto gamma = Tensor<double>::from({1}, {1});
  auto beta = Tensor<double>::from({1}, {0});
  auto rm = Tensor<double>::zeros({1});
  auto rv = Tensor<double>::full({1}, 1);
  auto y = diff::batchnorm1d(x, gamma, beta, rm, rv, true, 0.0, 0.1);
  CHECK(y.data()[0] == doctest::Approx(-1));
  CHECK(y.data()[1] == doctest::Approx(1));
  CHECK(rm.data()[0] == doctest::Approx(0.2));
  CHECK(rv.data()[0] == doctest::Approx(0.9 + 0.1 * 2.0));

  auto g2 = Tensor<double>::from({1}, {2});
  auto b2 = Tensor<double>::from({1}, {5});
  auto y2 = diff::batchnorm1d(x, g2, b2, rm, rv, true, 0.0, 0.1);
  CHECK(y2.data()[0] == doctest::Approx(3));
  CHECK(y2.data()[1] == doctest::Approx(7));

  auto single = Tensor<double>::from({1, 1, 1}, {4});
  CHECK_THROWS_AS(diff::batchnorm1d(single, gamma, beta, rm, rv, true, 1e-5, 0.1), DegenerateError);
  CHECK_NOTHROW(diff::batchnorm1d(single, gamma, beta, rm, rv, false, 1e-5, 0.1));
}

TEST_CASE("batchnorm train mode yields zero mean and unit variance per channel") {
  std::mt19937_64 rng(11);
  nn::BatchNorm1d<double> bn(3);
  auto x = random_tensor({4, 3, 8}, rng, -5, 9, false);
  auto y = bn.forward(x, true);
  for (std::size_t c = 0; c < 3; ++c) {
    double s = 0, ss = 0;
    for (std::size_t b = 0; b < 4; ++b)
      for (std::size_t t = 0; t < 8; ++t) s += y.at({b, c, t});
    const double mean = s / 32;
    for (std::size_t b = 0; b < 4; ++b)
      for (std::size_t t = 0; t < 8; ++t) ss += (y.at({b, c, t}) - mean) * (y.at({b, c, t}) - mean);
    CHECK(std::abs(mean) < 1e-5);
    CHECK(std::abs(ss / 32 - 1.0) < 1e-5);
  }
}

TEST_CASE("weight norm examples and parameter count") {
  auto dir = Tensor<double>::from({1, 2}, {3, 4});
  auto w1 = diff::weight_norm(dir, Tensor<double>::from({1}, {1}));
  CHECK(w1.data()[0] == doctest::Approx(0.6));
  CHECK(w1.data()[1] == doctest::Approx(0.8));
  auto w10 = diff::weight_norm(dir, Tensor<double>::from({1}, {10}));
  CHECK(w10.data()[0] == doctest::Approx(6));
  CHECK(w10.data()[1] == doctest::Approx(8));
  auto zero = diff::weight_norm(Tensor<double>::zeros({1, 2}), Tensor<double>::from({1}, {1}));
  CHECK(std::isfinite(zero.data()[0]));

  diff::Rng rng(1);
  nn::Conv1d<double> plain(4, 6, 5, Conv1dGeometry{}, rng);
  nn::WeightNormConv1d<double> normed(4, 6, 5, Conv1dGeometry{}, rng);
  nn::TensorRegistry<double> a, b;
  plain.collect(a, "c");
  normed.collect(b, "c");
  CHECK(b.parameter_count() == a.parameter_count() + 6);
  auto eff = normed.effective_weight();
  for (std::size_t i = 0; i < eff.numel(); ++i) CHECK(eff.data()[i] == doctest::Approx(normed.direction.data()[i]));
}

TEST_CASE("elementwise primitives") {
  auto s = diff::softmax_rows(Tensor<double>::from({1, 2}, {0, 0}));
  CHECK(s.data()[0] == doctest::Approx(0.5));
  CHECK(s.data()[1] == doctest::Approx(0.5));
  auto r = diff::relu(vec({-1, 2}));
  CHECK(r.data()[0] == 0.0);
  CHECK(r.data()[1] == 2.0);
  diff::Rng rng(5);
  auto x = vec({1, 2, 3});
  auto d = diff::dropout(x, 0.0, true, rng);
  for (int i = 0; i < 3; ++i) CHECK(d.data()[i] == x.data()[i]);
  auto e = diff::dropout(x, 0.5, false, rng);
  for (int i = 0; i < 3; ++i) CHECK(e.data()[i] == x.data()[i]);
  auto big = Tensor<double>::full({10000}, 1.0);
  auto kept = diff::dropout(big, 0.5, true, rng);
  double total = 0;
  for (double v : kept.data()) {
    CHECK((v == 0.0 || v == 2.0));
    total += v;
  }
  CHECK(total / 10000 == doctest::Approx(1.0).epsilon(0.05));
  CHECK_THROWS_AS(diff::add(vec({1, 2}), vec({1, 2, 3})), DimensionError);
  CHECK_THROWS_AS(diff::matmul(Tensor<double>::zeros({2, 3}), Tensor<double>::zeros({2, 3})), DimensionError);
}

TEST_CASE("softmax rows sum to one with entries in (0, 1)") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    auto x = random_tensor({3, 4, 5}, rng, -8, 8, false);
    auto s = diff::softmax_rows(x);
    for (std::size_t r = 0; r < 12; ++r) {
      double total = 0;
      for (std::size_t c = 0; c < 5; ++c) {
        const double v = s.data()[r * 5 + c];
        CHECK(v > 0.0);
        CHECK(v < 1.0);
        total += v;
      }
      CHECK(std::abs(total - 1.0) < 1e-6);
    }
  }
}

TEST_CASE("backward basics") {
  auto w = Tensor<double>::scalar(3, true);
  diff::square(w).backward();
  CHECK(w.grad()[0] == doctest::Approx(6));

  auto v = vec({1, 2}, true);
  CHECK_THROWS_AS(diff::square(v).backward(), ContractError);

  auto a = vec({1, 2}, true);
  auto frozen = a.detach();
  auto loss = diff::sum_all(diff::mul(a, frozen));
  loss.backward();
  CHECK(a.has_grad());
  CHECK_FALSE(frozen.has_grad());
  CHECK_FALSE(frozen.requires_grad());

  auto p = vec({1, 2}, true);
  {
    diff::NoGradGuard guard;
    auto q = diff::square(p);
    CHECK_FALSE(q.requires_grad());
  }
}

TEST_CASE("adam examples") {
  auto theta = Tensor<double>::scalar(0, true);
  theta.mutable_grad()[0] = 1;
  diff::Adam<double> opt({theta}, {0.1, 0.9, 0.999, 1e-8, 0.0});
  opt.step();
  CHECK(theta.item() == doctest::Approx(-0.1).epsilon(1e-6));

  auto still = Tensor<double>::scalar(2, true);
  still.mutable_grad()[0] = 0;
  diff::Adam<double> calm({still}, {0.1, 0.9, 0.999, 1e-8, 0.0});
  calm.step();
  CHECK(still.item() == 2.0);

  auto decayed = Tensor<double>::scalar(1, true);
  decayed.mutable_grad()[0] = 0;
  diff::Adam<double> wd({decayed}, {0.1, 0.9, 0.999, 1e-8, 0.5});
  wd.step();
  CHECK(decayed.item() == doctest::Approx(0.95));
  CHECK(wd.steps_taken() == 1);
}

TEST_CASE("primitive gradients match central differences") {
  std::mt19937_64 rng(20240);
  std::uniform_int_distribution<std::size_t> dim(1, 4);
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t B = dim(rng), C = std::min<std::size_t>(dim(rng), 3), L = 4 + dim(rng) + 0;
    auto x = random_tensor({B, C, L}, rng);
    auto y = random_tensor({B, C, L}, rng);
    auto m = random_tensor({B * C, L}, rng);
    auto w = random_tensor({3, L}, rng);
    auto bias = random_tensor({3}, rng);

    worst = std::max(worst, gradcheck({x, y}, [&] { return project(diff::mul(diff::add(x, diff::sigmoid(y)), diff::sub(x, diff::square(y)))); }).max_rel_error);
    worst = std::max(worst, gradcheck({x}, [&] { return project(diff::relu(diff::scale(x, 1.5))); }).max_rel_error);
    worst = std::max(worst, gradcheck({x}, [&] { return project(diff::softmax_rows(x)); }).max_rel_error);
    worst = std::max(worst, gradcheck({m, w, bias}, [&] { return project(diff::linear(m, w, bias)); }).max_rel_error);
    worst = std::max(worst, gradcheck({m, w}, [&] { return project(diff::matmul(m, diff::transpose_last(w))); }).max_rel_error);
    worst = std::max(worst, gradcheck({x}, [&] { return project(diff::mean_over_axis(x, trial % 3)); }).max_rel_error);
    worst = std::max(worst, gradcheck({x, y}, [&] {
      return project(diff::concat_last(std::vector<Tensor<double>>{diff::flatten(x), diff::reshape(y, {B, C * L})}));
    }).max_rel_error);
    auto sq = random_tensor({B, C, C}, rng, 0, 1);
    auto feats = random_tensor({B, C, 3}, rng);
    worst = std::max(worst, gradcheck({sq, feats}, [&] {
      return project(diff::bmm(diff::row_normalize_clamped(sq), feats));
    }).max_rel_error);
    worst = std::max(worst, gradcheck({sq}, [&] { return diff::frobenius_norm(sq); }).max_rel_error);
    auto logits = random_tensor({B, 4, 3}, rng, -2, 2);
    worst = std::max(worst, gradcheck({logits}, [&] { return diff::row_entropy_mean(diff::softmax_rows(logits)); }).max_rel_error);
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("conv, batchnorm and weight-norm gradients match central differences") {
  std::mt19937_64 rng(777);
  std::uniform_int_distribution<std::size_t> pick(1, 3);
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t B = pick(rng), C = pick(rng), O = pick(rng), K = pick(rng) + 1, L = 6 + pick(rng);
    const std::size_t stride = pick(rng), dil = pick(rng);
    const Conv1dGeometry g = trial % 2 ? Conv1dGeometry::causal(K, stride, dil)
                                       : Conv1dGeometry::symmetric(trial % 3, stride, dil);
    if (L + g.pad_left + g.pad_right < dil * (K - 1) + 1) continue;
    auto x = random_tensor({B, C, L}, rng);
    auto w = random_tensor({O, C, K}, rng);
    auto b = random_tensor({O}, rng);
    worst = std::max(worst, gradcheck({x, w, b}, [&] { return project(diff::conv1d(x, w, b, g)); }).max_rel_error);

    auto gain = random_tensor({O}, rng, 0.5, 2);
    worst = std::max(worst, gradcheck({x, w, gain}, [&] {
      return project(diff::conv1d(x, diff::weight_norm(w, gain), Tensor<double>{}, g));
    }).max_rel_error);

    auto gamma = random_tensor({C}, rng, 0.5, 2);
    auto beta = random_tensor({C}, rng);
    auto rm = Tensor<double>::zeros({C});
    auto rv = Tensor<double>::full({C}, 1);
    worst = std::max(worst, gradcheck({x, gamma, beta}, [&] {
      return project(diff::batchnorm1d(x, gamma, beta, rm, rv, true, 1e-5, 0.1));
    }).max_rel_error);
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("bce loss values and gradient") {
  auto p = vec({0.5}, true);
  CHECK(diff::bce_loss(p, std::vector<double>{1}).item() == doctest::Approx(std::log(2.0)));
  CHECK(diff::bce_loss(vec({1.0, 0.0}), std::vector<double>{1, 0}).item() < 1e-6);
  CHECK_THROWS_AS(diff::bce_loss(vec({0.5, 0.5}), std::vector<double>{1}), DimensionError);
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    auto q = random_tensor({6}, rng, 0.05, 0.95);
    std::vector<double> y{1, 0, 1, 1, 0, 0};
    CHECK(gradcheck({q}, [&] { return diff::bce_loss(q, y); }).max_rel_error < 1e-4);
  }
}

TEST_CASE("identical seeds give bit-identical parameter trajectories") {
  auto run = [] {
    diff::Rng rng(42);
    nn::Linear<float> layer(5, 3, rng);
    nn::TensorRegistry<float> reg;
    layer.collect(reg, "l");
    diff::Adam<float> opt(reg.parameter_tensors(), {});
    std::vector<float> trace;
    for (int step = 0; step < 10; ++step) {
      std::normal_distribution<float> n;
      std::vector<float> input(20);
      for (auto& v : input) v = n(rng);
      auto x = Tensor<float>::from({4, 5}, input);
      opt.zero_grad();
      auto loss = diff::mean_all(diff::square(diff::dropout(layer.forward(x), 0.3, true, rng)));
      loss.backward();
      opt.step();
      for (float v : layer.weight.data()) trace.push_back(v);
    }
    return trace;
  };
  CHECK(run() == run());
}
