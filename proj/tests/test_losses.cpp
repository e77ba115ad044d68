#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "shapeseg/errors.hpp"
#include "shapeseg/losses.hpp"

using namespace shapeseg;

namespace {

std::vector<double> uniform_vec(Pcg32& rng, std::size_t n, double lo, double hi) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

SliceField real(std::size_t w, std::size_t h, std::vector<double> v) {
  return SliceField(w, h, SliceKind::Real, std::move(v));
}

}  // namespace

TEST_CASE("loss config validation") {
  LossConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  CHECK(cfg.epsilon == 1e-6);
  CHECK(cfg.clamp_delta == 1e-7);
  CHECK(cfg.weights.bce == 1.0);
  CHECK(cfg.weights.laplacian == 1.0);
  auto bad = cfg;
  bad.epsilon = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.clamp_delta = 0.5;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = cfg;
  bad.weights.l1 = -1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("laplacian kernel sums to zero and is rotation invariant") {
  int sum = 0;
  for (int k : kLaplacianKernel) sum += k;
  CHECK(sum == 0);
  for (int y = 0; y < 3; ++y) {
    for (int x = 0; x < 3; ++x) CHECK(kLaplacianKernel[x * 3 + (2 - y)] == kLaplacianKernel[y * 3 + x]);
  }
}

TEST_CASE("bce closed forms") {
  LossConfig cfg;
  const std::vector<double> ones(16, 1.0);
  const std::vector<double> half(16, 0.5);
  CHECK(bce_loss(half, ones, cfg).value == doctest::Approx(std::log(2.0)).epsilon(1e-15));

  std::vector<double> truth{1, 0, 1, 1, 0, 0};
  std::vector<double> perfect;
  for (double y : truth) perfect.push_back(y == 1.0 ? 1.0 - cfg.clamp_delta : cfg.clamp_delta);
  const double v = bce_loss(perfect, truth, cfg).value;
  CHECK(v == doctest::Approx(-std::log(1.0 - cfg.clamp_delta)).epsilon(1e-12));
  CHECK(v < 1e-6);

  // Hard 0/1 predictions are clamped rather than producing infinities.
  std::vector<double> wrong{0, 1, 0, 0, 1, 1};
  const auto w = bce_loss(wrong, truth, cfg);
  CHECK(std::isfinite(w.value));
  // 1 - (1 - delta) is not exactly delta in floating point.
  CHECK(w.value == doctest::Approx(-std::log(cfg.clamp_delta)).epsilon(1e-9));

  cfg.reduction = Reduction::Sum;
  CHECK(bce_loss(half, ones, cfg).value == doctest::Approx(16.0 * std::log(2.0)).epsilon(1e-15));
}

TEST_CASE("dice closed forms") {
  LossConfig cfg;
  const std::vector<double> truth{1, 1, 0, 0};
  const std::vector<double> pred{1, 0, 0, 0};
  const auto d = dice_loss(pred, truth, cfg);
  // 1 - (2 + eps) / (3 + eps) = 1 / (3 + eps)
  CHECK(std::abs(d.value - 1.0 / (3.0 + cfg.epsilon)) <= 1e-12);
  CHECK(std::abs(d.value - 1.0 / 3.0) <= 1e-6);

  CHECK(dice_loss(truth, truth, cfg).value <= 1e-6);
  CHECK(dice_loss(truth, truth, cfg).value >= 0.0);

  const std::vector<double> disjoint{0, 0, 1, 1};
  CHECK(dice_loss(disjoint, truth, cfg).value == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("l1 closed forms") {
  Pcg32 rng(1);
  const auto t = uniform_vec(rng, 30, -1, 1);
  auto p = t;
  for (auto& x : p) x += 0.25;
  CHECK(l1_loss(t, t).value == 0.0);
  CHECK(l1_loss(p, t).value == doctest::Approx(0.25).epsilon(1e-14));
  for (double g : l1_loss(t, t).gradient) CHECK(g == 0.0);
  CHECK(l1_loss(p, t, Reduction::Sum).value == doctest::Approx(7.5).epsilon(1e-14));
}

TEST_CASE("laplacian filter oracles") {
  std::vector<double> delta(16, 0.0);
  delta[1 + 1 * 4] = 1.0;
  const auto out = laplacian_filter(delta, 4, 4);
  CHECK(out == std::vector<double>{-4, 1, 1, 0});
  CHECK(out == oracle::laplacian(delta, 4, 4));

  Pcg32 rng(12);
  const auto f = uniform_vec(rng, 9 * 7, -3, 3);
  const auto got = laplacian_filter(f, 9, 7);
  const auto want = oracle::laplacian(f, 9, 7);
  REQUIRE(got.size() == want.size());
  for (std::size_t i = 0; i < got.size(); ++i) CHECK(std::abs(got[i] - want[i]) <= 1e-12);

  std::vector<double> affine(6 * 5);
  for (std::size_t y = 0; y < 5; ++y) {
    for (std::size_t x = 0; x < 6; ++x) affine[x + 6 * y] = 2.5 - 0.75 * x + 1.25 * y;
  }
  for (double v : laplacian_filter(affine, 6, 5)) CHECK(std::abs(v) <= 1e-12);

  const auto sf = laplacian_filter(real(4, 4, delta));
  CHECK(sf.width() == 2);
  CHECK(sf.height() == 2);
  CHECK_THROWS_AS(laplacian_filter(std::vector<double>(6, 0.0), 2, 3), ShapeError);
}

TEST_CASE("laplacian loss closed forms") {
  std::vector<double> delta(16, 0.0);
  delta[5] = 1.0;
  const std::vector<double> zeros(16, 0.0);
  CHECK(laplacian_loss(delta, zeros, 4, 4).value == 1.5);
  CHECK(laplacian_loss(delta, delta, 4, 4).value == 0.0);

  Pcg32 rng(4);
  const auto y = uniform_vec(rng, 64, -1, 1);
  auto shifted = y;
  for (auto& v : shifted) v += 0.375;
  CHECK(laplacian_loss(shifted, y, 8, 8).value <= 1e-12);
}

TEST_CASE("l1 and laplacian losses are symmetric") {
  Pcg32 rng(21);
  for (int t = 0; t < 10; ++t) {
    const auto a = uniform_vec(rng, 64, -1, 1);
    const auto b = uniform_vec(rng, 64, -1, 1);
    CHECK(l1_loss(a, b).value == l1_loss(b, a).value);
    CHECK(laplacian_loss(a, b, 8, 8).value == doctest::Approx(laplacian_loss(b, a, 8, 8).value).epsilon(1e-14));
  }
}

TEST_CASE("losses are finite, nonnegative and dice stays in [0, 1]") {
  Pcg32 rng(31);
  LossConfig cfg;
  for (int t = 0; t < 50; ++t) {
    const auto truth = oracle::random_binary(rng, 64, rng.uniform());
    auto pred = uniform_vec(rng, 64, 0, 1);
    if (t % 5 == 0) {
      for (auto& p : pred) p = std::round(p);
    }
    const auto b = bce_loss(pred, truth, cfg);
    const auto d = dice_loss(pred, truth, cfg);
    CHECK(std::isfinite(b.value));
    CHECK(b.value >= 0.0);
    CHECK(d.value >= 0.0);
    CHECK(d.value <= 1.0);
  }
}

TEST_CASE("shape mismatches are rejected") {
  LossConfig cfg;
  const auto a = SliceField::zeros(4, 4, SliceKind::Real);
  const auto b = SliceField::zeros(4, 5, SliceKind::Real);
  CHECK_THROWS_AS(bce_loss(a, b, cfg), ShapeError);
  CHECK_THROWS_AS(dice_loss(a, b, cfg), ShapeError);
  CHECK_THROWS_AS(l1_loss(a, b), ShapeError);
  CHECK_THROWS_AS(laplacian_loss(a, b), ShapeError);
  CHECK_THROWS_AS(total_loss(a, a, a, b, cfg), ShapeError);
  const auto tiny = SliceField::zeros(2, 4, SliceKind::Real);
  CHECK_THROWS_AS(laplacian_loss(tiny, tiny), ShapeError);
}

TEST_CASE("gradients match finite differences") {
  Pcg32 rng(55);
  LossConfig cfg;
  const std::size_t w = 8, h = 8, n = w * h;
  for (int trial = 0; trial < 5; ++trial) {
    const auto truth = oracle::random_binary(rng, n, 0.5);
    // Keep predictions well inside the clamp interval.
    const auto pred = uniform_vec(rng, n, 0.05, 0.95);
    const auto sdf_truth = uniform_vec(rng, n, -1, 1);
    auto sdf_pred = uniform_vec(rng, n, -1, 1);

    SUBCASE("bce") {
      const auto g = oracle::numeric_gradient([&](const std::vector<double>& p) { return bce_loss(p, truth, cfg).value; },
                                              pred);
      CHECK(oracle::max_relative_error(bce_loss(pred, truth, cfg).gradient, g) < 1e-4);
    }
    SUBCASE("dice") {
      const auto g = oracle::numeric_gradient(
          [&](const std::vector<double>& p) { return dice_loss(p, truth, cfg).value; }, pred);
      CHECK(oracle::max_relative_error(dice_loss(pred, truth, cfg).gradient, g) < 1e-4);
    }
    SUBCASE("l1") {
      const auto g = oracle::numeric_gradient([&](const std::vector<double>& p) { return l1_loss(p, sdf_truth).value; },
                                              sdf_pred);
      CHECK(oracle::max_relative_error(l1_loss(sdf_pred, sdf_truth).gradient, g) < 1e-4);
    }
    SUBCASE("laplacian") {
      const auto g = oracle::numeric_gradient(
          [&](const std::vector<double>& p) { return laplacian_loss(p, sdf_truth, w, h).value; }, sdf_pred);
      CHECK(oracle::max_relative_error(laplacian_loss(sdf_pred, sdf_truth, w, h).gradient, g) < 1e-4);
    }
    SUBCASE("total, both heads") {
      LossConfig weighted = cfg;
      weighted.weights = {0.7, 1.3, 0.4, 2.0};
      const auto t = total_loss(pred, truth, sdf_pred, sdf_truth, w, h, weighted);
      const auto gs = oracle::numeric_gradient(
          [&](const std::vector<double>& p) {
            return total_loss(p, truth, sdf_pred, sdf_truth, w, h, weighted).breakdown.total;
          },
          pred);
      const auto gr = oracle::numeric_gradient(
          [&](const std::vector<double>& p) {
            return total_loss(pred, truth, p, sdf_truth, w, h, weighted).breakdown.total;
          },
          sdf_pred);
      CHECK(oracle::max_relative_error(t.seg_gradient, gs) < 1e-4);
      CHECK(oracle::max_relative_error(t.sdf_gradient, gr) < 1e-4);
    }
  }
}

TEST_CASE("bce gradient vanishes where the prediction is clamped") {
  LossConfig cfg;
  const std::vector<double> truth{1, 0};
  const std::vector<double> pred{0.0, 1.0};
  const auto b = bce_loss(pred, truth, cfg);
  CHECK(b.gradient == std::vector<double>{0.0, 0.0});
}

TEST_CASE("total loss breakdown invariants") {
  Pcg32 rng(66);
  const std::size_t w = 6, h = 5;
  const auto truth = oracle::random_binary(rng, w * h, 0.5);
  const auto pred = uniform_vec(rng, w * h, 0.01, 0.99);
  const auto st = uniform_vec(rng, w * h, -1, 1);
  const auto sp = uniform_vec(rng, w * h, -1, 1);

  LossConfig cfg;
  cfg.weights = {0.5, 2.0, 3.0, 0.25};
  const auto t = total_loss(pred, truth, sp, st, w, h, cfg);
  const auto& b = t.breakdown;
  CHECK(b.seg_total == 0.5 * b.bce + 2.0 * b.dice);
  CHECK(b.reg_total == 3.0 * b.l1 + 0.25 * b.laplacian);
  CHECK(b.total == b.seg_total + b.reg_total);

  cfg.weights = {1, 0, 0, 0};
  const auto only_bce = total_loss(pred, truth, sp, st, w, h, cfg);
  CHECK(only_bce.breakdown.total == bce_loss(pred, truth, cfg).value);

  cfg.weights = {1, 1, 0, 0};
  CHECK(total_loss(pred, truth, sp, st, w, h, cfg).breakdown.reg_total == 0.0);
  for (double g : total_loss(pred, truth, sp, st, w, h, cfg).sdf_gradient) CHECK(g == 0.0);

  // Perfect prediction on both heads.
  LossConfig unit;
  std::vector<double> seg_perfect(truth);
  const auto perfect = total_loss(seg_perfect, truth, st, st, w, h, unit);
  CHECK(perfect.breakdown.total <= 1e-5);

  const auto sf = total_loss(real(w, h, pred), SliceField(w, h, SliceKind::Binary, truth), real(w, h, sp),
                             real(w, h, st), LossConfig{});
  CHECK(sf.breakdown.total == total_loss(pred, truth, sp, st, w, h, LossConfig{}).breakdown.total);
}
