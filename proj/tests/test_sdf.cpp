#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "shapeseg/errors.hpp"
#include "shapeseg/sdf.hpp"

using namespace shapeseg;

namespace {

SliceField binary(std::size_t w, std::size_t h, std::vector<double> v) {
  return SliceField(w, h, SliceKind::Binary, std::move(v));
}

SliceField center_pixel() { return binary(3, 3, {0, 0, 0, 0, 1, 0, 0, 0, 0}); }

std::vector<double> values_of(const SliceField& s) { return {s.values().begin(), s.values().end()}; }

}  // namespace

TEST_CASE("1D transform handles sites, gaps and weights") {
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> f{inf, 0, inf, inf, inf, 0, inf};
  std::vector<double> out(f.size());
  distance_transform_1d(f, out);
  CHECK(out == std::vector<double>{1, 0, 1, 4, 1, 0, 1});

  distance_transform_1d(f, out, 2.0);
  CHECK(out == std::vector<double>{4, 0, 4, 16, 4, 0, 4});

  std::vector<double> none(4, inf);
  std::vector<double> o4(4);
  distance_transform_1d(none, o4);
  CHECK(std::all_of(o4.begin(), o4.end(), [](double v) { return std::isinf(v); }));

  // Nonzero offsets at the sites.
  std::vector<double> g{3, inf, 0, inf};
  distance_transform_1d(g, o4);
  CHECK(o4 == std::vector<double>{3, 1, 0, 1});
}

TEST_CASE("edt of single center pixel") {
  const auto d = edt_squared(center_pixel(), 1);
  CHECK(values_of(d) == std::vector<double>{2, 1, 2, 1, 0, 1, 2, 1, 2});
}

TEST_CASE("edt all target gives zeros, no target throws") {
  const auto ones = binary(4, 3, std::vector<double>(12, 1.0));
  const auto d = edt_squared(ones, 1);
  CHECK(std::all_of(d.values().begin(), d.values().end(), [](double v) { return v == 0.0; }));
  CHECK_THROWS_AS(edt_squared(ones, 0), EmptinessError);
}

TEST_CASE("edt rejects real-valued slices") {
  CHECK_THROWS_AS(edt_squared(SliceField::zeros(3, 3, SliceKind::Real), 0), ValidationError);
}

TEST_CASE("edt matches the brute-force oracle on random masks") {
  Pcg32 rng(2024);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t w = 1 + rng.below(24);
    const std::size_t h = 1 + rng.below(24);
    const double p = rng.uniform(0.02, 0.98);
    auto v = oracle::random_binary(rng, w * h, p);
    v[rng.below(static_cast<std::uint32_t>(w * h))] = 1.0;
    const auto mask = binary(w, h, v);
    for (int label : {0, 1}) {
      const auto expect = oracle::edt_squared(v, w, h, label);
      if (expect[0] < 0) {
        CHECK_THROWS_AS(edt_squared(mask, label), EmptinessError);
        continue;
      }
      CHECK(values_of(edt_squared(mask, label)) == expect);
    }
  }
}

TEST_CASE("raw sdf of center pixel") {
  const auto s = sdf_from_mask(center_pixel());
  CHECK_FALSE(s.normalized);
  CHECK(s.values[4] == -0.5);
  for (std::size_t i : {1u, 3u, 5u, 7u}) CHECK(s.values[i] == 0.5);
  for (std::size_t i : {0u, 2u, 6u, 8u}) CHECK(s.values[i] == doctest::Approx(std::sqrt(2.0) - 0.5).epsilon(1e-15));
  CHECK(s.values == oracle::raw_sdf(values_of(center_pixel()), 3, 3));
}

TEST_CASE("boundary offset can be disabled") {
  const auto s = sdf_from_mask(center_pixel(), SdfOptions{.boundary_offset = false});
  CHECK(s.values[4] == -1.0);
  CHECK(s.values[1] == 1.0);
  CHECK(s.values[0] == std::sqrt(2.0));
}

TEST_CASE("normalized center pixel") {
  const auto n = normalize_sdf(sdf_from_mask(center_pixel()));
  CHECK(n.normalized);
  CHECK(n.scale == doctest::Approx(std::sqrt(2.0) - 0.5).epsilon(1e-15));
  CHECK(n.values[0] == 1.0);
  CHECK(n.values[4] == doctest::Approx(-0.5 / (std::sqrt(2.0) - 0.5)).epsilon(1e-15));
  CHECK(n.values[4] == doctest::Approx(-0.5469).epsilon(1e-4));
  CHECK_THROWS_AS(normalize_sdf(n), ArgumentError);
}

TEST_CASE("degenerate slices saturate") {
  const std::size_t w = 5, h = 7;
  const double diag = std::sqrt(25.0 + 49.0) - 0.5;
  const auto bg = sdf_from_mask(SliceField::zeros(w, h, SliceKind::Binary));
  CHECK(std::all_of(bg.values.begin(), bg.values.end(), [&](double v) { return v == diag; }));
  const auto fg = sdf_from_mask(binary(w, h, std::vector<double>(w * h, 1.0)));
  CHECK(std::all_of(fg.values.begin(), fg.values.end(), [&](double v) { return v == -diag; }));
  const auto nbg = normalize_sdf(bg);
  const auto nfg = normalize_sdf(fg);
  CHECK(std::all_of(nbg.values.begin(), nbg.values.end(), [](double v) { return v == 1.0; }));
  CHECK(std::all_of(nfg.values.begin(), nfg.values.end(), [](double v) { return v == -1.0; }));
}

TEST_CASE("normalizing an all-zero raw field yields zeros with unit scale") {
  SignedDistanceSlice raw{.width = 2, .height = 2, .values = {0, 0, 0, 0}};
  const auto n = normalize_sdf(raw);
  CHECK(n.scale == 1.0);
  CHECK(n.values == std::vector<double>{0, 0, 0, 0});
}

TEST_CASE("sdf is symmetric under a horizontal flip of a symmetric mask") {
  Pcg32 rng(9);
  const std::size_t w = 12, h = 9;
  std::vector<double> v(w * h);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w / 2; ++x) {
      const double b = rng.uniform() < 0.4 ? 1.0 : 0.0;
      v[x + y * w] = b;
      v[(w - 1 - x) + y * w] = b;
    }
  }
  v[3] = v[w - 4] = 1.0;
  const auto s = sdf_from_mask(binary(w, h, v));
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) CHECK(s.values[x + y * w] == s.values[(w - 1 - x) + y * w]);
  }
}

TEST_CASE("sdf properties on random masks") {
  Pcg32 rng(77);
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t w = 3 + rng.below(22);
    const std::size_t h = 3 + rng.below(22);
    auto v = oracle::random_binary(rng, w * h, rng.uniform(0.1, 0.9));
    v[0] = 1.0;
    v[w * h - 1] = 0.0;
    const auto mask = binary(w, h, v);
    const auto raw = sdf_from_mask(mask);
    const auto norm = normalize_sdf(raw);

    REQUIRE(raw.values == oracle::raw_sdf(v, w, h));

    double max_abs = 0.0;
    for (double x : norm.values) max_abs = std::max(max_abs, std::abs(x));
    CHECK(max_abs == 1.0);

    for (std::size_t i = 0; i < v.size(); ++i) {
      // Zero-crossing fidelity and sign convention.
      CHECK((norm.values[i] < 0.0) == (v[i] == 1.0));
      CHECK(std::signbit(norm.values[i]) == std::signbit(raw.values[i]));
      CHECK(norm.values[i] >= -1.0);
      CHECK(norm.values[i] <= 1.0);
    }

    // Boundary adjacency.
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        const std::size_t i = x + y * w;
        const int nb[4][2] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}};
        bool touches_other = false;
        for (const auto& d : nb) {
          const long nx = static_cast<long>(x) + d[0];
          const long ny = static_cast<long>(y) + d[1];
          if (nx < 0 || ny < 0 || nx >= static_cast<long>(w) || ny >= static_cast<long>(h)) continue;
          touches_other = touches_other || v[static_cast<std::size_t>(nx) + static_cast<std::size_t>(ny) * w] != v[i];
        }
        if (v[i] == 1.0 && touches_other) CHECK(raw.values[i] == -0.5);
        if (v[i] == 0.0) {
          CHECK(raw.values[i] >= 0.5);
          if (touches_other) CHECK(raw.values[i] == 0.5);
        }
      }
    }

    // Relaxed Lipschitz bound and order preservation over all pixel pairs.
    for (std::size_t p = 0; p < v.size(); ++p) {
      for (std::size_t q = p + 1; q < v.size(); ++q) {
        const double dx = static_cast<double>(p % w) - static_cast<double>(q % w);
        const double dy = static_cast<double>(p / w) - static_cast<double>(q / w);
        CHECK(std::abs(raw.values[p] - raw.values[q]) <= std::hypot(dx, dy) + 1.0 + 1e-12);
        CHECK((raw.values[p] < raw.values[q]) == (norm.values[p] < norm.values[q]));
      }
    }
  }
}

TEST_CASE("sdf volume transforms slices independently") {
  Pcg32 rng(8);
  const Dims3 dims{8, 8, 4};
  std::vector<float> data(dims[0] * dims[1] * dims[2]);
  for (auto& v : data) v = rng.uniform() < 0.45 ? 1.0f : 0.0f;
  // Slice 2 entirely background, slice 3 entirely foreground.
  std::fill(data.begin() + 128, data.begin() + 192, 0.0f);
  std::fill(data.begin() + 192, data.end(), 1.0f);
  data[0] = 1.0f;
  data[1] = 0.0f;
  data[64] = 1.0f;
  data[65] = 0.0f;
  const VolumeGrid mask(dims, {0.5, 0.5, 2.0}, {1, 2, 3}, ElementKind::BinaryMask, data);
  const auto out = sdf_volume(mask);
  CHECK(out.kind() == ElementKind::ScalarF32);
  CHECK(out.same_geometry(mask));

  for (std::size_t z = 0; z < 2; ++z) {
    const auto slice = extract_slice(mask, z);
    const auto raw = oracle::raw_sdf(values_of(slice), 8, 8);
    double scale = 0.0;
    for (double r : raw) scale = std::max(scale, std::abs(r));
    for (std::size_t i = 0; i < 64; ++i) {
      CHECK(out.data()[z * 64 + i] == static_cast<float>(raw[i] / scale));
    }
  }
  for (std::size_t i = 128; i < 192; ++i) CHECK(out.data()[i] == 1.0f);
  for (std::size_t i = 192; i < 256; ++i) CHECK(out.data()[i] == -1.0f);

  // Permuting slices permutes outputs.
  std::vector<SliceField> slices;
  for (std::size_t z : {3u, 1u, 0u, 2u}) slices.push_back(extract_slice(mask, z));
  const auto permuted = sdf_volume(stack_slices(slices, mask.spacing(), mask.origin()));
  const std::size_t order[4] = {3, 1, 0, 2};
  for (std::size_t z = 0; z < 4; ++z) {
    for (std::size_t i = 0; i < 64; ++i) CHECK(permuted.data()[z * 64 + i] == out.data()[order[z] * 64 + i]);
  }

  const auto raw = sdf_volume_raw(mask);
  CHECK(raw.data()[128] == static_cast<float>(std::sqrt(128.0) - 0.5));
  CHECK_THROWS_AS(sdf_volume(out), ValidationError);
}

TEST_CASE("all-background volume saturates to +1") {
  const auto mask = VolumeGrid::zeros({6, 4, 3}, {1, 1, 1}, {0, 0, 0}, ElementKind::BinaryMask);
  const auto out = sdf_volume(mask);
  CHECK(std::all_of(out.data().begin(), out.data().end(), [](float v) { return v == 1.0f; }));
}
