#include <cmath>
#include <numbers>
#include <set>

#include "doctest.h"
#include "shapeseg/errors.hpp"
#include "shapeseg/phantom.hpp"
#include "shapeseg/sdf.hpp"
#include "test_util.hpp"

using namespace shapeseg;

TEST_CASE("phantom parameter validation") {
  CHECK_NOTHROW(PhantomSpec{}.validate());
  CHECK_THROWS_AS((PhantomSpec{.count = 0}.validate()), ConfigError);
  CHECK_THROWS_AS((PhantomSpec{.size = 30}.validate()), ConfigError);
  CHECK_THROWS_AS((PhantomSpec{.noise_sigma = -0.1}.validate()), ConfigError);
  CHECK(parse_shape_family("sphere") == ShapeFamily::Sphere);
  CHECK(parse_shape_family(to_string(ShapeFamily::TwoLobe)) == ShapeFamily::TwoLobe);
  CHECK_THROWS_AS(parse_shape_family("cube"), ConfigError);
}

TEST_CASE("noise-free images stay in [0, 1] and follow the mask") {
  for (auto family : {ShapeFamily::Sphere, ShapeFamily::Ellipsoid, ShapeFamily::TwoLobe}) {
    const PhantomSpec spec{.size = 32, .slices = 16, .seed = 3, .family = family, .noise_sigma = 0.0};
    const auto c = gen_case(spec, 2);
    CHECK(c.image.dims() == Dims3{32, 32, 16});
    CHECK(c.mask.is_mask());
    for (float v : c.image.data()) {
      CHECK(v >= 0.0f);
      CHECK(v <= 1.0f);
    }
    // Deep interior voxels are exactly 1, far exterior exactly 0.
    CHECK(c.image.at(0, 0, 0) == 0.0f);
    double fg = 0.0;
    for (float v : c.mask.data()) fg += v;
    CHECK(fg > 100.0);
  }
}

TEST_CASE("generation is deterministic per seed and index") {
  const PhantomSpec spec{.size = 32, .slices = 12, .seed = 99};
  const auto a = gen_case(spec, 4);
  const auto b = gen_case(spec, 4);
  CHECK(a.image == b.image);
  CHECK(a.mask == b.mask);
  const auto c = gen_case(spec, 5);
  CHECK_FALSE(a.mask == c.mask);
  PhantomSpec other = spec;
  other.seed = 100;
  CHECK_FALSE(gen_case(other, 4).image == a.image);
}

TEST_CASE("all families respect the margin") {
  for (auto family : {ShapeFamily::Sphere, ShapeFamily::Ellipsoid, ShapeFamily::TwoLobe}) {
    for (std::size_t i = 0; i < 40; ++i) {
      const PhantomSpec spec{.size = 64, .slices = 32, .seed = 7, .family = family};
      CHECK_NOTHROW(check_margin(sample_shape(spec, i), {64, 64, 32}));
    }
  }
  PhantomShape too_big{{Ellipsoid{{10, 10, 10}, {9, 3, 3}}}};
  CHECK_THROWS_AS(check_margin(too_big, {32, 32, 32}), ConfigError);
}

TEST_CASE("two-lobe shapes are not convex") {
  const PhantomSpec spec{.size = 64, .slices = 32, .seed = 1, .family = ShapeFamily::TwoLobe};
  std::size_t concave = 0;
  for (std::size_t i = 0; i < 10; ++i) {
    const auto shape = sample_shape(spec, i);
    REQUIRE(shape.lobes.size() == 2);
    const auto& l = shape.lobes[0].center;
    const auto& r = shape.lobes[1].center;
    // A point between the lobes but off their axis falls outside: the union has a waist.
    const auto& s0 = shape.lobes[0].semi_axes;
    const Vec3 mid{(l[0] + r[0]) / 2, (l[1] + r[1]) / 2 + 0.9 * s0[1], (l[2] + r[2]) / 2};
    const Vec3 top0{l[0], l[1] + 0.9 * s0[1], l[2]};
    if (shape.contains(top0) && !shape.contains(mid)) ++concave;
  }
  CHECK(concave >= 5);
}

TEST_CASE("rasterized sphere volume is close to the analytic volume") {
  for (double r : {10.0, 12.5, 15.0}) {
    PhantomShape s{{Ellipsoid{{32, 31.5, 32.25}, {r, r, r}}}};
    const auto m = rasterize_shape(s, {64, 64, 64}, {1, 1, 1});
    double count = 0.0;
    for (float v : m.data()) count += v;
    const double analytic = 4.0 / 3.0 * std::numbers::pi * r * r * r;
    CHECK(std::abs(count - analytic) / analytic < 0.05);
  }
}

TEST_CASE("analytic sphere sdf") {
  const auto f = analytic_sphere_sdf({21, 21, 21}, {1, 1, 1}, {10, 10, 10}, 6.0);
  CHECK(f.at(10, 10, 10) == -6.0f);
  CHECK(f.at(16, 10, 10) == 0.0f);
  CHECK(f.at(10, 10, 20) == 4.0f);

  // Threshold at 0 and re-derive per-slice SDFs: signs agree at every voxel.
  std::vector<float> mask(f.size());
  for (std::size_t i = 0; i < f.size(); ++i) mask[i] = f.data()[i] < 0.0f ? 1.0f : 0.0f;
  const VolumeGrid m(f.dims(), f.spacing(), f.origin(), ElementKind::BinaryMask, mask);
  const auto s = sdf_volume(m);
  for (std::size_t i = 0; i < f.size(); ++i) CHECK((s.data()[i] < 0.0f) == (f.data()[i] < 0.0f));
}

TEST_CASE("split counts") {
  CHECK(split_counts(10, {0.6, 0.2, 0.2}) == std::array<std::size_t, 3>{6, 2, 2});
  CHECK(split_counts(30, {0.6, 0.2, 0.2}) == std::array<std::size_t, 3>{18, 6, 6});
  CHECK(split_counts(1, {1.0, 0.0, 0.0}) == std::array<std::size_t, 3>{1, 0, 0});
  CHECK_THROWS_AS(split_counts(10, {0.5, 0.2, 0.2}), ConfigError);
  CHECK_THROWS_AS(split_counts(10, {1.2, -0.2, 0.0}), ConfigError);
}

TEST_CASE("dataset generation writes a partitioned, reproducible tree") {
  testutil::TempDir a("phantom");
  testutil::TempDir b("phantom");
  const PhantomSpec spec{.size = 16, .slices = 10, .count = 5, .seed = 7};
  const auto ma = gen_dataset(spec, {0.6, 0.2, 0.2}, a.path(), 1);
  const auto mb = gen_dataset(spec, {0.6, 0.2, 0.2}, b.path(), 3);
  CHECK(ma.train.size() == 3);
  CHECK(ma.val.size() == 1);
  CHECK(ma.test.size() == 1);

  std::set<std::string> seen;
  for (const auto* list : {&ma.train, &ma.val, &ma.test}) {
    for (const auto& id : *list) CHECK(seen.insert(id).second);
  }
  CHECK(seen.size() == 5);

  CHECK(testutil::read_file(a / "manifest.json") == testutil::read_file(b / "manifest.json"));
  for (const auto& entry : std::filesystem::recursive_directory_iterator(a.path())) {
    if (!entry.is_regular_file()) continue;
    const auto rel = std::filesystem::relative(entry.path(), a.path());
    CHECK(testutil::read_file(entry.path()) == testutil::read_file(b.path() / rel));
  }
  const auto loaded = load_manifest(a / "manifest.json");
  CHECK(loaded.train == ma.train);
  CHECK(loaded.test == ma.test);
  const auto img = load_volume(a.path() / "train" / (ma.train[0] + "_image.svol.json"));
  CHECK(img == gen_case(spec, 0).image);

  CHECK_THROWS_AS(gen_dataset(spec, {0.5, 0.5, 0.5}, a.path()), ConfigError);
}
