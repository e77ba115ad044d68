#include <cstring>
#include <numeric>

#include "doctest.h"
#include "shapeseg/errors.hpp"
#include "shapeseg/rng.hpp"
#include "shapeseg/volgrid.hpp"
#include "test_util.hpp"

using namespace shapeseg;

namespace {

VolumeGrid random_scalar(Pcg32& rng, Dims3 dims) {
  std::vector<float> data(dims[0] * dims[1] * dims[2]);
  for (auto& v : data) v = static_cast<float>(rng.normal() * 100.0);
  return VolumeGrid(dims, {0.5, 0.75, 2.0}, {-3.0, 1.5, 10.0}, ElementKind::ScalarF32, std::move(data));
}

void write_header(const std::filesystem::path& path, const std::string& json) { testutil::write_file(path, json); }

}  // namespace

TEST_CASE("volume grid validates its invariants") {
  CHECK_THROWS_AS(VolumeGrid({2, 2, 2}, {1, 1, 1}, {0, 0, 0}, ElementKind::ScalarF32, std::vector<float>(7)),
                  SizeError);
  CHECK_THROWS_AS(VolumeGrid({2, 2, 0}, {1, 1, 1}, {0, 0, 0}, ElementKind::ScalarF32, {}), ValidationError);
  CHECK_THROWS_AS(VolumeGrid({1, 1, 1}, {1, 0, 1}, {0, 0, 0}, ElementKind::ScalarF32, {0.0f}), ValidationError);
  CHECK_THROWS_AS(VolumeGrid({1, 1, 1}, {1, INFINITY, 1}, {0, 0, 0}, ElementKind::ScalarF32, {0.0f}),
                  ValidationError);
  CHECK_THROWS_AS(VolumeGrid({1, 1, 2}, {1, 1, 1}, {0, 0, 0}, ElementKind::BinaryMask, {0.0f, 0.5f}),
                  ValidationError);
  CHECK_NOTHROW(VolumeGrid({1, 1, 2}, {1, 1, 1}, {0, 0, 0}, ElementKind::BinaryMask, {0.0f, 1.0f}));
}

TEST_CASE("layout is x fastest, z slowest") {
  std::vector<float> data(8);
  std::iota(data.begin(), data.end(), 0.0f);
  const VolumeGrid g({2, 2, 2}, {1, 1, 1}, {0, 0, 0}, ElementKind::ScalarF32, data);
  CHECK(g.at(1, 0, 0) == 1.0f);
  CHECK(g.at(0, 1, 0) == 2.0f);
  CHECK(g.at(0, 0, 1) == 4.0f);

  const auto s = extract_slice(g, 1);
  CHECK(s.width() == 2);
  CHECK(s.height() == 2);
  CHECK(s.kind() == SliceKind::Real);
  CHECK(std::vector<double>(s.values().begin(), s.values().end()) == std::vector<double>{4, 5, 6, 7});
  CHECK_THROWS_AS(extract_slice(g, 2), IndexError);
}

TEST_CASE("save then load is bit exact") {
  testutil::TempDir dir("volgrid");
  Pcg32 rng(11);
  const auto g = random_scalar(rng, {16, 16, 16});
  save_volume(g, dir / "vol.svol.json");
  const auto back = load_volume(dir / "vol.svol.json");
  CHECK(back.dims() == g.dims());
  CHECK(back.spacing() == g.spacing());
  CHECK(back.origin() == g.origin());
  CHECK(std::memcmp(back.data().data(), g.data().data(), g.size() * sizeof(float)) == 0);

  std::vector<float> bits(6 * 5 * 3);
  for (auto& v : bits) v = rng.uniform() < 0.4 ? 1.0f : 0.0f;
  const VolumeGrid m({6, 5, 3}, {1, 1, 3}, {0, 0, 0}, ElementKind::BinaryMask, bits);
  save_volume(m, dir / "mask.svol.json");
  CHECK(load_volume(dir / "mask.svol.json") == m);
  CHECK(std::filesystem::file_size(dir / "mask.raw") == m.size());
}

TEST_CASE("1x1x1 grid writes a single element") {
  testutil::TempDir dir("volgrid");
  const auto g = VolumeGrid::zeros({1, 1, 1}, {1, 1, 1}, {0, 0, 0}, ElementKind::BinaryMask);
  save_volume(g, dir / "one.svol.json");
  CHECK(std::filesystem::file_size(dir / "one.raw") == 1);
  const auto header = testutil::read_file(dir / "one.svol.json");
  CHECK(header.find("\"dims\"") != std::string::npos);
  CHECK(load_volume(dir / "one.svol.json").dims() == Dims3{1, 1, 1});
}

TEST_CASE("repeated saves are byte identical") {
  testutil::TempDir dir("volgrid");
  Pcg32 rng(3);
  const auto g = random_scalar(rng, {5, 4, 3});
  save_volume(g, dir / "a.svol.json");
  const auto h1 = testutil::read_file(dir / "a.svol.json");
  const auto p1 = testutil::read_file(dir / "a.raw");
  save_volume(g, dir / "a.svol.json");
  CHECK(testutil::read_file(dir / "a.svol.json") == h1);
  CHECK(testutil::read_file(dir / "a.raw") == p1);
}

TEST_CASE("load rejects malformed containers") {
  testutil::TempDir dir("volgrid");

  SUBCASE("payload one element short") {
    testutil::write_file(dir / "s.raw", std::string(31 * 4, '\0'));
    write_header(dir / "s.svol.json",
                 R"({"dims":[4,4,2],"spacing":[1,1,1],"origin":[0,0,0],"kind":"f32","data":"s.raw"})");
    CHECK_THROWS_AS(load_volume(dir / "s.svol.json"), SizeError);
  }
  SUBCASE("payload one element long") {
    testutil::write_file(dir / "s.raw", std::string(33, '\0'));
    write_header(dir / "s.svol.json",
                 R"({"dims":[4,4,2],"spacing":[1,1,1],"origin":[0,0,0],"kind":"mask","data":"s.raw"})");
    CHECK_THROWS_AS(load_volume(dir / "s.svol.json"), SizeError);
  }
  SUBCASE("mask byte outside {0,1}") {
    std::string bytes(8, '\0');
    bytes[5] = 2;
    testutil::write_file(dir / "m.raw", bytes);
    write_header(dir / "m.svol.json",
                 R"({"dims":[2,2,2],"spacing":[1,1,1],"origin":[0,0,0],"kind":"mask","data":"m.raw"})");
    CHECK_THROWS_AS(load_volume(dir / "m.svol.json"), ValidationError);
  }
  SUBCASE("missing field is named") {
    testutil::write_file(dir / "m.raw", std::string(8, '\0'));
    write_header(dir / "m.svol.json", R"({"dims":[2,2,2],"origin":[0,0,0],"kind":"mask","data":"m.raw"})");
    try {
      load_volume(dir / "m.svol.json");
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(std::string(e.what()).find("spacing") != std::string::npos);
    }
  }
  SUBCASE("garbled json") {
    write_header(dir / "g.svol.json", "{\"dims\": [2,2");
    CHECK_THROWS_AS(load_volume(dir / "g.svol.json"), FormatError);
  }
  SUBCASE("unknown kind") {
    testutil::write_file(dir / "m.raw", std::string(8, '\0'));
    write_header(dir / "m.svol.json",
                 R"({"dims":[2,2,2],"spacing":[1,1,1],"origin":[0,0,0],"kind":"u16","data":"m.raw"})");
    CHECK_THROWS_AS(load_volume(dir / "m.svol.json"), FormatError);
  }
  SUBCASE("missing header file") { CHECK_THROWS_AS(load_volume(dir / "nope.svol.json"), FormatError); }
  SUBCASE("missing payload") {
    write_header(dir / "m.svol.json",
                 R"({"dims":[2,2,2],"spacing":[1,1,1],"origin":[0,0,0],"kind":"mask","data":"gone.raw"})");
    CHECK_THROWS_AS(load_volume(dir / "m.svol.json"), FormatError);
  }
}

TEST_CASE("save to an unwritable destination is an I/O error") {
  const auto g = VolumeGrid::zeros({1, 1, 1}, {1, 1, 1}, {0, 0, 0}, ElementKind::ScalarF32);
  CHECK_THROWS_AS(save_volume(g, "/nonexistent_dir_for_test/x.svol.json"), IoError);
}

TEST_CASE("stack and extract are inverse") {
  Pcg32 rng(5);
  const auto g = random_scalar(rng, {7, 3, 4});
  std::vector<SliceField> slices;
  for (std::size_t z = 0; z < g.nz(); ++z) slices.push_back(extract_slice(g, z));
  CHECK(stack_slices(slices, g.spacing(), g.origin()) == g);

  const auto single = stack_slices(std::span(slices).first(1), {1, 1, 1}, {0, 0, 0});
  CHECK(single.nz() == 1);
  CHECK(extract_slice(single, 0) == slices[0]);
}

TEST_CASE("stack rejects empty and mismatched input") {
  std::vector<SliceField> none;
  CHECK_THROWS_AS(stack_slices(none, {1, 1, 1}, {0, 0, 0}), ArgumentError);
  std::vector<SliceField> mixed{SliceField::zeros(4, 4, SliceKind::Real), SliceField::zeros(5, 4, SliceKind::Real)};
  CHECK_THROWS_AS(stack_slices(mixed, {1, 1, 1}, {0, 0, 0}), ShapeError);
  std::vector<SliceField> kinds{SliceField::zeros(4, 4, SliceKind::Real), SliceField::zeros(4, 4, SliceKind::Binary)};
  CHECK_THROWS_AS(stack_slices(kinds, {1, 1, 1}, {0, 0, 0}), ShapeError);
}

TEST_CASE("binary slice kind is mirrored from mask grids") {
  const auto m = VolumeGrid::zeros({3, 3, 2}, {1, 1, 1}, {0, 0, 0}, ElementKind::BinaryMask);
  CHECK(extract_slice(m, 0).is_binary());
  CHECK_THROWS_AS(SliceField(2, 2, SliceKind::Binary, {0, 1, 2, 0}), ValidationError);
  CHECK_THROWS_AS(SliceField(2, 2, SliceKind::Real, {0, 1, 2}), SizeError);
}
