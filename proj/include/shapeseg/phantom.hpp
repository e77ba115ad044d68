#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "shapeseg/volgrid.hpp"

namespace shapeseg {

enum class ShapeFamily { Sphere, Ellipsoid, TwoLobe };

ShapeFamily parse_shape_family(const std::string& name);
std::string to_string(ShapeFamily family);

/// Axis-aligned ellipsoid in voxel-index coordinates.
struct Ellipsoid {
  Vec3 center{};
  Vec3 semi_axes{};

  bool contains(const Vec3& p) const;
};

/// Union of one or two ellipsoids.
struct PhantomShape {
  std::vector<Ellipsoid> lobes;

  bool contains(const Vec3& p) const;
};

struct PhantomSpec {
  std::size_t size = 64;    ///< nx = ny
  std::size_t slices = 32;  ///< nz
  std::size_t count = 10;
  std::uint64_t seed = 0;
  ShapeFamily family = ShapeFamily::TwoLobe;
  double contrast = 1.0;
  double noise_sigma = 0.1;
  Vec3 spacing{1.0, 1.0, 1.0};
  /// Slice size must be a multiple of this (2^depth of the default network).
  std::size_t size_multiple = 4;

  /// Throws ConfigError on violated invariants.
  void validate() const;
};

struct PhantomCase {
  VolumeGrid image;
  VolumeGrid mask;
};

/// Random shape for case `index`, deterministic in (spec.seed, index).
PhantomShape sample_shape(const PhantomSpec& spec, std::size_t index);

/// Voxel (x, y, z) is foreground iff its center lies inside the shape.
VolumeGrid rasterize_shape(const PhantomShape& shape, Dims3 dims, Vec3 spacing);

/// Throws ConfigError if any lobe comes closer than 2 voxels to the grid border.
void check_margin(const PhantomShape& shape, Dims3 dims);

/// image = contrast * box3(mask) + N(0, sigma^2) noise.
PhantomCase gen_case(const PhantomSpec& spec, std::size_t index);

/// value = |x - center| - radius at every voxel center, x = index * spacing.
VolumeGrid analytic_sphere_sdf(Dims3 dims, Vec3 spacing, Vec3 center, double radius);

struct DatasetManifest {
  std::vector<std::string> train;
  std::vector<std::string> val;
  std::vector<std::string> test;
};

std::string case_id(std::size_t index);

/// Case counts per split: round(f * count) for train and val, the rest for test.
std::array<std::size_t, 3> split_counts(std::size_t count, std::array<double, 3> fractions);

/// Writes `<out>/<split>/<case>_image.svol.json` and `<case>_mask.svol.json`
/// for every case plus `<out>/manifest.json`. Cases are assigned to splits in
/// index order.
DatasetManifest gen_dataset(const PhantomSpec& spec, std::array<double, 3> fractions,
                            const std::filesystem::path& out_dir, unsigned jobs = 1);

DatasetManifest load_manifest(const std::filesystem::path& manifest_path);

}  // namespace shapeseg
