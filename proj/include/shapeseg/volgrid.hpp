#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

namespace shapeseg {

using Vec3 = std::array<double, 3>;
using Dims3 = std::array<std::size_t, 3>;

enum class ElementKind { BinaryMask, ScalarF32 };

/// Dense 3D voxel grid. Layout is row-major with x fastest and z slowest:
/// index(x, y, z) = x + nx * (y + ny * z). Immutable after construction.
class VolumeGrid {
 public:
  VolumeGrid(Dims3 dims, Vec3 spacing, Vec3 origin, ElementKind kind,
             std::vector<float> data);

  /// All-zero grid of the given kind.
  static VolumeGrid zeros(Dims3 dims, Vec3 spacing, Vec3 origin, ElementKind kind);

  const Dims3& dims() const { return dims_; }
  const Vec3& spacing() const { return spacing_; }
  const Vec3& origin() const { return origin_; }
  ElementKind kind() const { return kind_; }
  bool is_mask() const { return kind_ == ElementKind::BinaryMask; }
  std::span<const float> data() const { return data_; }

  std::size_t nx() const { return dims_[0]; }
  std::size_t ny() const { return dims_[1]; }
  std::size_t nz() const { return dims_[2]; }
  std::size_t size() const { return data_.size(); }

  std::size_t index(std::size_t x, std::size_t y, std::size_t z) const {
    return x + dims_[0] * (y + dims_[1] * z);
  }
  float at(std::size_t x, std::size_t y, std::size_t z) const { return data_[index(x, y, z)]; }

  /// Physical position of a voxel center: origin + index * spacing.
  Vec3 position(std::size_t x, std::size_t y, std::size_t z) const {
    return {origin_[0] + static_cast<double>(x) * spacing_[0],
            origin_[1] + static_cast<double>(y) * spacing_[1],
            origin_[2] + static_cast<double>(z) * spacing_[2]};
  }

  bool same_geometry(const VolumeGrid& other) const {
    return dims_ == other.dims_ && spacing_ == other.spacing_ && origin_ == other.origin_;
  }

  friend bool operator==(const VolumeGrid&, const VolumeGrid&) = default;

 private:
  Dims3 dims_;
  Vec3 spacing_;
  Vec3 origin_;
  ElementKind kind_;
  std::vector<float> data_;
};

enum class SliceKind { Binary, Real };

/// One xy-plane. Values are held in double so that losses and their
/// finite-difference checks can run in full precision.
class SliceField {
 public:
  SliceField(std::size_t width, std::size_t height, SliceKind kind, std::vector<double> values);

  static SliceField zeros(std::size_t width, std::size_t height, SliceKind kind);

  std::size_t width() const { return width_; }
  std::size_t height() const { return height_; }
  std::size_t size() const { return values_.size(); }
  SliceKind kind() const { return kind_; }
  bool is_binary() const { return kind_ == SliceKind::Binary; }
  std::span<const double> values() const { return values_; }
  double at(std::size_t x, std::size_t y) const { return values_[x + width_ * y]; }

  friend bool operator==(const SliceField&, const SliceField&) = default;

 private:
  std::size_t width_;
  std::size_t height_;
  SliceKind kind_;
  std::vector<double> values_;
};

/// Reads `<name>.svol.json` and its raw payload.
VolumeGrid load_volume(const std::filesystem::path& header_path);

/// Writes `header_path` plus a payload named after it with `.raw` replacing
/// `.svol.json`, in the same directory.
void save_volume(const VolumeGrid& grid, const std::filesystem::path& header_path);

SliceField extract_slice(const VolumeGrid& grid, std::size_t z);

VolumeGrid stack_slices(std::span<const SliceField> slices, Vec3 spacing, Vec3 origin);

}  // namespace shapeseg
