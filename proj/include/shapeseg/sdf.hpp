#pragma once

#include <span>
#include <vector>

#include "shapeseg/volgrid.hpp"

namespace shapeseg {

/// Per-slice signed distance field. Negative inside the region, positive
/// outside. `scale` is the max |raw| used to normalize (1 when not normalized
/// or when the raw field is identically zero).
struct SignedDistanceSlice {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> values;
  bool normalized = false;
  double scale = 1.0;

  SliceField as_field() const;
};

struct SdfOptions {
  /// Subtract half a pixel from center-to-center distances so the zero level
  /// sits on the pixel boundary between opposite labels.
  bool boundary_offset = true;
};

/// Exact squared Euclidean distance (pixel units) from every pixel center to
/// the nearest pixel whose mask value equals `target_label`. Separable
/// lower-envelope transform: rows first, then columns.
///
/// Throws EmptinessError if no pixel carries `target_label`.
SliceField edt_squared(const SliceField& mask, int target_label);

/// 1D squared distance transform of a sampled function (lower envelope of
/// parabolas). `f` may contain +infinity for "no site". `weight` scales the
/// sample spacing: d(p, q) = f(q) + (weight * (p - q))^2.
void distance_transform_1d(std::span<const double> f, std::span<double> out, double weight = 1.0);

SignedDistanceSlice sdf_from_mask(const SliceField& mask, const SdfOptions& options = {});

SignedDistanceSlice normalize_sdf(const SignedDistanceSlice& raw);

/// Transforms every z-slice independently and normalizes each to [-1, 1].
VolumeGrid sdf_volume(const VolumeGrid& mask_volume, const SdfOptions& options = {});

/// Same as sdf_volume without the normalization step.
VolumeGrid sdf_volume_raw(const VolumeGrid& mask_volume, const SdfOptions& options = {});

}  // namespace shapeseg
