#include "shapeseg/sdf.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "shapeseg/errors.hpp"

namespace shapeseg {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void require_binary(const SliceField& mask, const char* what) {
  if (!mask.is_binary()) throw ValidationError(std::string(what) + ": mask must be a binary slice");
}

}  // namespace

SliceField SignedDistanceSlice::as_field() const {
  return SliceField(width, height, SliceKind::Real, values);
}

void distance_transform_1d(std::span<const double> f, std::span<double> out, double weight) {
  const std::size_t n = f.size();
  if (n == 0) return;
  const double w2 = weight * weight;

  // v: parabola apex positions on the lower envelope; z: their left boundaries.
  std::vector<std::size_t> v(n);
  std::vector<double> z(n + 1);
  std::size_t k = 0;
  std::size_t first = n;
  for (std::size_t q = 0; q < n; ++q) {
    if (f[q] < kInf) {
      first = q;
      break;
    }
  }
  if (first == n) {
    std::fill(out.begin(), out.end(), kInf);
    return;
  }
  v[0] = first;
  z[0] = -kInf;
  z[1] = kInf;
  for (std::size_t q = first + 1; q < n; ++q) {
    if (f[q] == kInf) continue;
    const double fq = f[q] + w2 * static_cast<double>(q) * static_cast<double>(q);
    double s;
    for (;;) {
      const auto p = static_cast<double>(v[k]);
      const double fp = f[v[k]] + w2 * p * p;
      s = (fq - fp) / (2.0 * w2 * (static_cast<double>(q) - p));
      if (s <= z[k] && k > 0) {
        --k;
      } else {
        break;
      }
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = kInf;
  }

  k = 0;
  for (std::size_t q = 0; q < n; ++q) {
    while (z[k + 1] < static_cast<double>(q)) ++k;
    const double d = weight * (static_cast<double>(q) - static_cast<double>(v[k]));
    out[q] = d * d + f[v[k]];
  }
}

SliceField edt_squared(const SliceField& mask, int target_label) {
  require_binary(mask, "edt_squared");
  const std::size_t w = mask.width();
  const std::size_t h = mask.height();
  const double target = target_label ? 1.0 : 0.0;

  std::vector<double> grid(w * h);
  bool any = false;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const bool site = mask.values()[i] == target;
    any = any || site;
    grid[i] = site ? 0.0 : kInf;
  }
  if (!any) throw EmptinessError("edt_squared: no pixel carries the target label");

  std::vector<double> line(std::max(w, h));
  std::vector<double> result(std::max(w, h));
  for (std::size_t y = 0; y < h; ++y) {
    std::span<double> row(grid.data() + y * w, w);
    std::copy(row.begin(), row.end(), line.begin());
    distance_transform_1d(std::span(line.data(), w), std::span(result.data(), w));
    std::copy_n(result.begin(), w, row.begin());
  }
  for (std::size_t x = 0; x < w; ++x) {
    for (std::size_t y = 0; y < h; ++y) line[y] = grid[x + y * w];
    distance_transform_1d(std::span(line.data(), h), std::span(result.data(), h));
    for (std::size_t y = 0; y < h; ++y) grid[x + y * w] = result[y];
  }
  return SliceField(w, h, SliceKind::Real, std::move(grid));
}

SignedDistanceSlice sdf_from_mask(const SliceField& mask, const SdfOptions& options) {
  require_binary(mask, "sdf_from_mask");
  const std::size_t w = mask.width();
  const std::size_t h = mask.height();
  const double offset = options.boundary_offset ? 0.5 : 0.0;

  SignedDistanceSlice out;
  out.width = w;
  out.height = h;
  out.values.resize(w * h);

  const auto fg = std::count(mask.values().begin(), mask.values().end(), 1.0);
  if (fg == 0 || static_cast<std::size_t>(fg) == mask.size()) {
    // Single-label slice: saturate at the slice diagonal.
    const double diag = std::hypot(static_cast<double>(w), static_cast<double>(h)) - offset;
    std::fill(out.values.begin(), out.values.end(), fg == 0 ? diag : -diag);
    return out;
  }

  const SliceField to_fg = edt_squared(mask, 1);
  const SliceField to_bg = edt_squared(mask, 0);
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    if (mask.values()[i] == 1.0) {
      out.values[i] = -(std::sqrt(to_bg.values()[i]) - offset);
    } else {
      out.values[i] = std::sqrt(to_fg.values()[i]) - offset;
    }
  }
  return out;
}

SignedDistanceSlice normalize_sdf(const SignedDistanceSlice& raw) {
  if (raw.normalized) throw ArgumentError("normalize_sdf: slice is already normalized");
  SignedDistanceSlice out = raw;
  double scale = 0.0;
  for (double v : raw.values) scale = std::max(scale, std::abs(v));
  out.normalized = true;
  if (scale == 0.0) {
    std::fill(out.values.begin(), out.values.end(), 0.0);
    out.scale = 1.0;
    return out;
  }
  out.scale = scale;
  for (double& v : out.values) v /= scale;
  return out;
}

namespace {

VolumeGrid transform_volume(const VolumeGrid& mask_volume, const SdfOptions& options, bool normalize) {
  if (!mask_volume.is_mask()) throw ValidationError("sdf_volume: input must be a binary mask volume");
  std::vector<float> data;
  data.reserve(mask_volume.size());
  for (std::size_t z = 0; z < mask_volume.nz(); ++z) {
    auto slice = sdf_from_mask(extract_slice(mask_volume, z), options);
    if (normalize) slice = normalize_sdf(slice);
    for (double v : slice.values) data.push_back(static_cast<float>(v));
  }
  return VolumeGrid(mask_volume.dims(), mask_volume.spacing(), mask_volume.origin(), ElementKind::ScalarF32,
                    std::move(data));
}

}  // namespace

VolumeGrid sdf_volume(const VolumeGrid& mask_volume, const SdfOptions& options) {
  return transform_volume(mask_volume, options, true);
}

VolumeGrid sdf_volume_raw(const VolumeGrid& mask_volume, const SdfOptions& options) {
  return transform_volume(mask_volume, options, false);
}

}  // namespace shapeseg
