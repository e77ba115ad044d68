#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "shapeseg/volgrid.hpp"

namespace shapeseg {

/// Indexed triangle surface in physical coordinates (millimeters).
struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<std::uint32_t, 3>> triangles;
  std::optional<std::vector<double>> vertex_scalar;

  /// Throws ValidationError on out-of-range or repeated indices within a
  /// triangle, or a scalar channel of the wrong length.
  void validate() const;
  bool empty() const { return triangles.empty(); }
};

/// Isosurface at `iso` using the classic 256-case table. Vertices on a cube
/// edge are placed at t = (iso - f0) / (f1 - f0) from the lower-index corner
/// (t = 0.5 when f0 == f1) and welded per grid edge. Triangles wind so their
/// normals point toward increasing field values.
TriangleMesh marching_cubes(const VolumeGrid& field, double iso);

/// 0/1 mask values as a scalar grid. Accepts scalar grids already holding
/// only 0 and 1, so the conversion is idempotent.
VolumeGrid mask_to_field(const VolumeGrid& mask);

/// Surface of the foreground region of a mask: marching cubes at 0.5 with the
/// winding reversed so normals face away from the region.
TriangleMesh mesh_from_mask(const VolumeGrid& mask);

/// Reverses the winding of every triangle.
void flip_orientation(TriangleMesh& mesh);

enum class MeshFormat { Obj, StlBinary, PlyWithScalar };

/// OBJ: `v` and 1-based `f` records. STL: binary little-endian with facet
/// normals. PLY: ascii with per-vertex red-blue colors mapped linearly from
/// vertex_scalar (minimum red, maximum blue; a constant channel is all red).
void export_mesh(const TriangleMesh& mesh, const std::filesystem::path& path, MeshFormat format);

struct TopologyReport {
  std::size_t vertices = 0;
  std::size_t edges = 0;
  std::size_t triangles = 0;
  long long euler = 0;
  std::size_t boundary_edges = 0;     ///< used by exactly one triangle
  std::size_t non_manifold_edges = 0; ///< used by three or more triangles
};

TopologyReport mesh_topology_report(const TriangleMesh& mesh);

/// Signed enclosed volume (positive when normals face outward of a closed surface).
double signed_volume(const TriangleMesh& mesh);

}  // namespace shapeseg
