#include "shapeseg/mesh.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>

#include "mc_tables.hpp"
#include "shapeseg/errors.hpp"

namespace shapeseg {

namespace {

using detail::kCornerOffsets;
using detail::kEdgeCorners;
using detail::kEdgeTable;
using detail::kTriTable;

// For each cube edge: the corner with the smaller coordinate and the axis the
// edge runs along. Lets neighbouring cubes agree on a global edge key.
struct EdgeGeometry {
  int lower_corner;
  int upper_corner;
  int axis;
};

constexpr std::array<EdgeGeometry, 12> make_edge_geometry() {
  std::array<EdgeGeometry, 12> out{};
  for (int e = 0; e < 12; ++e) {
    const int a = kEdgeCorners[e][0];
    const int b = kEdgeCorners[e][1];
    int axis = 0;
    for (int d = 0; d < 3; ++d) {
      if (kCornerOffsets[a][d] != kCornerOffsets[b][d]) axis = d;
    }
    const bool a_lower = kCornerOffsets[a][axis] < kCornerOffsets[b][axis];
    out[e] = {a_lower ? a : b, a_lower ? b : a, axis};
  }
  return out;
}

constexpr auto kEdgeGeometry = make_edge_geometry();

// The tabulated triangles face toward decreasing field values; emitting them
// reversed gives normals toward increasing values.
constexpr bool kTableFacesDownhill = true;

Vec3 sub(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

Vec3 facet_normal(const TriangleMesh& mesh, const std::array<std::uint32_t, 3>& t) {
  const Vec3 n = cross(sub(mesh.vertices[t[1]], mesh.vertices[t[0]]), sub(mesh.vertices[t[2]], mesh.vertices[t[0]]));
  const double len = std::sqrt(n[0] * n[0] + n[1] * n[1] + n[2] * n[2]);
  if (len == 0.0) return {0.0, 0.0, 0.0};
  return {n[0] / len, n[1] / len, n[2] / len};
}

void put_u32(std::string& out, std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    v = ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
  }
  char buf[4];
  std::memcpy(buf, &v, 4);
  out.append(buf, 4);
}

void put_f32(std::string& out, double v) { put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v))); }

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace

void TriangleMesh::validate() const {
  const auto n = vertices.size();
  for (const auto& t : triangles) {
    if (t[0] >= n || t[1] >= n || t[2] >= n) throw ValidationError("mesh: triangle index out of range");
    if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2]) throw ValidationError("mesh: triangle repeats a vertex");
  }
  if (vertex_scalar && vertex_scalar->size() != n) {
    throw ValidationError("mesh: vertex_scalar length does not match vertex count");
  }
}

TriangleMesh marching_cubes(const VolumeGrid& field, double iso) {
  if (field.is_mask()) throw ValidationError("marching_cubes: expects a scalar field; convert masks with mask_to_field");
  if (field.nx() < 2 || field.ny() < 2 || field.nz() < 2) {
    throw ShapeError("marching_cubes: every grid dimension must be >= 2");
  }
  if (!std::isfinite(iso)) throw ArgumentError("marching_cubes: iso value must be finite");

  const std::size_t nx = field.nx();
  const std::size_t ny = field.ny();
  const std::size_t nz = field.nz();
  const auto data = field.data();

  TriangleMesh mesh;
  std::unordered_map<std::uint64_t, std::uint32_t> edge_vertex;

  auto vertex_on_edge = [&](std::size_t x, std::size_t y, std::size_t z, int edge) -> std::uint32_t {
    const auto& g = kEdgeGeometry[static_cast<std::size_t>(edge)];
    const auto& lo = kCornerOffsets[static_cast<std::size_t>(g.lower_corner)];
    const std::size_t lx = x + static_cast<std::size_t>(lo[0]);
    const std::size_t ly = y + static_cast<std::size_t>(lo[1]);
    const std::size_t lz = z + static_cast<std::size_t>(lo[2]);
    const std::uint64_t key = static_cast<std::uint64_t>(field.index(lx, ly, lz)) * 3 + static_cast<std::uint64_t>(g.axis);
    const auto [it, inserted] = edge_vertex.try_emplace(key, static_cast<std::uint32_t>(mesh.vertices.size()));
    if (!inserted) return it->second;

    std::array<std::size_t, 3> hi_idx{lx, ly, lz};
    ++hi_idx[static_cast<std::size_t>(g.axis)];
    const double f0 = data[field.index(lx, ly, lz)];
    const double f1 = data[field.index(hi_idx[0], hi_idx[1], hi_idx[2])];
    const double t = f0 == f1 ? 0.5 : (iso - f0) / (f1 - f0);
    const Vec3 p0 = field.position(lx, ly, lz);
    Vec3 p = p0;
    p[static_cast<std::size_t>(g.axis)] += t * field.spacing()[static_cast<std::size_t>(g.axis)];
    mesh.vertices.push_back(p);
    return it->second;
  };

  for (std::size_t z = 0; z + 1 < nz; ++z) {
    for (std::size_t y = 0; y + 1 < ny; ++y) {
      for (std::size_t x = 0; x + 1 < nx; ++x) {
        int cube = 0;
        for (int c = 0; c < 8; ++c) {
          const auto& o = kCornerOffsets[static_cast<std::size_t>(c)];
          const double v = data[field.index(x + static_cast<std::size_t>(o[0]), y + static_cast<std::size_t>(o[1]),
                                            z + static_cast<std::size_t>(o[2]))];
          if (v < iso) cube |= 1 << c;
        }
        if (kEdgeTable[static_cast<std::size_t>(cube)] == 0) continue;
        const auto& tris = kTriTable[static_cast<std::size_t>(cube)];
        for (std::size_t k = 0; tris[k] != -1; k += 3) {
          const std::uint32_t a = vertex_on_edge(x, y, z, tris[k]);
          const std::uint32_t b = vertex_on_edge(x, y, z, tris[k + 1]);
          const std::uint32_t c = vertex_on_edge(x, y, z, tris[k + 2]);
          if constexpr (kTableFacesDownhill) {
            mesh.triangles.push_back({a, c, b});
          } else {
            mesh.triangles.push_back({a, b, c});
          }
        }
      }
    }
  }
  return mesh;
}

VolumeGrid mask_to_field(const VolumeGrid& mask) {
  for (float v : mask.data()) {
    if (v != 0.0f && v != 1.0f) throw ValidationError("mask_to_field: values must be 0 or 1");
  }
  return VolumeGrid(mask.dims(), mask.spacing(), mask.origin(), ElementKind::ScalarF32,
                    std::vector<float>(mask.data().begin(), mask.data().end()));
}

TriangleMesh mesh_from_mask(const VolumeGrid& mask) {
  TriangleMesh mesh = marching_cubes(mask_to_field(mask), 0.5);
  flip_orientation(mesh);
  return mesh;
}

void flip_orientation(TriangleMesh& mesh) {
  for (auto& t : mesh.triangles) std::swap(t[1], t[2]);
}

void export_mesh(const TriangleMesh& mesh, const std::filesystem::path& path, MeshFormat format) {
  mesh.validate();
  if (format == MeshFormat::PlyWithScalar && !mesh.vertex_scalar) {
    throw ArgumentError("export_mesh: PLY export needs a vertex scalar channel");
  }

  std::string out;
  if (format == MeshFormat::Obj) {
    std::ostringstream s;
    for (const auto& v : mesh.vertices) {
      s << "v " << fmt_double(v[0]) << ' ' << fmt_double(v[1]) << ' ' << fmt_double(v[2]) << '\n';
    }
    for (const auto& t : mesh.triangles) s << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
    out = s.str();
  } else if (format == MeshFormat::StlBinary) {
    std::string header = "binary STL";
    header.resize(80, '\0');
    out = header;
    put_u32(out, static_cast<std::uint32_t>(mesh.triangles.size()));
    for (const auto& t : mesh.triangles) {
      for (double c : facet_normal(mesh, t)) put_f32(out, c);
      for (auto idx : t) {
        for (double c : mesh.vertices[idx]) put_f32(out, c);
      }
      out.append(2, '\0');
    }
  } else {
    const auto& scalar = *mesh.vertex_scalar;
    double lo = 0.0;
    double hi = 0.0;
    if (!scalar.empty()) {
      const auto [mn, mx] = std::minmax_element(scalar.begin(), scalar.end());
      lo = *mn;
      hi = *mx;
    }
    std::ostringstream s;
    s << "ply\nformat ascii 1.0\n"
      << "element vertex " << mesh.vertices.size() << '\n'
      << "property float x\nproperty float y\nproperty float z\n"
      << "property uchar red\nproperty uchar green\nproperty uchar blue\n"
      << "property float value\n"
      << "element face " << mesh.triangles.size() << '\n'
      << "property list uchar int vertex_indices\n"
      << "end_header\n";
    for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
      const double t = hi > lo ? (scalar[i] - lo) / (hi - lo) : 0.0;
      const auto red = static_cast<int>(std::lround(255.0 * (1.0 - t)));
      const auto blue = static_cast<int>(std::lround(255.0 * t));
      const auto& v = mesh.vertices[i];
      s << fmt_double(v[0]) << ' ' << fmt_double(v[1]) << ' ' << fmt_double(v[2]) << ' ' << red << " 0 " << blue
        << ' ' << fmt_double(scalar[i]) << '\n';
    }
    for (const auto& t : mesh.triangles) s << "3 " << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
    out = s.str();
  }

  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw IoError("cannot write mesh file " + path.string());
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!file) throw IoError("failed writing mesh file " + path.string());
}

TopologyReport mesh_topology_report(const TriangleMesh& mesh) {
  std::map<std::pair<std::uint32_t, std::uint32_t>, std::size_t> edge_use;
  for (const auto& t : mesh.triangles) {
    for (int k = 0; k < 3; ++k) {
      std::uint32_t a = t[static_cast<std::size_t>(k)];
      std::uint32_t b = t[static_cast<std::size_t>((k + 1) % 3)];
      if (a > b) std::swap(a, b);
      ++edge_use[{a, b}];
    }
  }
  TopologyReport r;
  r.vertices = mesh.vertices.size();
  r.triangles = mesh.triangles.size();
  r.edges = edge_use.size();
  for (const auto& [edge, uses] : edge_use) {
    if (uses == 1) ++r.boundary_edges;
    if (uses >= 3) ++r.non_manifold_edges;
  }
  r.euler = static_cast<long long>(r.vertices) - static_cast<long long>(r.edges) + static_cast<long long>(r.triangles);
  return r;
}

double signed_volume(const TriangleMesh& mesh) {
  double vol = 0.0;
  for (const auto& t : mesh.triangles) {
    const Vec3& a = mesh.vertices[t[0]];
    const Vec3 c = cross(mesh.vertices[t[1]], mesh.vertices[t[2]]);
    vol += a[0] * c[0] + a[1] * c[1] + a[2] * c[2];
  }
  return vol / 6.0;
}

}  // namespace shapeseg
