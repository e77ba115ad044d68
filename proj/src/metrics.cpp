#include "shapeseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "shapeseg/errors.hpp"
#include "shapeseg/sdf.hpp"

namespace shapeseg {

namespace {

using nlohmann::json;

constexpr double kInf = std::numeric_limits<double>::infinity();

void require_mask(const VolumeGrid& g, const char* what) {
  if (!g.is_mask()) throw ValidationError(std::string(what) + ": expects a binary mask volume");
}

double squared_distance(const Vec3& a, const Vec3& b) {
  const double dx = a[0] - b[0];
  const double dy = a[1] - b[1];
  const double dz = a[2] - b[2];
  return dx * dx + dy * dy + dz * dz;
}

bool same_grid(const SurfacePointSet& a, const SurfacePointSet& b) {
  return a.dims == b.dims && a.spacing == b.spacing && a.origin == b.origin && a.voxels.size() == a.points.size() &&
         b.voxels.size() == b.points.size();
}

std::vector<double> brute_force_distances(const SurfacePointSet& from, const SurfacePointSet& to) {
  std::vector<double> out(from.size());
  for (std::size_t i = 0; i < from.size(); ++i) {
    double best = kInf;
    for (const auto& q : to.points) best = std::min(best, squared_distance(from.points[i], q));
    out[i] = std::sqrt(best);
  }
  return out;
}

// Exact squared distances via a separable transform restricted to the bounding
// box of both sets; every site and query lies inside, so the box is enough.
std::vector<double> grid_distances(const SurfacePointSet& from, const SurfacePointSet& to) {
  std::array<std::size_t, 3> lo{};
  std::array<std::size_t, 3> hi{};
  for (int a = 0; a < 3; ++a) {
    lo[a] = std::numeric_limits<std::size_t>::max();
    hi[a] = 0;
  }
  for (const auto* set : {&from, &to}) {
    for (const auto& v : set->voxels) {
      for (int a = 0; a < 3; ++a) {
        lo[a] = std::min(lo[a], v[a]);
        hi[a] = std::max(hi[a], v[a]);
      }
    }
  }
  const std::size_t bx = hi[0] - lo[0] + 1;
  const std::size_t by = hi[1] - lo[1] + 1;
  const std::size_t bz = hi[2] - lo[2] + 1;
  auto at = [&](std::size_t x, std::size_t y, std::size_t z) { return x + bx * (y + by * z); };

  std::vector<double> f(bx * by * bz, kInf);
  for (const auto& v : to.voxels) f[at(v[0] - lo[0], v[1] - lo[1], v[2] - lo[2])] = 0.0;

  std::vector<double> line(std::max({bx, by, bz}));
  std::vector<double> result(line.size());
  const std::array<std::size_t, 3> extent{bx, by, bz};
  for (int axis = 0; axis < 3; ++axis) {
    const std::size_t n = extent[axis];
    const std::size_t stride = axis == 0 ? 1 : (axis == 1 ? bx : bx * by);
    const std::size_t u_count = extent[(axis + 1) % 3];
    const std::size_t v_count = extent[(axis + 2) % 3];
    for (std::size_t u = 0; u < u_count; ++u) {
      for (std::size_t v = 0; v < v_count; ++v) {
        std::array<std::size_t, 3> idx{};
        idx[(axis + 1) % 3] = u;
        idx[(axis + 2) % 3] = v;
        const std::size_t base = at(idx[0], idx[1], idx[2]);
        for (std::size_t k = 0; k < n; ++k) line[k] = f[base + k * stride];
        distance_transform_1d(std::span(line.data(), n), std::span(result.data(), n), to.spacing[axis]);
        for (std::size_t k = 0; k < n; ++k) f[base + k * stride] = result[k];
      }
    }
  }

  std::vector<double> out(from.size());
  for (std::size_t i = 0; i < from.size(); ++i) {
    const auto& v = from.voxels[i];
    out[i] = std::sqrt(f[at(v[0] - lo[0], v[1] - lo[1], v[2] - lo[2])]);
  }
  return out;
}

void require_nonempty(const SurfacePointSet& a, const SurfacePointSet& b, const char* what) {
  if (a.empty() || b.empty()) throw EmptinessError(std::string(what) + ": surface point set is empty");
}

std::string fmt(double v, const char* spec = "%.10g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> optional_from(const json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  return j[key].get<double>();
}

}  // namespace

double volumetric_dice(const VolumeGrid& pred, const VolumeGrid& truth) {
  require_mask(pred, "volumetric_dice");
  require_mask(truth, "volumetric_dice");
  if (pred.dims() != truth.dims()) throw ShapeError("volumetric_dice: volume dims differ");
  std::size_t inter = 0;
  std::size_t total = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred.data()[i] != 0.0f;
    const bool t = truth.data()[i] != 0.0f;
    inter += static_cast<std::size_t>(p && t);
    total += static_cast<std::size_t>(p) + static_cast<std::size_t>(t);
  }
  if (total == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(total);
}

SurfacePointSet extract_surface_voxels(const VolumeGrid& mask) {
  require_mask(mask, "extract_surface_voxels");
  SurfacePointSet out;
  out.dims = mask.dims();
  out.spacing = mask.spacing();
  out.origin = mask.origin();
  const std::size_t nx = mask.nx();
  const std::size_t ny = mask.ny();
  const std::size_t nz = mask.nz();
  auto fg = [&](std::size_t x, std::size_t y, std::size_t z) { return mask.at(x, y, z) != 0.0f; };
  for (std::size_t z = 0; z < nz; ++z) {
    for (std::size_t y = 0; y < ny; ++y) {
      for (std::size_t x = 0; x < nx; ++x) {
        if (!fg(x, y, z)) continue;
        const bool boundary = x == 0 || y == 0 || z == 0 || x + 1 == nx || y + 1 == ny || z + 1 == nz ||
                              !fg(x - 1, y, z) || !fg(x + 1, y, z) || !fg(x, y - 1, z) || !fg(x, y + 1, z) ||
                              !fg(x, y, z - 1) || !fg(x, y, z + 1);
        if (boundary) {
          out.voxels.push_back({x, y, z});
          out.points.push_back(mask.position(x, y, z));
        }
      }
    }
  }
  if (out.points.empty()) throw EmptinessError("extract_surface_voxels: mask has no foreground voxel");
  return out;
}

std::vector<double> directed_distances(const SurfacePointSet& from, const SurfacePointSet& to) {
  if (from.empty() || to.empty()) throw ArgumentError("directed_distances: point sets must be nonempty");
  if (same_grid(from, to)) return grid_distances(from, to);
  return brute_force_distances(from, to);
}

double percentile_linear(std::vector<double> values, double q) {
  if (values.empty()) throw ArgumentError("percentile_linear: no values");
  if (!(q >= 0.0 && q <= 100.0)) throw ArgumentError("percentile_linear: q must lie in [0, 100]");
  std::sort(values.begin(), values.end());
  const double pos = q / 100.0 * static_cast<double>(values.size() - 1);
  const auto below = static_cast<std::size_t>(std::floor(pos));
  const std::size_t above = std::min(below + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(below);
  return values[below] + frac * (values[above] - values[below]);
}

SurfaceMetrics surface_metrics(const SurfacePointSet& a, const SurfacePointSet& b, double tolerance) {
  require_nonempty(a, b, "surface metrics");
  if (!(tolerance >= 0.0)) throw ArgumentError("surface tolerance must be >= 0");
  const auto ab = directed_distances(a, b);
  const auto ba = directed_distances(b, a);

  SurfaceMetrics m;
  std::size_t within = 0;
  double sum = 0.0;
  for (const auto* dists : {&ab, &ba}) {
    for (double d : *dists) {
      m.hd = std::max(m.hd, d);
      sum += d;
      within += static_cast<std::size_t>(d <= tolerance);
    }
  }
  const auto n = static_cast<double>(ab.size() + ba.size());
  m.assd = sum / n;
  m.surf_dice = static_cast<double>(within) / n;
  std::vector<double> pooled = ab;
  pooled.insert(pooled.end(), ba.begin(), ba.end());
  m.hd95 = percentile_linear(std::move(pooled), 95.0);
  return m;
}

double hausdorff(const SurfacePointSet& a, const SurfacePointSet& b) { return surface_metrics(a, b, 0.0).hd; }
double hd95(const SurfacePointSet& a, const SurfacePointSet& b) { return surface_metrics(a, b, 0.0).hd95; }
double assd(const SurfacePointSet& a, const SurfacePointSet& b) { return surface_metrics(a, b, 0.0).assd; }
double surface_dice(const SurfacePointSet& a, const SurfacePointSet& b, double tolerance) {
  return surface_metrics(a, b, tolerance).surf_dice;
}

MetricsRecord evaluate_pair(const VolumeGrid& pred, const VolumeGrid& truth, double tolerance, std::string case_id) {
  if (!(tolerance >= 0.0)) throw ArgumentError("evaluate_pair: tolerance must be >= 0");
  MetricsRecord r;
  r.case_id = std::move(case_id);
  r.vol_dice = volumetric_dice(pred, truth);
  const auto has_fg = [](const VolumeGrid& g) {
    return std::any_of(g.data().begin(), g.data().end(), [](float v) { return v != 0.0f; });
  };
  if (!has_fg(pred) || !has_fg(truth)) return r;
  const auto sp = extract_surface_voxels(pred);
  const auto st = extract_surface_voxels(truth);
  const auto m = surface_metrics(sp, st, tolerance);
  r.surf_dice = m.surf_dice;
  r.hd = m.hd;
  r.hd95 = m.hd95;
  r.assd = m.assd;
  return r;
}

TriangleMesh vertex_distance_channel(const TriangleMesh& mesh, const SurfacePointSet& truth_surface) {
  if (truth_surface.empty()) throw ArgumentError("vertex_distance_channel: truth surface is empty");
  TriangleMesh out = mesh;
  std::vector<double> channel(mesh.vertices.size());
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    double best = kInf;
    for (const auto& q : truth_surface.points) best = std::min(best, squared_distance(mesh.vertices[i], q));
    channel[i] = std::sqrt(best);
  }
  out.vertex_scalar = std::move(channel);
  return out;
}

AggregateReport aggregate(const std::vector<MetricsRecord>& records) {
  if (records.empty()) throw ArgumentError("aggregate: no records");
  AggregateReport rep;
  rep.case_count = records.size();
  for (std::size_t m = 0; m < 5; ++m) {
    std::vector<double> vals;
    for (const auto& r : records) {
      const std::optional<double> v = m == 0 ? std::optional<double>(r.vol_dice)
                                      : m == 1 ? r.surf_dice
                                      : m == 2 ? r.hd
                                      : m == 3 ? r.hd95
                                               : r.assd;
      if (v) vals.push_back(*v);
    }
    MetricSummary& s = rep.metrics[m];
    s.count = vals.size();
    s.excluded = records.size() - vals.size();
    if (vals.empty()) {
      s.mean = std::numeric_limits<double>::quiet_NaN();
      s.std = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    double sum = 0.0;
    for (double v : vals) sum += v;
    s.mean = sum / static_cast<double>(vals.size());
    if (vals.size() > 1) {
      double ss = 0.0;
      for (double v : vals) ss += (v - s.mean) * (v - s.mean);
      s.std = std::sqrt(ss / static_cast<double>(vals.size() - 1));
    }
  }
  return rep;
}

std::string metrics_to_json(const std::vector<MetricsRecord>& records) {
  json doc;
  doc["cases"] = json::array();
  for (const auto& r : records) {
    doc["cases"].push_back({{"case", r.case_id},
                            {"vol_dice", r.vol_dice},
                            {"surf_dice", optional_json(r.surf_dice)},
                            {"hd", optional_json(r.hd)},
                            {"hd95", optional_json(r.hd95)},
                            {"assd", optional_json(r.assd)}});
  }
  if (!records.empty()) {
    const auto rep = aggregate(records);
    json agg;
    agg["case_count"] = rep.case_count;
    for (std::size_t m = 0; m < 5; ++m) {
      const auto& s = rep.metrics[m];
      agg[kMetricNames[m]] = {{"mean", s.count ? json(s.mean) : json(nullptr)},
                              {"std", s.count ? json(s.std) : json(nullptr)},
                              {"count", s.count},
                              {"excluded", s.excluded}};
    }
    doc["aggregate"] = std::move(agg);
  }
  return doc.dump(2) + "\n";
}

std::vector<MetricsRecord> metrics_from_json(const std::string& text) {
  std::vector<MetricsRecord> out;
  try {
    const json doc = json::parse(text);
    for (const auto& c : doc.at("cases")) {
      MetricsRecord r;
      r.case_id = c.value("case", "");
      r.vol_dice = c.at("vol_dice").get<double>();
      r.surf_dice = optional_from(c, "surf_dice");
      r.hd = optional_from(c, "hd");
      r.hd95 = optional_from(c, "hd95");
      r.assd = optional_from(c, "assd");
      out.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("metrics JSON: ") + e.what());
  }
  return out;
}

std::string metrics_to_csv(const std::vector<MetricsRecord>& records) {
  std::ostringstream s;
  s << "case,vol_dice,surf_dice,hd,hd95,assd\n";
  auto opt = [](const std::optional<double>& v) { return v ? fmt(*v) : std::string("nan"); };
  for (const auto& r : records) {
    s << r.case_id << ',' << fmt(r.vol_dice) << ',' << opt(r.surf_dice) << ',' << opt(r.hd) << ',' << opt(r.hd95)
      << ',' << opt(r.assd) << '\n';
  }
  return s.str();
}

std::string format_report_table(const std::vector<std::pair<std::string, AggregateReport>>& rows) {
  std::ostringstream s;
  s << "Model";
  for (const char* t : kMetricTitles) s << " | " << t;
  s << " | Cases\n";
  for (const auto& [name, rep] : rows) {
    s << name;
    for (std::size_t m = 0; m < 5; ++m) {
      const auto& ms = rep.metrics[m];
      s << " | " << (ms.count ? fmt(ms.mean, "%.4f") + "±" + fmt(ms.std, "%.4f") : std::string("n/a"));
    }
    s << " | " << rep.case_count << '\n';
  }
  return s.str();
}

}  // namespace shapeseg
