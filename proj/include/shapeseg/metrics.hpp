#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "shapeseg/mesh.hpp"
#include "shapeseg/volgrid.hpp"

namespace shapeseg {

/// Boundary voxels of a mask in physical coordinates, with the voxel indices
/// and grid geometry they came from.
struct SurfacePointSet {
  std::vector<Vec3> points;
  std::vector<std::array<std::size_t, 3>> voxels;
  Dims3 dims{};
  Vec3 spacing{1.0, 1.0, 1.0};
  Vec3 origin{};

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
};

/// Five per-case metrics. Surface metrics are absent when either surface is empty.
struct MetricsRecord {
  std::string case_id;
  double vol_dice = 0.0;
  std::optional<double> surf_dice;
  std::optional<double> hd;
  std::optional<double> hd95;
  std::optional<double> assd;
};

struct MetricSummary {
  double mean = 0.0;
  double std = 0.0;  ///< sample standard deviation (n - 1); 0 when n == 1
  std::size_t count = 0;
  std::size_t excluded = 0;  ///< records where the metric was undefined
};

/// Summaries in table column order: vol_dice, surf_dice, hd, hd95, assd.
struct AggregateReport {
  std::size_t case_count = 0;
  std::array<MetricSummary, 5> metrics;
};

inline constexpr std::array<const char*, 5> kMetricNames{"vol_dice", "surf_dice", "hd", "hd95", "assd"};
inline constexpr std::array<const char*, 5> kMetricTitles{"Volumetric Dice", "Surface Dice", "HD", "HD95", "ASSD"};

/// 2|A n B| / (|A| + |B|); 1 when both masks are empty.
double volumetric_dice(const VolumeGrid& pred, const VolumeGrid& truth);

/// Foreground voxels with at least one 6-connected background neighbour
/// (outside the grid counts as background). Throws EmptinessError on an empty mask.
SurfacePointSet extract_surface_voxels(const VolumeGrid& mask);

/// For each point of `from`, the Euclidean distance to the nearest point of
/// `to`. Uses an exact anisotropic 3D distance transform when both sets come
/// from the same grid, pairwise search otherwise.
std::vector<double> directed_distances(const SurfacePointSet& from, const SurfacePointSet& to);

/// Percentile with linear interpolation between closest ranks: for sorted
/// values v[0..n-1], position q/100 * (n-1), interpolated between its floor
/// and ceiling neighbours.
double percentile_linear(std::vector<double> values, double q);

double hausdorff(const SurfacePointSet& a, const SurfacePointSet& b);
/// 95th percentile of both directed distance arrays pooled together.
double hd95(const SurfacePointSet& a, const SurfacePointSet& b);
double assd(const SurfacePointSet& a, const SurfacePointSet& b);
/// Fraction of points of both surfaces lying within `tolerance` of the other surface.
double surface_dice(const SurfacePointSet& a, const SurfacePointSet& b, double tolerance);

/// All surface metrics from one pair of directed distance computations.
struct SurfaceMetrics {
  double surf_dice = 0.0;
  double hd = 0.0;
  double hd95 = 0.0;
  double assd = 0.0;
};
SurfaceMetrics surface_metrics(const SurfacePointSet& a, const SurfacePointSet& b, double tolerance);

MetricsRecord evaluate_pair(const VolumeGrid& pred, const VolumeGrid& truth, double tolerance = 1.0,
                            std::string case_id = {});

/// Copy of `mesh` whose vertex_scalar holds each vertex's distance to the nearest truth surface point.
TriangleMesh vertex_distance_channel(const TriangleMesh& mesh, const SurfacePointSet& truth_surface);

AggregateReport aggregate(const std::vector<MetricsRecord>& records);

/// JSON document {"cases": [...], "aggregate": {...}}; undefined metrics are null.
std::string metrics_to_json(const std::vector<MetricsRecord>& records);
std::vector<MetricsRecord> metrics_from_json(const std::string& text);

/// Header `case,vol_dice,surf_dice,hd,hd95,assd`, one row per case, `nan` for undefined.
std::string metrics_to_csv(const std::vector<MetricsRecord>& records);

/// Plain-text mean ± std table in column order Volumetric Dice, Surface Dice, HD, HD95, ASSD.
std::string format_report_table(const std::vector<std::pair<std::string, AggregateReport>>& rows);

}  // namespace shapeseg
