#pragma once

#include <array>
#include <span>
#include <vector>

#include "shapeseg/volgrid.hpp"

namespace shapeseg {

/// How per-pixel BCE and L1 terms are reduced over a slice. The Laplacian term
/// is always a mean over the valid interior.
enum class Reduction { Mean, Sum };

struct LossWeights {
  double bce = 1.0;
  double dice = 1.0;
  double l1 = 1.0;
  double laplacian = 1.0;
};

struct LossConfig {
  double epsilon = 1e-6;
  double clamp_delta = 1e-7;
  LossWeights weights;
  Reduction reduction = Reduction::Mean;

  /// Throws ConfigError when epsilon <= 0, clamp_delta outside (0, 0.5) or a
  /// weight is negative or non-finite.
  void validate() const;
};

/// A loss value with its gradient with respect to the prediction.
struct LossTerm {
  double value = 0.0;
  std::vector<double> gradient;
};

struct LossBreakdown {
  double bce = 0.0;
  double dice = 0.0;
  double l1 = 0.0;
  double laplacian = 0.0;
  double seg_total = 0.0;
  double reg_total = 0.0;
  double total = 0.0;
};

struct TotalLoss {
  LossBreakdown breakdown;
  std::vector<double> seg_gradient;
  std::vector<double> sdf_gradient;
};

/// 3x3 discrete Laplacian stencil, row-major.
inline constexpr std::array<int, 9> kLaplacianKernel{0, 1, 0, 1, -4, 1, 0, 1, 0};

// Span overloads work on row-major buffers; the SliceField overloads add shape
// checks. All gradients are with respect to the first (predicted) argument.

LossTerm bce_loss(std::span<const double> pred, std::span<const double> truth, const LossConfig& cfg);
LossTerm bce_loss(const SliceField& pred, const SliceField& truth, const LossConfig& cfg);

/// 1 - (2 sum(y p) + eps) / (sum(y) + sum(p) + eps)
LossTerm dice_loss(std::span<const double> pred, std::span<const double> truth, const LossConfig& cfg);
LossTerm dice_loss(const SliceField& pred, const SliceField& truth, const LossConfig& cfg);

/// Subgradient 0 where pred == truth.
LossTerm l1_loss(std::span<const double> pred, std::span<const double> truth,
                 Reduction reduction = Reduction::Mean);
LossTerm l1_loss(const SliceField& pred, const SliceField& truth, Reduction reduction = Reduction::Mean);

/// Valid-mode cross-correlation with kLaplacianKernel; output is (w-2) x (h-2).
std::vector<double> laplacian_filter(std::span<const double> field, std::size_t width, std::size_t height);
SliceField laplacian_filter(const SliceField& field);

/// mean |L(truth) - L(pred)| over the (w-2)(h-2) interior responses.
LossTerm laplacian_loss(std::span<const double> pred, std::span<const double> truth, std::size_t width,
                        std::size_t height);
LossTerm laplacian_loss(const SliceField& pred, const SliceField& truth);

/// Weighted sum of all four terms. Segmentation terms act on `seg_pred`
/// (probabilities), regression terms on `sdf_pred`.
TotalLoss total_loss(std::span<const double> seg_pred, std::span<const double> seg_truth,
                     std::span<const double> sdf_pred, std::span<const double> sdf_truth, std::size_t width,
                     std::size_t height, const LossConfig& cfg);
TotalLoss total_loss(const SliceField& seg_pred, const SliceField& seg_truth, const SliceField& sdf_pred,
                     const SliceField& sdf_truth, const LossConfig& cfg);

}  // namespace shapeseg
