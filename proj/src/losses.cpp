#include "shapeseg/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "shapeseg/errors.hpp"

namespace shapeseg {

namespace {

void check_same_size(std::span<const double> a, std::span<const double> b, const char* what) {
  if (a.size() != b.size()) {
    throw ShapeError(std::string(what) + ": prediction has " + std::to_string(a.size()) +
                     " elements, truth has " + std::to_string(b.size()));
  }
  if (a.empty()) throw ShapeError(std::string(what) + ": empty input");
}

void check_same_shape(const SliceField& a, const SliceField& b, const char* what) {
  if (a.width() != b.width() || a.height() != b.height()) {
    throw ShapeError(std::string(what) + ": shape mismatch " + std::to_string(a.width()) + "x" +
                     std::to_string(a.height()) + " vs " + std::to_string(b.width()) + "x" +
                     std::to_string(b.height()));
  }
}

void check_laplacian_shape(std::size_t n, std::size_t width, std::size_t height) {
  if (width < 3 || height < 3) throw ShapeError("laplacian: field must be at least 3x3");
  if (n != width * height) throw ShapeError("laplacian: buffer size does not match width*height");
}

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

}  // namespace

void LossConfig::validate() const {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw ConfigError("loss epsilon must be positive");
  if (!(clamp_delta > 0.0 && clamp_delta < 0.5)) throw ConfigError("loss clamp_delta must lie in (0, 0.5)");
  for (double w : {weights.bce, weights.dice, weights.l1, weights.laplacian}) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("loss weights must be nonnegative and finite");
  }
}

LossTerm bce_loss(std::span<const double> pred, std::span<const double> truth, const LossConfig& cfg) {
  check_same_size(pred, truth, "bce_loss");
  const double lo = cfg.clamp_delta;
  const double hi = 1.0 - cfg.clamp_delta;
  const double norm = cfg.reduction == Reduction::Mean ? 1.0 / static_cast<double>(pred.size()) : 1.0;

  LossTerm out;
  out.gradient.resize(pred.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double y = truth[i];
    const double raw = pred[i];
    const double p = std::clamp(raw, lo, hi);
    acc += -y * std::log(p) - (1.0 - y) * std::log(1.0 - p);
    // Clamping is flat outside [lo, hi], so the gradient vanishes there.
    const bool inside = raw > lo && raw < hi;
    out.gradient[i] = inside ? norm * (-y / p + (1.0 - y) / (1.0 - p)) : 0.0;
  }
  out.value = acc * norm;
  return out;
}

LossTerm bce_loss(const SliceField& pred, const SliceField& truth, const LossConfig& cfg) {
  check_same_shape(pred, truth, "bce_loss");
  return bce_loss(pred.values(), truth.values(), cfg);
}

LossTerm dice_loss(std::span<const double> pred, std::span<const double> truth, const LossConfig& cfg) {
  check_same_size(pred, truth, "dice_loss");
  const double eps = cfg.epsilon;
  double inter = 0.0;
  double sum_y = 0.0;
  double sum_p = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    inter += truth[i] * pred[i];
    sum_y += truth[i];
    sum_p += pred[i];
  }
  const double num = 2.0 * inter + eps;
  const double den = sum_y + sum_p + eps;

  LossTerm out;
  out.value = 1.0 - num / den;
  out.gradient.resize(pred.size());
  const double inv_den2 = 1.0 / (den * den);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    out.gradient[i] = -(2.0 * truth[i] * den - num) * inv_den2;
  }
  return out;
}

LossTerm dice_loss(const SliceField& pred, const SliceField& truth, const LossConfig& cfg) {
  check_same_shape(pred, truth, "dice_loss");
  return dice_loss(pred.values(), truth.values(), cfg);
}

LossTerm l1_loss(std::span<const double> pred, std::span<const double> truth, Reduction reduction) {
  check_same_size(pred, truth, "l1_loss");
  const double norm = reduction == Reduction::Mean ? 1.0 / static_cast<double>(pred.size()) : 1.0;
  LossTerm out;
  out.gradient.resize(pred.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - truth[i];
    acc += std::abs(d);
    out.gradient[i] = norm * sign(d);
  }
  out.value = acc * norm;
  return out;
}

LossTerm l1_loss(const SliceField& pred, const SliceField& truth, Reduction reduction) {
  check_same_shape(pred, truth, "l1_loss");
  return l1_loss(pred.values(), truth.values(), reduction);
}

std::vector<double> laplacian_filter(std::span<const double> field, std::size_t width, std::size_t height) {
  check_laplacian_shape(field.size(), width, height);
  const std::size_t ow = width - 2;
  const std::size_t oh = height - 2;
  std::vector<double> out(ow * oh);
  for (std::size_t y = 0; y < oh; ++y) {
    const double* up = field.data() + y * width;
    const double* mid = up + width;
    const double* down = mid + width;
    for (std::size_t x = 0; x < ow; ++x) {
      out[x + y * ow] = up[x + 1] + mid[x] - 4.0 * mid[x + 1] + mid[x + 2] + down[x + 1];
    }
  }
  return out;
}

SliceField laplacian_filter(const SliceField& field) {
  auto values = laplacian_filter(field.values(), field.width(), field.height());
  return SliceField(field.width() - 2, field.height() - 2, SliceKind::Real, std::move(values));
}

LossTerm laplacian_loss(std::span<const double> pred, std::span<const double> truth, std::size_t width,
                        std::size_t height) {
  check_same_size(pred, truth, "laplacian_loss");
  check_laplacian_shape(pred.size(), width, height);
  const auto lp = laplacian_filter(pred, width, height);
  const auto lt = laplacian_filter(truth, width, height);
  const std::size_t ow = width - 2;
  const std::size_t oh = height - 2;
  const double inv_n = 1.0 / static_cast<double>(lp.size());

  LossTerm out;
  out.gradient.assign(pred.size(), 0.0);
  double acc = 0.0;
  for (std::size_t y = 0; y < oh; ++y) {
    for (std::size_t x = 0; x < ow; ++x) {
      const double r = lt[x + y * ow] - lp[x + y * ow];
      acc += std::abs(r);
      // d|r|/d pred = -sign(r) * stencil, scattered back onto the input.
      const double g = -sign(r) * inv_n;
      if (g == 0.0) continue;
      const std::size_t c = (x + 1) + (y + 1) * width;
      out.gradient[c - width] += g;
      out.gradient[c - 1] += g;
      out.gradient[c] -= 4.0 * g;
      out.gradient[c + 1] += g;
      out.gradient[c + width] += g;
    }
  }
  out.value = acc * inv_n;
  return out;
}

LossTerm laplacian_loss(const SliceField& pred, const SliceField& truth) {
  check_same_shape(pred, truth, "laplacian_loss");
  return laplacian_loss(pred.values(), truth.values(), pred.width(), pred.height());
}

TotalLoss total_loss(std::span<const double> seg_pred, std::span<const double> seg_truth,
                     std::span<const double> sdf_pred, std::span<const double> sdf_truth, std::size_t width,
                     std::size_t height, const LossConfig& cfg) {
  if (seg_pred.size() != width * height || sdf_pred.size() != width * height) {
    throw ShapeError("total_loss: prediction size does not match width*height");
  }
  const LossWeights& w = cfg.weights;
  const auto bce = bce_loss(seg_pred, seg_truth, cfg);
  const auto dice = dice_loss(seg_pred, seg_truth, cfg);
  const auto l1 = l1_loss(sdf_pred, sdf_truth, cfg.reduction);
  const auto lap = laplacian_loss(sdf_pred, sdf_truth, width, height);

  TotalLoss out;
  auto& b = out.breakdown;
  b.bce = bce.value;
  b.dice = dice.value;
  b.l1 = l1.value;
  b.laplacian = lap.value;
  b.seg_total = w.bce * b.bce + w.dice * b.dice;
  b.reg_total = w.l1 * b.l1 + w.laplacian * b.laplacian;
  b.total = b.seg_total + b.reg_total;

  out.seg_gradient.resize(seg_pred.size());
  out.sdf_gradient.resize(sdf_pred.size());
  for (std::size_t i = 0; i < seg_pred.size(); ++i) {
    out.seg_gradient[i] = w.bce * bce.gradient[i] + w.dice * dice.gradient[i];
    out.sdf_gradient[i] = w.l1 * l1.gradient[i] + w.laplacian * lap.gradient[i];
  }
  return out;
}

TotalLoss total_loss(const SliceField& seg_pred, const SliceField& seg_truth, const SliceField& sdf_pred,
                     const SliceField& sdf_truth, const LossConfig& cfg) {
  check_same_shape(seg_pred, seg_truth, "total_loss");
  check_same_shape(sdf_pred, sdf_truth, "total_loss");
  check_same_shape(seg_pred, sdf_pred, "total_loss");
  return total_loss(seg_pred.values(), seg_truth.values(), sdf_pred.values(), sdf_truth.values(),
                    seg_pred.width(), seg_pred.height(), cfg);
}

}  // namespace shapeseg
