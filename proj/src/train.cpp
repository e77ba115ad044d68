#include <chrono>
#include <cmath>
#include <numeric>
#include <string>

#include "shapeseg/errors.hpp"
#include "shapeseg/model.hpp"
#include "shapeseg/rng.hpp"

namespace shapeseg {

namespace {

template <typename Fn>
void for_each_value(ModelParams& p, const ModelParams& q, Fn&& fn) {
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    auto& pl = p.layers[l];
    const auto& ql = q.layers[l];
    for (std::size_t i = 0; i < pl.weight.size(); ++i) fn(pl.weight[i], ql.weight[i]);
    for (std::size_t i = 0; i < pl.bias.size(); ++i) fn(pl.bias[i], ql.bias[i]);
  }
}

void check_same_layout(const ModelParams& a, const ModelParams& b, const char* what) {
  bool ok = a.layers.size() == b.layers.size();
  for (std::size_t l = 0; ok && l < a.layers.size(); ++l) {
    ok = a.layers[l].weight.size() == b.layers[l].weight.size() &&
         a.layers[l].bias.size() == b.layers[l].bias.size();
  }
  if (!ok) throw ShapeError(std::string(what) + ": tensor shapes do not match the parameters");
}

void add_breakdown(LossBreakdown& acc, const LossBreakdown& b) {
  acc.bce += b.bce;
  acc.dice += b.dice;
  acc.l1 += b.l1;
  acc.laplacian += b.laplacian;
  acc.seg_total += b.seg_total;
  acc.reg_total += b.reg_total;
  acc.total += b.total;
}

void scale_breakdown(LossBreakdown& b, double s) {
  b.bce *= s;
  b.dice *= s;
  b.l1 *= s;
  b.laplacian *= s;
  b.seg_total *= s;
  b.reg_total *= s;
  b.total *= s;
}

void check_samples(std::span<const TrainSample> samples, const NetConfig& net, const char* which) {
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    for (const SliceField* f : {&s.image, &s.mask, &s.sdf}) {
      if (f->width() != net.width || f->height() != net.height) {
        throw ShapeError(std::string(which) + " sample " + std::to_string(i) + " is " +
                         std::to_string(f->width()) + "x" + std::to_string(f->height()) + ", network expects " +
                         std::to_string(net.width) + "x" + std::to_string(net.height));
      }
    }
    if (!s.mask.is_binary()) throw ValidationError(std::string(which) + " sample mask must be binary");
  }
}

std::size_t reflect_index(std::ptrdiff_t i, std::size_t n) {
  if (n == 1) return 0;
  const auto period = static_cast<std::ptrdiff_t>(2 * (n - 1));
  i %= period;
  if (i < 0) i += period;
  if (i >= static_cast<std::ptrdiff_t>(n)) i = period - i;
  return static_cast<std::size_t>(i);
}

}  // namespace

AdamState AdamState::for_params(const ModelParams& params) {
  return AdamState{params.zeros_like(), params.zeros_like()};
}

void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state, std::int64_t step,
               double learning_rate, const AdamConfig& cfg) {
  if (step < 1) throw ArgumentError("adam_step: step index must be >= 1");
  check_same_layout(params, grads, "adam_step");
  check_same_layout(params, state.first_moment, "adam_step");
  check_same_layout(params, state.second_moment, "adam_step");
  if (!grads.all_finite()) throw NumericError("adam_step: non-finite gradient; parameters left unchanged");

  const double t = static_cast<double>(step);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for_each_value(state.first_moment, grads, [&](double& m, double g) { m = cfg.beta1 * m + (1.0 - cfg.beta1) * g; });
  for_each_value(state.second_moment, grads,
                 [&](double& v, double g) { v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g; });

  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    auto update = [&](std::vector<double>& p, const std::vector<double>& m, const std::vector<double>& v) {
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        p[i] -= learning_rate * mhat / (std::sqrt(vhat) + cfg.epsilon);
      }
    };
    update(params.layers[l].weight, state.first_moment.layers[l].weight, state.second_moment.layers[l].weight);
    update(params.layers[l].bias, state.first_moment.layers[l].bias, state.second_moment.layers[l].bias);
  }
  ++params.generation;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be > 0");
  if (!(decay_factor > 0.0 && decay_factor <= 1.0)) throw ConfigError("decay_factor must lie in (0, 1]");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  loss.validate();
}

double dataset_dice(const ModelParams& params, std::span<const TrainSample> samples) {
  std::size_t inter = 0;
  std::size_t total = 0;
  for (const auto& s : samples) {
    const auto out = forward(params, std::span(&s.image, 1));
    const auto& prob = out.front().seg_prob;
    for (std::size_t i = 0; i < prob.size(); ++i) {
      const bool p = is_foreground(prob[i]);
      const bool t = s.mask.values()[i] == 1.0;
      inter += static_cast<std::size_t>(p && t);
      total += static_cast<std::size_t>(p) + static_cast<std::size_t>(t);
    }
  }
  if (total == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(total);
}

TrainResult train(std::span<const TrainSample> train_set, std::span<const TrainSample> val_set,
                  const NetConfig& net, const TrainConfig& cfg, const EpochCallback& on_epoch) {
  net.validate();
  cfg.validate();
  if (train_set.empty()) throw ArgumentError("train: training set is empty");
  if (val_set.empty()) throw ArgumentError("train: validation set is empty");
  check_samples(train_set, net, "training");
  check_samples(val_set, net, "validation");

  const auto started = std::chrono::steady_clock::now();
  ModelParams params = init_params(net);
  AdamState adam = AdamState::for_params(params);
  Pcg32 rng(cfg.seed, 0x7a1e);

  TrainResult result;
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  std::int64_t step = 0;
  double best_dice = -1.0;
  const std::size_t pixels = net.width * net.height;

  std::vector<SliceField> batch_images;
  std::vector<std::vector<double>> seg_grads;
  std::vector<std::vector<double>> sdf_grads;
  ForwardCache cache;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = cfg.learning_rate * std::pow(cfg.decay_factor, epoch);
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[rng.below(static_cast<std::uint32_t>(i))]);
    }

    LossBreakdown epoch_loss;
    std::size_t batch_no = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++batch_no) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      const double inv_batch = 1.0 / static_cast<double>(stop - start);
      batch_images.clear();
      for (std::size_t k = start; k < stop; ++k) batch_images.push_back(train_set[order[k]].image);

      const auto outputs = forward(params, batch_images, &cache);
      seg_grads.assign(stop - start, {});
      sdf_grads.assign(stop - start, {});
      for (std::size_t k = start; k < stop; ++k) {
        const TrainSample& s = train_set[order[k]];
        const auto& out = outputs[k - start];
        auto loss = total_loss(out.seg_prob, s.mask.values(), out.sdf_pred, s.sdf.values(), net.width, net.height,
                               cfg.loss);
        if (!std::isfinite(loss.breakdown.total)) {
          throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                             std::to_string(batch_no));
        }
        add_breakdown(epoch_loss, loss.breakdown);
        for (std::size_t i = 0; i < pixels; ++i) {
          loss.seg_gradient[i] *= inv_batch;
          loss.sdf_gradient[i] *= inv_batch;
        }
        seg_grads[k - start] = std::move(loss.seg_gradient);
        sdf_grads[k - start] = std::move(loss.sdf_gradient);
      }
      const ModelParams grads = backward(params, cache, seg_grads, sdf_grads);
      try {
        adam_step(params, grads, adam, ++step, lr);
      } catch (const NumericError&) {
        throw NumericError("train: non-finite gradient at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batch_no));
      }
    }
    scale_breakdown(epoch_loss, 1.0 / static_cast<double>(train_set.size()));

    EpochRecord rec;
    rec.epoch = epoch;
    rec.learning_rate = lr;
    rec.train_loss = epoch_loss;
    // Validate the float32 snapshot that would be returned, so the recorded
    // dice is exactly the dice of the saved model.
    ModelParams snapshot = params;
    snapshot.round_to_f32();
    snapshot.generation = 0;
    rec.val_dice = dataset_dice(snapshot, val_set);
    if (rec.val_dice > best_dice) {
      best_dice = rec.val_dice;
      result.best = std::move(snapshot);
      result.report.best_epoch = epoch;
    }
    result.report.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }

  result.report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return result;
}

SliceField reflect_pad(const SliceField& slice, std::size_t width, std::size_t height) {
  if (width < slice.width() || height < slice.height()) throw ShapeError("reflect_pad: target smaller than slice");
  std::vector<double> out(width * height);
  for (std::size_t y = 0; y < height; ++y) {
    const std::size_t sy = reflect_index(static_cast<std::ptrdiff_t>(y), slice.height());
    for (std::size_t x = 0; x < width; ++x) {
      out[x + y * width] = slice.at(reflect_index(static_cast<std::ptrdiff_t>(x), slice.width()), sy);
    }
  }
  return SliceField(width, height, slice.kind(), std::move(out));
}

SliceField crop(const SliceField& slice, std::size_t width, std::size_t height) {
  if (width > slice.width() || height > slice.height()) throw ShapeError("crop: target larger than slice");
  std::vector<double> out(width * height);
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) out[x + y * width] = slice.at(x, y);
  }
  return SliceField(width, height, slice.kind(), std::move(out));
}

VolumePrediction predict_volume(const ModelParams& params, const VolumeGrid& image) {
  const std::size_t div = params.config.divisor();
  if (image.nx() % div != 0 || image.ny() % div != 0) {
    throw ShapeError("predict_volume: slice dims " + std::to_string(image.nx()) + "x" + std::to_string(image.ny()) +
                     " are not divisible by 2^depth = " + std::to_string(div));
  }
  std::vector<float> mask;
  std::vector<float> sdf;
  mask.reserve(image.size());
  sdf.reserve(image.size());
  for (std::size_t z = 0; z < image.nz(); ++z) {
    const SliceField slice = extract_slice(image, z);
    const auto out = forward(params, std::span(&slice, 1));
    for (double p : out.front().seg_prob) mask.push_back(is_foreground(p) ? 1.0f : 0.0f);
    for (double v : out.front().sdf_pred) sdf.push_back(static_cast<float>(v));
  }
  return {VolumeGrid(image.dims(), image.spacing(), image.origin(), ElementKind::BinaryMask, std::move(mask)),
          VolumeGrid(image.dims(), image.spacing(), image.origin(), ElementKind::ScalarF32, std::move(sdf))};
}

VolumePrediction predict_volume_padded(const ModelParams& params, const VolumeGrid& image) {
  const std::size_t div = params.config.divisor();
  const std::size_t pw = (image.nx() + div - 1) / div * div;
  const std::size_t ph = (image.ny() + div - 1) / div * div;
  if (pw == image.nx() && ph == image.ny()) return predict_volume(params, image);

  std::vector<float> mask;
  std::vector<float> sdf;
  mask.reserve(image.size());
  sdf.reserve(image.size());
  for (std::size_t z = 0; z < image.nz(); ++z) {
    const SliceField padded = reflect_pad(extract_slice(image, z), pw, ph);
    const auto out = forward(params, std::span(&padded, 1));
    const auto seg = crop(SliceField(pw, ph, SliceKind::Real, out.front().seg_prob), image.nx(), image.ny());
    const auto reg = crop(SliceField(pw, ph, SliceKind::Real, out.front().sdf_pred), image.nx(), image.ny());
    for (double p : seg.values()) mask.push_back(is_foreground(p) ? 1.0f : 0.0f);
    for (double v : reg.values()) sdf.push_back(static_cast<float>(v));
  }
  return {VolumeGrid(image.dims(), image.spacing(), image.origin(), ElementKind::BinaryMask, std::move(mask)),
          VolumeGrid(image.dims(), image.spacing(), image.origin(), ElementKind::ScalarF32, std::move(sdf))};
}

}  // namespace shapeseg
