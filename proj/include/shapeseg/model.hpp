#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "shapeseg/losses.hpp"
#include "shapeseg/volgrid.hpp"

namespace shapeseg {

/// Architecture of the two-head encoder-decoder.
///
/// Each encoder stage is two 3x3 SAME convolutions with ReLU followed by a 2x2
/// max-pool; the bottleneck is two more convolutions. Each decoder stage
/// upsamples 2x (nearest), applies a 3x3 convolution, concatenates the
/// matching encoder output and applies two 3x3 convolutions. Stage s carries
/// base_channels * 2^s channels. Two 1x1 heads read the final feature map:
/// sigmoid for segmentation, tanh for the normalized SDF.
struct NetConfig {
  int depth = 2;
  int base_channels = 8;
  std::size_t width = 64;
  std::size_t height = 64;
  std::uint64_t seed = 0;

  /// Throws ConfigError on depth < 1, base_channels < 1 or input dims not
  /// divisible by 2^depth.
  void validate() const;
  std::size_t divisor() const { return std::size_t{1} << depth; }
};

/// One convolution: weight laid out (out, in, k, k), bias (out).
struct ConvLayer {
  std::string name;
  std::size_t out_channels = 0;
  std::size_t in_channels = 0;
  std::size_t kernel = 0;
  std::vector<double> weight;
  std::vector<double> bias;

  std::size_t parameter_count() const { return weight.size() + bias.size(); }
};

struct ModelParams {
  NetConfig config;
  std::vector<ConvLayer> layers;
  /// Bumped on every optimizer update; forward caches remember it so a
  /// backward pass against modified parameters is rejected.
  std::uint64_t generation = 0;

  std::size_t parameter_count() const;
  /// Same shapes, all values zero.
  ModelParams zeros_like() const;
  bool all_finite() const;
  /// Rounds every value to the nearest float32, matching what the model file stores.
  void round_to_f32();
};

/// Layer shapes in network order for a configuration, without allocating weights.
std::vector<ConvLayer> layer_layout(const NetConfig& cfg);

/// He (fan-in) normal initialization from a seeded generator; biases zero.
ModelParams init_params(const NetConfig& cfg);

/// Per-sample activations needed by backward().
struct SampleCache;

struct ForwardResult {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> seg_prob;  ///< sigmoid head, in (0, 1)
  std::vector<double> sdf_pred;  ///< tanh head, in (-1, 1)
};

class ForwardCache {
 public:
  ForwardCache();
  ~ForwardCache();
  ForwardCache(ForwardCache&&) noexcept;
  ForwardCache& operator=(ForwardCache&&) noexcept;

  std::size_t batch_size() const;

 private:
  friend std::vector<ForwardResult> forward(const ModelParams&, std::span<const SliceField>, ForwardCache*);
  friend ModelParams backward(const ModelParams&, const ForwardCache&, std::span<const std::vector<double>>,
                              std::span<const std::vector<double>>);
  std::vector<SampleCache> samples_;
  const ModelParams* params_ = nullptr;
  std::uint64_t generation_ = 0;
};

/// Runs the network on every slice. Slice dims must be divisible by 2^depth.
/// When `cache` is given it receives what backward() needs.
std::vector<ForwardResult> forward(const ModelParams& params, std::span<const SliceField> batch,
                                   ForwardCache* cache = nullptr);

/// Parameter gradients given dLoss/dseg_prob and dLoss/dsdf_pred per sample,
/// summed over the batch. Throws UsageError when the cache was produced with
/// different parameters or does not match the gradient shapes.
ModelParams backward(const ModelParams& params, const ForwardCache& cache,
                     std::span<const std::vector<double>> seg_grads,
                     std::span<const std::vector<double>> sdf_grads);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  ModelParams first_moment;
  ModelParams second_moment;

  static AdamState for_params(const ModelParams& params);
};

/// One bias-corrected Adam update at 1-based `step`. Throws NumericError and
/// leaves params and state untouched if any gradient is non-finite.
void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state, std::int64_t step,
               double learning_rate, const AdamConfig& cfg = {});

struct TrainConfig {
  double learning_rate = 1e-3;
  double decay_factor = 1.0;  ///< lr multiplier applied after every epoch
  int epochs = 50;
  std::size_t batch_size = 4;
  LossConfig loss;
  std::uint64_t seed = 0;
  /// Training is sequential in this implementation, so results are always
  /// reproducible; the flag is kept for configuration compatibility.
  bool deterministic = true;

  void validate() const;
};

struct TrainSample {
  SliceField image;
  SliceField mask;
  SliceField sdf;  ///< normalized to [-1, 1]
};

struct EpochRecord {
  int epoch = 0;
  double learning_rate = 0.0;
  LossBreakdown train_loss;  ///< mean over training samples
  double val_dice = 0.0;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
  double wall_seconds = 0.0;
};

struct TrainResult {
  ModelParams best;
  TrainReport report;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Joint training of both heads on the combined loss. Returns the parameters
/// of the epoch with the highest validation volumetric dice (first on ties),
/// rounded to float32 so that saving and reloading them is lossless.
TrainResult train(std::span<const TrainSample> train_set, std::span<const TrainSample> val_set,
                  const NetConfig& net, const TrainConfig& cfg, const EpochCallback& on_epoch = {});

/// Pooled volumetric dice of thresholded predictions over a sample set.
double dataset_dice(const ModelParams& params, std::span<const TrainSample> samples);

/// Foreground iff probability > 0.5; exactly 0.5 is background.
inline bool is_foreground(double prob) { return prob > 0.5; }

struct VolumePrediction {
  VolumeGrid mask;
  VolumeGrid sdf;
};

/// Slice-by-slice inference. Slice dims must be divisible by 2^depth.
VolumePrediction predict_volume(const ModelParams& params, const VolumeGrid& image);

/// Reflect-pads each slice up to the next multiple of 2^depth, predicts and
/// crops back, so any slice size is accepted.
VolumePrediction predict_volume_padded(const ModelParams& params, const VolumeGrid& image);

/// Mirror padding without edge repeat (…2 1 | 0 1 2 … n-1 | n-2 …) to the given size.
SliceField reflect_pad(const SliceField& slice, std::size_t width, std::size_t height);
SliceField crop(const SliceField& slice, std::size_t width, std::size_t height);

/// "CFX1", u32 little-endian header length, JSON header, float32 LE tensors.
void save_model(const ModelParams& params, const std::filesystem::path& path);
ModelParams load_model(const std::filesystem::path& path);

}  // namespace shapeseg
