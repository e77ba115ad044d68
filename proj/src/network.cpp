#include <algorithm>
#include <cmath>
#include <string>

#include "shapeseg/errors.hpp"
#include "shapeseg/model.hpp"
#include "shapeseg/rng.hpp"

namespace shapeseg {

namespace {

/// Channel-major feature map: data[(c * h + y) * w + x].
struct Tensor {
  std::size_t c = 0;
  std::size_t h = 0;
  std::size_t w = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::size_t c_, std::size_t h_, std::size_t w_) : c(c_), h(h_), w(w_), data(c_ * h_ * w_, 0.0) {}

  double* plane(std::size_t ch) { return data.data() + ch * h * w; }
  const double* plane(std::size_t ch) const { return data.data() + ch * h * w; }
};

// SAME-padded cross-correlation, stride 1, odd kernel.
Tensor conv_forward(const ConvLayer& layer, const Tensor& in) {
  const std::size_t k = layer.kernel;
  const auto pad = static_cast<std::ptrdiff_t>(k / 2);
  const auto H = static_cast<std::ptrdiff_t>(in.h);
  const auto W = static_cast<std::ptrdiff_t>(in.w);
  Tensor out(layer.out_channels, in.h, in.w);
  for (std::size_t o = 0; o < layer.out_channels; ++o) {
    double* dst = out.plane(o);
    std::fill(dst, dst + in.h * in.w, layer.bias[o]);
    for (std::size_t i = 0; i < layer.in_channels; ++i) {
      const double* src = in.plane(i);
      const double* wk = layer.weight.data() + (o * layer.in_channels + i) * k * k;
      for (std::ptrdiff_t ky = 0; ky < static_cast<std::ptrdiff_t>(k); ++ky) {
        const std::ptrdiff_t dy = ky - pad;
        const std::ptrdiff_t y0 = std::max<std::ptrdiff_t>(0, -dy);
        const std::ptrdiff_t y1 = std::min(H, H - dy);
        for (std::ptrdiff_t kx = 0; kx < static_cast<std::ptrdiff_t>(k); ++kx) {
          const std::ptrdiff_t dx = kx - pad;
          const std::ptrdiff_t x0 = std::max<std::ptrdiff_t>(0, -dx);
          const std::ptrdiff_t x1 = std::min(W, W - dx);
          const double wv = wk[ky * static_cast<std::ptrdiff_t>(k) + kx];
          for (std::ptrdiff_t y = y0; y < y1; ++y) {
            double* drow = dst + y * W;
            const double* srow = src + (y + dy) * W + dx;
            for (std::ptrdiff_t x = x0; x < x1; ++x) drow[x] += wv * srow[x];
          }
        }
      }
    }
  }
  return out;
}

// Accumulates weight/bias gradients into `grad` and returns dL/d(input) when
// `need_input_grad` is set.
Tensor conv_backward(const ConvLayer& layer, const Tensor& in, const Tensor& dout, ConvLayer& grad,
                     bool need_input_grad) {
  const std::size_t k = layer.kernel;
  const auto pad = static_cast<std::ptrdiff_t>(k / 2);
  const auto H = static_cast<std::ptrdiff_t>(in.h);
  const auto W = static_cast<std::ptrdiff_t>(in.w);
  Tensor din;
  if (need_input_grad) din = Tensor(in.c, in.h, in.w);
  for (std::size_t o = 0; o < layer.out_channels; ++o) {
    const double* g = dout.plane(o);
    double bsum = 0.0;
    for (std::size_t p = 0; p < in.h * in.w; ++p) bsum += g[p];
    grad.bias[o] += bsum;
    for (std::size_t i = 0; i < layer.in_channels; ++i) {
      const double* src = in.plane(i);
      double* dsrc = need_input_grad ? din.plane(i) : nullptr;
      const std::size_t base = (o * layer.in_channels + i) * k * k;
      const double* wk = layer.weight.data() + base;
      double* gk = grad.weight.data() + base;
      for (std::ptrdiff_t ky = 0; ky < static_cast<std::ptrdiff_t>(k); ++ky) {
        const std::ptrdiff_t dy = ky - pad;
        const std::ptrdiff_t y0 = std::max<std::ptrdiff_t>(0, -dy);
        const std::ptrdiff_t y1 = std::min(H, H - dy);
        for (std::ptrdiff_t kx = 0; kx < static_cast<std::ptrdiff_t>(k); ++kx) {
          const std::ptrdiff_t dx = kx - pad;
          const std::ptrdiff_t x0 = std::max<std::ptrdiff_t>(0, -dx);
          const std::ptrdiff_t x1 = std::min(W, W - dx);
          const std::ptrdiff_t tap = ky * static_cast<std::ptrdiff_t>(k) + kx;
          const double wv = wk[tap];
          double wsum = 0.0;
          for (std::ptrdiff_t y = y0; y < y1; ++y) {
            const double* grow = g + y * W;
            const double* srow = src + (y + dy) * W + dx;
            for (std::ptrdiff_t x = x0; x < x1; ++x) wsum += grow[x] * srow[x];
            if (dsrc != nullptr) {
              double* drow = dsrc + (y + dy) * W + dx;
              for (std::ptrdiff_t x = x0; x < x1; ++x) drow[x] += wv * grow[x];
            }
          }
          gk[tap] += wsum;
        }
      }
    }
  }
  return din;
}

void relu_inplace(Tensor& t) {
  for (double& v : t.data) v = v > 0.0 ? v : 0.0;
}

// Zeroes gradient entries where the ReLU output was not positive.
void relu_backward_inplace(Tensor& grad, const Tensor& out) {
  for (std::size_t i = 0; i < grad.data.size(); ++i) {
    if (!(out.data[i] > 0.0)) grad.data[i] = 0.0;
  }
}

Tensor maxpool_forward(const Tensor& in, std::vector<std::uint32_t>& argmax) {
  Tensor out(in.c, in.h / 2, in.w / 2);
  argmax.assign(out.data.size(), 0);
  std::size_t n = 0;
  for (std::size_t ch = 0; ch < in.c; ++ch) {
    const double* src = in.plane(ch);
    for (std::size_t y = 0; y < out.h; ++y) {
      for (std::size_t x = 0; x < out.w; ++x, ++n) {
        const std::size_t candidates[4] = {2 * y * in.w + 2 * x, 2 * y * in.w + 2 * x + 1,
                                           (2 * y + 1) * in.w + 2 * x, (2 * y + 1) * in.w + 2 * x + 1};
        std::size_t best = candidates[0];
        for (std::size_t c = 1; c < 4; ++c) {
          if (src[candidates[c]] > src[best]) best = candidates[c];
        }
        out.data[n] = src[best];
        argmax[n] = static_cast<std::uint32_t>(ch * in.h * in.w + best);
      }
    }
  }
  return out;
}

Tensor maxpool_backward(const Tensor& dout, const std::vector<std::uint32_t>& argmax, std::size_t h,
                        std::size_t w) {
  Tensor din(dout.c, h, w);
  for (std::size_t n = 0; n < dout.data.size(); ++n) din.data[argmax[n]] += dout.data[n];
  return din;
}

Tensor upsample_forward(const Tensor& in) {
  Tensor out(in.c, in.h * 2, in.w * 2);
  for (std::size_t ch = 0; ch < in.c; ++ch) {
    const double* src = in.plane(ch);
    double* dst = out.plane(ch);
    for (std::size_t y = 0; y < out.h; ++y) {
      for (std::size_t x = 0; x < out.w; ++x) dst[y * out.w + x] = src[(y / 2) * in.w + x / 2];
    }
  }
  return out;
}

// Adjoint of nearest upsampling: sums each 2x2 block.
Tensor upsample_backward(const Tensor& dout) {
  Tensor din(dout.c, dout.h / 2, dout.w / 2);
  for (std::size_t ch = 0; ch < dout.c; ++ch) {
    const double* src = dout.plane(ch);
    double* dst = din.plane(ch);
    for (std::size_t y = 0; y < dout.h; ++y) {
      for (std::size_t x = 0; x < dout.w; ++x) dst[(y / 2) * din.w + x / 2] += src[y * dout.w + x];
    }
  }
  return din;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  Tensor out(a.c + b.c, a.h, a.w);
  std::copy(a.data.begin(), a.data.end(), out.data.begin());
  std::copy(b.data.begin(), b.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(a.data.size()));
  return out;
}

std::pair<Tensor, Tensor> split_channels(const Tensor& t, std::size_t first) {
  Tensor a(first, t.h, t.w);
  Tensor b(t.c - first, t.h, t.w);
  std::copy_n(t.data.begin(), a.data.size(), a.data.begin());
  std::copy(t.data.begin() + static_cast<std::ptrdiff_t>(a.data.size()), t.data.end(), b.data.begin());
  return {std::move(a), std::move(b)};
}

void add_inplace(Tensor& dst, const Tensor& src) {
  for (std::size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += src.data[i];
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

/// Indices into ModelParams::layers, derived from the fixed layer order of
/// layer_layout().
struct LayerIndex {
  int depth;
  std::size_t enc(int s, int j) const { return static_cast<std::size_t>(2 * s + j); }
  std::size_t bottleneck(int j) const { return static_cast<std::size_t>(2 * depth + j); }
  // decoder stages are emitted from s = depth-1 down to 0, three layers each
  std::size_t dec(int s, int j) const { return static_cast<std::size_t>(2 * depth + 2 + 3 * (depth - 1 - s) + j); }
  std::size_t head_seg() const { return static_cast<std::size_t>(5 * depth + 2); }
  std::size_t head_sdf() const { return head_seg() + 1; }
  std::size_t count() const { return head_sdf() + 1; }
};

ConvLayer make_layer(std::string name, std::size_t in, std::size_t out, std::size_t k) {
  ConvLayer l;
  l.name = std::move(name);
  l.in_channels = in;
  l.out_channels = out;
  l.kernel = k;
  l.weight.assign(out * in * k * k, 0.0);
  l.bias.assign(out, 0.0);
  return l;
}

}  // namespace

struct SampleCache {
  std::vector<Tensor> conv_in;   // per layer: input
  std::vector<Tensor> conv_out;  // per layer: activation output
  std::vector<std::vector<std::uint32_t>> pool_argmax;
  std::vector<std::pair<std::size_t, std::size_t>> pool_in_hw;
};

ForwardCache::ForwardCache() = default;
ForwardCache::~ForwardCache() = default;
ForwardCache::ForwardCache(ForwardCache&&) noexcept = default;
ForwardCache& ForwardCache::operator=(ForwardCache&&) noexcept = default;
std::size_t ForwardCache::batch_size() const { return samples_.size(); }

void NetConfig::validate() const {
  if (depth < 1) throw ConfigError("network depth must be >= 1");
  if (depth > 16) throw ConfigError("network depth must be <= 16");
  if (base_channels < 1) throw ConfigError("base_channels must be >= 1");
  if (width == 0 || height == 0) throw ConfigError("input size must be positive");
  if (width % divisor() != 0 || height % divisor() != 0) {
    throw ConfigError("input size " + std::to_string(width) + "x" + std::to_string(height) +
                      " is not divisible by 2^depth = " + std::to_string(divisor()));
  }
}

std::vector<ConvLayer> layer_layout(const NetConfig& cfg) {
  cfg.validate();
  const auto ch = [&](int s) { return static_cast<std::size_t>(cfg.base_channels) << s; };
  std::vector<ConvLayer> layers;
  std::size_t in = 1;
  for (int s = 0; s < cfg.depth; ++s) {
    layers.push_back(make_layer("enc" + std::to_string(s) + "_conv1", in, ch(s), 3));
    layers.push_back(make_layer("enc" + std::to_string(s) + "_conv2", ch(s), ch(s), 3));
    in = ch(s);
  }
  layers.push_back(make_layer("bottleneck_conv1", in, ch(cfg.depth), 3));
  layers.push_back(make_layer("bottleneck_conv2", ch(cfg.depth), ch(cfg.depth), 3));
  for (int s = cfg.depth - 1; s >= 0; --s) {
    const std::string tag = "dec" + std::to_string(s);
    layers.push_back(make_layer(tag + "_up", ch(s + 1), ch(s), 3));
    layers.push_back(make_layer(tag + "_conv1", 2 * ch(s), ch(s), 3));
    layers.push_back(make_layer(tag + "_conv2", ch(s), ch(s), 3));
  }
  layers.push_back(make_layer("head_seg", ch(0), 1, 1));
  layers.push_back(make_layer("head_sdf", ch(0), 1, 1));
  return layers;
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.parameter_count();
  return n;
}

ModelParams ModelParams::zeros_like() const {
  ModelParams z;
  z.config = config;
  z.layers = layers;
  for (auto& l : z.layers) {
    std::fill(l.weight.begin(), l.weight.end(), 0.0);
    std::fill(l.bias.begin(), l.bias.end(), 0.0);
  }
  return z;
}

bool ModelParams::all_finite() const {
  for (const auto& l : layers) {
    for (double v : l.weight) {
      if (!std::isfinite(v)) return false;
    }
    for (double v : l.bias) {
      if (!std::isfinite(v)) return false;
    }
  }
  return true;
}

void ModelParams::round_to_f32() {
  for (auto& l : layers) {
    for (double& v : l.weight) v = static_cast<double>(static_cast<float>(v));
    for (double& v : l.bias) v = static_cast<double>(static_cast<float>(v));
  }
}

ModelParams init_params(const NetConfig& cfg) {
  ModelParams params;
  params.config = cfg;
  params.layers = layer_layout(cfg);
  Pcg32 rng(cfg.seed, 0x5eed);
  for (auto& l : params.layers) {
    const double fan_in = static_cast<double>(l.in_channels * l.kernel * l.kernel);
    const double stddev = std::sqrt(2.0 / fan_in);
    for (double& w : l.weight) w = stddev * rng.normal();
  }
  return params;
}

std::vector<ForwardResult> forward(const ModelParams& params, std::span<const SliceField> batch,
                                   ForwardCache* cache) {
  const NetConfig& cfg = params.config;
  const LayerIndex idx{cfg.depth};
  if (params.layers.size() != idx.count()) throw UsageError("model parameters do not match their configuration");

  if (cache != nullptr) {
    cache->samples_.clear();
    cache->samples_.resize(batch.size());
    cache->params_ = &params;
    cache->generation_ = params.generation;
  }

  std::vector<ForwardResult> results;
  results.reserve(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const SliceField& img = batch[b];
    if (img.width() % cfg.divisor() != 0 || img.height() % cfg.divisor() != 0) {
      throw ShapeError("forward: slice " + std::to_string(img.width()) + "x" + std::to_string(img.height()) +
                       " is not divisible by 2^depth = " + std::to_string(cfg.divisor()));
    }
    SampleCache local;
    SampleCache& sc = cache != nullptr ? cache->samples_[b] : local;
    sc.conv_in.assign(idx.count(), Tensor{});
    sc.conv_out.assign(idx.count(), Tensor{});
    sc.pool_argmax.assign(static_cast<std::size_t>(cfg.depth), {});
    sc.pool_in_hw.assign(static_cast<std::size_t>(cfg.depth), {});
    const bool keep = cache != nullptr;

    auto conv_relu = [&](std::size_t li, Tensor x) {
      Tensor y = conv_forward(params.layers[li], x);
      relu_inplace(y);
      if (keep) {
        sc.conv_in[li] = std::move(x);
        sc.conv_out[li] = y;
      }
      return y;
    };

    Tensor x(1, img.height(), img.width());
    std::copy(img.values().begin(), img.values().end(), x.data.begin());

    std::vector<Tensor> skips(static_cast<std::size_t>(cfg.depth));
    for (int s = 0; s < cfg.depth; ++s) {
      x = conv_relu(idx.enc(s, 0), std::move(x));
      x = conv_relu(idx.enc(s, 1), std::move(x));
      skips[static_cast<std::size_t>(s)] = x;
      sc.pool_in_hw[static_cast<std::size_t>(s)] = {x.h, x.w};
      x = maxpool_forward(x, sc.pool_argmax[static_cast<std::size_t>(s)]);
    }
    x = conv_relu(idx.bottleneck(0), std::move(x));
    x = conv_relu(idx.bottleneck(1), std::move(x));
    for (int s = cfg.depth - 1; s >= 0; --s) {
      Tensor up = conv_relu(idx.dec(s, 0), upsample_forward(x));
      x = conv_relu(idx.dec(s, 1), concat_channels(up, skips[static_cast<std::size_t>(s)]));
      x = conv_relu(idx.dec(s, 2), std::move(x));
    }

    ForwardResult r;
    r.width = img.width();
    r.height = img.height();
    Tensor seg = conv_forward(params.layers[idx.head_seg()], x);
    Tensor sdf = conv_forward(params.layers[idx.head_sdf()], x);
    for (double& v : seg.data) v = sigmoid(v);
    for (double& v : sdf.data) v = std::tanh(v);
    r.seg_prob = seg.data;
    r.sdf_pred = sdf.data;
    if (keep) {
      sc.conv_in[idx.head_seg()] = x;
      sc.conv_in[idx.head_sdf()] = std::move(x);
      sc.conv_out[idx.head_seg()] = std::move(seg);
      sc.conv_out[idx.head_sdf()] = std::move(sdf);
    }
    results.push_back(std::move(r));
  }
  return results;
}

ModelParams backward(const ModelParams& params, const ForwardCache& cache,
                     std::span<const std::vector<double>> seg_grads,
                     std::span<const std::vector<double>> sdf_grads) {
  if (cache.params_ != &params || cache.generation_ != params.generation) {
    throw UsageError("backward: cache was produced by a different or since-modified parameter set");
  }
  if (seg_grads.size() != cache.samples_.size() || sdf_grads.size() != cache.samples_.size()) {
    throw UsageError("backward: gradient batch size does not match the cached forward pass");
  }
  const NetConfig& cfg = params.config;
  const LayerIndex idx{cfg.depth};
  ModelParams grads = params.zeros_like();

  for (std::size_t b = 0; b < cache.samples_.size(); ++b) {
    const SampleCache& sc = cache.samples_[b];
    const Tensor& seg = sc.conv_out[idx.head_seg()];
    const Tensor& sdf = sc.conv_out[idx.head_sdf()];
    if (seg_grads[b].size() != seg.data.size() || sdf_grads[b].size() != sdf.data.size()) {
      throw UsageError("backward: head gradient shape does not match the cached forward pass");
    }

    Tensor dseg(1, seg.h, seg.w);
    Tensor dsdf(1, sdf.h, sdf.w);
    for (std::size_t i = 0; i < seg.data.size(); ++i) {
      const double s = seg.data[i];
      const double t = sdf.data[i];
      dseg.data[i] = seg_grads[b][i] * s * (1.0 - s);
      dsdf.data[i] = sdf_grads[b][i] * (1.0 - t * t);
    }

    auto conv_relu_back = [&](std::size_t li, Tensor dy, bool need_input) {
      relu_backward_inplace(dy, sc.conv_out[li]);
      return conv_backward(params.layers[li], sc.conv_in[li], dy, grads.layers[li], need_input);
    };

    Tensor dx = conv_backward(params.layers[idx.head_seg()], sc.conv_in[idx.head_seg()], dseg,
                              grads.layers[idx.head_seg()], true);
    add_inplace(dx, conv_backward(params.layers[idx.head_sdf()], sc.conv_in[idx.head_sdf()], dsdf,
                                  grads.layers[idx.head_sdf()], true));

    std::vector<Tensor> dskips(static_cast<std::size_t>(cfg.depth));
    for (int s = 0; s < cfg.depth; ++s) {
      dx = conv_relu_back(idx.dec(s, 2), std::move(dx), true);
      dx = conv_relu_back(idx.dec(s, 1), std::move(dx), true);
      const std::size_t up_channels = params.layers[idx.dec(s, 0)].out_channels;
      auto [dup, dskip] = split_channels(dx, up_channels);
      dskips[static_cast<std::size_t>(s)] = std::move(dskip);
      dx = upsample_backward(conv_relu_back(idx.dec(s, 0), std::move(dup), true));
    }
    dx = conv_relu_back(idx.bottleneck(1), std::move(dx), true);
    dx = conv_relu_back(idx.bottleneck(0), std::move(dx), true);
    for (int s = cfg.depth - 1; s >= 0; --s) {
      const auto su = static_cast<std::size_t>(s);
      const auto [h, w] = sc.pool_in_hw[su];
      dx = maxpool_backward(dx, sc.pool_argmax[su], h, w);
      add_inplace(dx, dskips[su]);
      dx = conv_relu_back(idx.enc(s, 1), std::move(dx), true);
      dx = conv_relu_back(idx.enc(s, 0), std::move(dx), s > 0);
    }
  }
  return grads;
}

}  // namespace shapeseg
