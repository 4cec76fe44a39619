#pragma once

#include <functional>
#include <random>

#include "pipevid/layers.hpp"

namespace pipevid {

/// All trainable tensors of one architecture; shapes are wiring-independent so
/// one bundle can be evaluated under any PipelineConfig.
struct ParamBundle {
  std::vector<LayerParams> layers;
  LayerParams head;

  void for_each(const std::function<void(Tensor&)>& fn) {
    for (auto& lp : layers) {
      if (lp.w.size()) fn(lp.w);
      if (lp.b.size()) fn(lp.b);
    }
    if (head.w.size()) fn(head.w);
    if (head.b.size()) fn(head.b);
  }
  void for_each(const std::function<void(const Tensor&)>& fn) const {
    for (const auto& lp : layers) {
      if (lp.w.size()) fn(lp.w);
      if (lp.b.size()) fn(lp.b);
    }
    if (head.w.size()) fn(head.w);
    if (head.b.size()) fn(head.b);
  }
  int64_t count() const {
    int64_t n = 0;
    for_each([&](const Tensor& t) { n += t.size(); });
    return n;
  }
};

inline ParamBundle zero_like(const ArchitectureSpec& arch) {
  ParamBundle p;
  p.layers.resize(static_cast<size_t>(arch.layer_count()));
  for (int i = 0; i < arch.layer_count(); ++i) {
    const auto& l = arch.layers[static_cast<size_t>(i)];
    const auto& sh = arch.shapes[static_cast<size_t>(i)];
    auto& lp = p.layers[static_cast<size_t>(i)];
    if (l.kind == LayerKind::Conv) {
      lp.w = Tensor({l.kernel[0], l.kernel[1], l.kernel[2], sh.in_c, l.out_channels});
      lp.b = Tensor({l.out_channels});
    } else if (l.kind == LayerKind::Dense) {
      lp.w = Tensor({l.kernel[0] * sh.in_h * sh.in_w * sh.in_c, l.out_channels});
      lp.b = Tensor({l.out_channels});
    }
  }
  const auto& hs = arch.head_shape;
  if (arch.head.kind == HeadSpec::Kind::Dense) {
    p.head.w = Tensor({arch.head.kernel[0], arch.head.kernel[1], arch.head.kernel[2], hs.in_c,
                       arch.head.channels});
  } else {
    p.head.w = Tensor({static_cast<int64_t>(arch.head.kernel[0]) * hs.in_c, arch.head.channels});
  }
  p.head.b = Tensor({arch.head.channels});
  return p;
}

/// He-scaled normal weights, zero biases; fully determined by the seed.
inline ParamBundle init_params(const ArchitectureSpec& arch, uint64_t seed) {
  ParamBundle p = zero_like(arch);
  std::mt19937_64 rng(seed);
  auto fill = [&](Tensor& w, int64_t fan_in) {
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
    for (int64_t i = 0; i < w.size(); ++i) w[i] = dist(rng);
  };
  for (auto& lp : p.layers) {
    if (lp.w.size()) fill(lp.w, lp.w.size() / lp.w.dim(static_cast<int>(lp.w.rank()) - 1));
  }
  fill(p.head.w, p.head.w.size() / arch.head.channels);
  return p;
}

namespace detail {

inline LayerSpec head_as_layer(const ArchitectureSpec& arch) {
  LayerSpec l;
  l.name = "__head__";
  l.kind = arch.head.kind == HeadSpec::Kind::Dense ? LayerKind::Conv : LayerKind::Dense;
  l.kernel = arch.head.kernel;
  l.out_channels = arch.head.channels;
  return l;
}

inline Tensor global_avg_pool(const Tensor& in) {
  const int64_t h = in.dim(0), w = in.dim(1), c = in.dim(2);
  Tensor out({1, 1, c});
  for (int64_t y = 0; y < h; ++y) {
    for (int64_t x = 0; x < w; ++x) {
      for (int64_t ch = 0; ch < c; ++ch) out[ch] += in[(y * w + x) * c + ch];
    }
  }
  const double inv = 1.0 / static_cast<double>(h * w);
  for (int64_t ch = 0; ch < c; ++ch) out[ch] *= inv;
  return out;
}

inline void global_avg_pool_backward(const Tensor& dout, Tensor* din) {
  const int64_t h = din->dim(0), w = din->dim(1), c = din->dim(2);
  const double inv = 1.0 / static_cast<double>(h * w);
  for (int64_t y = 0; y < h; ++y) {
    for (int64_t x = 0; x < w; ++x) {
      for (int64_t ch = 0; ch < c; ++ch) (*din)[(y * w + x) * c + ch] += dout[ch] * inv;
    }
  }
}

inline Tensor concat_channels(const std::vector<Tensor>& parts) {
  int64_t h = parts[0].dim(0), w = parts[0].dim(1), c = 0;
  for (const auto& p : parts) c += p.dim(2);
  Tensor out({h, w, c});
  int64_t off = 0;
  for (const auto& p : parts) {
    const int64_t pc = p.dim(2);
    for (int64_t y = 0; y < h; ++y) {
      for (int64_t x = 0; x < w; ++x) {
        const double* src = p.data() + (y * w + x) * pc;
        double* dst = out.data() + (y * w + x) * c + off;
        for (int64_t ch = 0; ch < pc; ++ch) dst[ch] = src[ch];
      }
    }
    off += pc;
  }
  return out;
}

inline void split_channels(const Tensor& grad, std::vector<Tensor>* parts) {
  const int64_t h = grad.dim(0), w = grad.dim(1), c = grad.dim(2);
  int64_t off = 0;
  for (auto& p : *parts) {
    const int64_t pc = p.dim(2);
    for (int64_t y = 0; y < h; ++y) {
      for (int64_t x = 0; x < w; ++x) {
        const double* src = grad.data() + (y * w + x) * c + off;
        double* dst = p.data() + (y * w + x) * pc;
        for (int64_t ch = 0; ch < pc; ++ch) dst[ch] += src[ch];
      }
    }
    off += pc;
  }
}

}  // namespace detail

/// Head forward: dense heads bilinearly resize each source map to the head
/// resolution, concat and convolve; classifier heads global-pool, concat and
/// apply the linear map. `taps` is per source, per tap (newest first).
inline Tensor head_forward(const ArchitectureSpec& arch,
                           const std::vector<std::vector<Tensor>>& taps, const LayerParams& hp) {
  const LayerSpec hl = detail::head_as_layer(arch);
  const int extent = arch.head.kernel[0];
  std::vector<Tensor> gathered;  // per tap, concatenated across sources
  for (int k = 0; k < extent; ++k) {
    std::vector<Tensor> parts;
    for (const auto& src : taps) {
      const Tensor& s = src[static_cast<size_t>(k)];
      if (arch.head.kind == HeadSpec::Kind::Dense) {
        parts.push_back(s.dim(0) == arch.head_shape.in_h && s.dim(1) == arch.head_shape.in_w
                            ? s
                            : upsample_bilinear(s, arch.head_shape.in_h, arch.head_shape.in_w));
      } else {
        parts.push_back(detail::global_avg_pool(s));
      }
    }
    gathered.push_back(detail::concat_channels(parts));
  }
  return apply_layer(hl, gathered, hp);
}

inline void head_backward(const ArchitectureSpec& arch,
                          const std::vector<std::vector<Tensor>>& taps, const LayerParams& hp,
                          const Tensor& out, const Tensor& dout,
                          std::vector<std::vector<Tensor>>* dtaps, LayerParams* dhp) {
  const LayerSpec hl = detail::head_as_layer(arch);
  const int extent = arch.head.kernel[0];
  std::vector<Tensor> gathered;
  std::vector<std::vector<Tensor>> pooled(static_cast<size_t>(extent));
  for (int k = 0; k < extent; ++k) {
    std::vector<Tensor> parts;
    for (const auto& src : taps) {
      const Tensor& s = src[static_cast<size_t>(k)];
      if (arch.head.kind == HeadSpec::Kind::Dense) {
        parts.push_back(s.dim(0) == arch.head_shape.in_h && s.dim(1) == arch.head_shape.in_w
                            ? s
                            : upsample_bilinear(s, arch.head_shape.in_h, arch.head_shape.in_w));
      } else {
        parts.push_back(detail::global_avg_pool(s));
      }
    }
    pooled[static_cast<size_t>(k)] = parts;
    gathered.push_back(detail::concat_channels(parts));
  }
  std::vector<Tensor> dgathered;
  for (const auto& gtap : gathered) dgathered.emplace_back(gtap.shape());
  apply_layer_backward(hl, gathered, hp, out, dout, &dgathered, dhp);
  for (int k = 0; k < extent; ++k) {
    std::vector<Tensor> dparts;
    for (const auto& p : pooled[static_cast<size_t>(k)]) dparts.emplace_back(p.shape());
    detail::split_channels(dgathered[static_cast<size_t>(k)], &dparts);
    for (size_t s = 0; s < taps.size(); ++s) {
      const Tensor& orig = taps[s][static_cast<size_t>(k)];
      Tensor& dst = (*dtaps)[s][static_cast<size_t>(k)];
      if (arch.head.kind == HeadSpec::Kind::Dense) {
        if (orig.dim(0) == arch.head_shape.in_h && orig.dim(1) == arch.head_shape.in_w) {
          dst += dparts[s];
        } else {
          upsample_backward(orig, dparts[s], &dst);
        }
      } else {
        detail::global_avg_pool_backward(dparts[s], &dst);
      }
    }
  }
}

}  // namespace pipevid
