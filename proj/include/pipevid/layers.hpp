#pragma once

#include <cmath>
#include <limits>

#include "pipevid/arch.hpp"
#include "pipevid/tensor.hpp"

namespace pipevid {

/// Parameters of one layer. `w` layout for conv: [taps, kh, kw, cin, cout]
/// (tap 0 is the newest time step); for dense: [in_features, cout]. Layers
/// without parameters keep both tensors empty.
struct LayerParams {
  Tensor w;
  Tensor b;
  bool empty() const { return w.size() == 0 && b.size() == 0; }
};

namespace detail {

struct Pad {
  int64_t begin;
};

inline Pad same_pad(int64_t in, int64_t out, int k, int s) {
  int64_t total = std::max<int64_t>((out - 1) * s + k - in, 0);
  return {total / 2};
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double softplus(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Forward kernels. `taps` hold the layer's gathered input, one (H, W, C)
// tensor per consumed time step, newest first. Channel concat across sources
// is the caller's job, so concat layers reduce to identity here.
// ---------------------------------------------------------------------------

inline Tensor conv_forward(const LayerSpec& l, const std::vector<Tensor>& taps,
                           const LayerParams& p) {
  const int e = l.kernel[0], kh = l.kernel[1], kw = l.kernel[2];
  const int sh = l.stride[1], sw = l.stride[2];
  const int64_t ih = taps[0].dim(0), iw = taps[0].dim(1), ic = taps[0].dim(2);
  const int64_t oh = (ih + sh - 1) / sh, ow = (iw + sw - 1) / sw;
  const int64_t oc = p.b.size();
  auto ph = detail::same_pad(ih, oh, kh, sh), pw = detail::same_pad(iw, ow, kw, sw);
  Tensor out({oh, ow, oc});
  const double* W = p.w.data();
  for (int64_t y = 0; y < oh; ++y) {
    for (int64_t x = 0; x < ow; ++x) {
      double* o = out.data() + (y * ow + x) * oc;
      for (int64_t co = 0; co < oc; ++co) o[co] = p.b[co];
      for (int t = 0; t < e; ++t) {
        const Tensor& in = taps[static_cast<size_t>(t)];
        for (int dy = 0; dy < kh; ++dy) {
          int64_t sy = y * sh + dy - ph.begin;
          if (sy < 0 || sy >= ih) continue;
          for (int dx = 0; dx < kw; ++dx) {
            int64_t sx = x * sw + dx - pw.begin;
            if (sx < 0 || sx >= iw) continue;
            const double* ip = in.data() + (sy * iw + sx) * ic;
            const double* wp = W + (((static_cast<int64_t>(t) * kh + dy) * kw + dx) * ic) * oc;
            for (int64_t ci = 0; ci < ic; ++ci) {
              const double v = ip[ci];
              if (v == 0.0) continue;
              const double* wr = wp + ci * oc;
              for (int64_t co = 0; co < oc; ++co) o[co] += v * wr[co];
            }
          }
        }
      }
    }
  }
  return out;
}

inline Tensor pool_forward(const LayerSpec& l, const std::vector<Tensor>& taps) {
  const bool is_max = l.kind == LayerKind::MaxPool;
  const int e = l.kernel[0], kh = l.kernel[1], kw = l.kernel[2];
  const int sh = l.stride[1], sw = l.stride[2];
  const int64_t ih = taps[0].dim(0), iw = taps[0].dim(1), c = taps[0].dim(2);
  const int64_t oh = (ih + sh - 1) / sh, ow = (iw + sw - 1) / sw;
  auto ph = detail::same_pad(ih, oh, kh, sh), pw = detail::same_pad(iw, ow, kw, sw);
  Tensor out({oh, ow, c});
  for (int64_t y = 0; y < oh; ++y) {
    for (int64_t x = 0; x < ow; ++x) {
      for (int64_t ch = 0; ch < c; ++ch) {
        double acc = is_max ? -std::numeric_limits<double>::infinity() : 0.0;
        int64_t count = 0;
        for (int t = 0; t < e; ++t) {
          const Tensor& in = taps[static_cast<size_t>(t)];
          for (int dy = 0; dy < kh; ++dy) {
            int64_t sy = y * sh + dy - ph.begin;
            if (sy < 0 || sy >= ih) continue;
            for (int dx = 0; dx < kw; ++dx) {
              int64_t sx = x * sw + dx - pw.begin;
              if (sx < 0 || sx >= iw) continue;
              double v = in[(sy * iw + sx) * c + ch];
              if (is_max) {
                if (v > acc) acc = v;
              } else {
                acc += v;
              }
              ++count;
            }
          }
        }
        out[(y * ow + x) * c + ch] = is_max ? acc : (count ? acc / static_cast<double>(count) : 0.0);
      }
    }
  }
  return out;
}

/// Bilinear resize to (th, tw); constants are preserved exactly.
inline Tensor upsample_bilinear(const Tensor& in, int64_t th, int64_t tw) {
  const int64_t ih = in.dim(0), iw = in.dim(1), c = in.dim(2);
  Tensor out({th, tw, c});
  const double scale_y = static_cast<double>(ih) / static_cast<double>(th);
  const double scale_x = static_cast<double>(iw) / static_cast<double>(tw);
  for (int64_t y = 0; y < th; ++y) {
    double fy = (static_cast<double>(y) + 0.5) * scale_y - 0.5;
    int64_t y0 = static_cast<int64_t>(std::floor(fy));
    double wy = fy - static_cast<double>(y0);
    int64_t y0c = std::clamp<int64_t>(y0, 0, ih - 1), y1c = std::clamp<int64_t>(y0 + 1, 0, ih - 1);
    for (int64_t x = 0; x < tw; ++x) {
      double fx = (static_cast<double>(x) + 0.5) * scale_x - 0.5;
      int64_t x0 = static_cast<int64_t>(std::floor(fx));
      double wx = fx - static_cast<double>(x0);
      int64_t x0c = std::clamp<int64_t>(x0, 0, iw - 1), x1c = std::clamp<int64_t>(x0 + 1, 0, iw - 1);
      for (int64_t ch = 0; ch < c; ++ch) {
        double v00 = in[(y0c * iw + x0c) * c + ch], v01 = in[(y0c * iw + x1c) * c + ch];
        double v10 = in[(y1c * iw + x0c) * c + ch], v11 = in[(y1c * iw + x1c) * c + ch];
        out[(y * tw + x) * c + ch] =
            (1 - wy) * ((1 - wx) * v00 + wx * v01) + wy * ((1 - wx) * v10 + wx * v11);
      }
    }
  }
  return out;
}

inline Tensor dense_forward(const std::vector<Tensor>& taps, const LayerParams& p) {
  const int64_t oc = p.b.size();
  Tensor out({1, 1, oc});
  for (int64_t co = 0; co < oc; ++co) out[co] = p.b[co];
  int64_t base = 0;
  for (const auto& tap : taps) {
    for (int64_t i = 0; i < tap.size(); ++i) {
      const double v = tap[i];
      if (v != 0.0) {
        const double* wr = p.w.data() + (base + i) * oc;
        for (int64_t co = 0; co < oc; ++co) out[co] += v * wr[co];
      }
    }
    base += tap.size();
  }
  return out;
}

inline Tensor relu_forward(const Tensor& in) {
  Tensor out = in;
  for (int64_t i = 0; i < out.size(); ++i) out[i] = std::max(out[i], 0.0);
  return out;
}

/// Applies one layer to its gathered taps (newest first). Concat layers are
/// identity here because source concatenation happens at gather time.
inline Tensor apply_layer(const LayerSpec& l, const std::vector<Tensor>& taps,
                          const LayerParams& p) {
  if (taps.empty()) throw std::invalid_argument("apply_layer: no input taps");
  if (static_cast<int>(taps.size()) != l.kernel[0] &&
      (l.kind == LayerKind::Conv || l.kind == LayerKind::MaxPool ||
       l.kind == LayerKind::AvgPool || l.kind == LayerKind::Dense)) {
    throw std::invalid_argument("apply_layer: " + l.name + " expects " +
                                std::to_string(l.kernel[0]) + " taps, got " +
                                std::to_string(taps.size()));
  }
  switch (l.kind) {
    case LayerKind::Conv: return conv_forward(l, taps, p);
    case LayerKind::MaxPool:
    case LayerKind::AvgPool: return pool_forward(l, taps);
    case LayerKind::Concat: return taps[0];
    case LayerKind::Upsample: return upsample_bilinear(taps[0], l.target[0], l.target[1]);
    case LayerKind::Dense: return dense_forward(taps, p);
    case LayerKind::Relu: return relu_forward(taps[0]);
  }
  throw std::logic_error("unreachable layer kind");
}

// ---------------------------------------------------------------------------
// Backward kernels: adjoint of the output -> adjoints of taps and parameters.
// ---------------------------------------------------------------------------

inline void conv_backward(const LayerSpec& l, const std::vector<Tensor>& taps,
                          const LayerParams& p, const Tensor& dout,
                          std::vector<Tensor>* dtaps, LayerParams* dp) {
  const int e = l.kernel[0], kh = l.kernel[1], kw = l.kernel[2];
  const int sh = l.stride[1], sw = l.stride[2];
  const int64_t ih = taps[0].dim(0), iw = taps[0].dim(1), ic = taps[0].dim(2);
  const int64_t oh = dout.dim(0), ow = dout.dim(1), oc = dout.dim(2);
  auto ph = detail::same_pad(ih, oh, kh, sh), pw = detail::same_pad(iw, ow, kw, sw);
  for (int64_t y = 0; y < oh; ++y) {
    for (int64_t x = 0; x < ow; ++x) {
      const double* go = dout.data() + (y * ow + x) * oc;
      for (int64_t co = 0; co < oc; ++co) dp->b[co] += go[co];
      for (int t = 0; t < e; ++t) {
        const Tensor& in = taps[static_cast<size_t>(t)];
        Tensor& din = (*dtaps)[static_cast<size_t>(t)];
        for (int dy = 0; dy < kh; ++dy) {
          int64_t sy = y * sh + dy - ph.begin;
          if (sy < 0 || sy >= ih) continue;
          for (int dx = 0; dx < kw; ++dx) {
            int64_t sx = x * sw + dx - pw.begin;
            if (sx < 0 || sx >= iw) continue;
            const double* ip = in.data() + (sy * iw + sx) * ic;
            double* gip = din.data() + (sy * iw + sx) * ic;
            const int64_t wbase = ((static_cast<int64_t>(t) * kh + dy) * kw + dx) * ic * oc;
            for (int64_t ci = 0; ci < ic; ++ci) {
              const double* wr = p.w.data() + wbase + ci * oc;
              double* gwr = dp->w.data() + wbase + ci * oc;
              double acc = 0.0;
              const double v = ip[ci];
              for (int64_t co = 0; co < oc; ++co) {
                acc += wr[co] * go[co];
                gwr[co] += v * go[co];
              }
              gip[ci] += acc;
            }
          }
        }
      }
    }
  }
}

inline void pool_backward(const LayerSpec& l, const std::vector<Tensor>& taps,
                          const Tensor& dout, std::vector<Tensor>* dtaps) {
  const bool is_max = l.kind == LayerKind::MaxPool;
  const int e = l.kernel[0], kh = l.kernel[1], kw = l.kernel[2];
  const int sh = l.stride[1], sw = l.stride[2];
  const int64_t ih = taps[0].dim(0), iw = taps[0].dim(1), c = taps[0].dim(2);
  const int64_t oh = dout.dim(0), ow = dout.dim(1);
  auto ph = detail::same_pad(ih, oh, kh, sh), pw = detail::same_pad(iw, ow, kw, sw);
  for (int64_t y = 0; y < oh; ++y) {
    for (int64_t x = 0; x < ow; ++x) {
      for (int64_t ch = 0; ch < c; ++ch) {
        const double g = dout[(y * ow + x) * c + ch];
        if (g == 0.0) continue;
        if (is_max) {
          // First-index subgradient at ties, scanning taps then rows then cols.
          double best = -std::numeric_limits<double>::infinity();
          int bt = -1;
          int64_t bsy = 0, bsx = 0;
          for (int t = 0; t < e; ++t) {
            const Tensor& in = taps[static_cast<size_t>(t)];
            for (int dy = 0; dy < kh; ++dy) {
              int64_t sy = y * sh + dy - ph.begin;
              if (sy < 0 || sy >= ih) continue;
              for (int dx = 0; dx < kw; ++dx) {
                int64_t sx = x * sw + dx - pw.begin;
                if (sx < 0 || sx >= iw) continue;
                double v = in[(sy * iw + sx) * c + ch];
                if (v > best) {
                  best = v;
                  bt = t;
                  bsy = sy;
                  bsx = sx;
                }
              }
            }
          }
          if (bt >= 0) (*dtaps)[static_cast<size_t>(bt)][(bsy * iw + bsx) * c + ch] += g;
        } else {
          int64_t count = 0;
          for (int t = 0; t < e; ++t) {
            (void)t;
            for (int dy = 0; dy < kh; ++dy) {
              int64_t sy = y * sh + dy - ph.begin;
              if (sy < 0 || sy >= ih) continue;
              for (int dx = 0; dx < kw; ++dx) {
                int64_t sx = x * sw + dx - pw.begin;
                if (sx < 0 || sx >= iw) continue;
                ++count;
              }
            }
          }
          if (!count) continue;
          const double share = g / static_cast<double>(count);
          for (int t = 0; t < e; ++t) {
            Tensor& din = (*dtaps)[static_cast<size_t>(t)];
            for (int dy = 0; dy < kh; ++dy) {
              int64_t sy = y * sh + dy - ph.begin;
              if (sy < 0 || sy >= ih) continue;
              for (int dx = 0; dx < kw; ++dx) {
                int64_t sx = x * sw + dx - pw.begin;
                if (sx < 0 || sx >= iw) continue;
                din[(sy * iw + sx) * c + ch] += share;
              }
            }
          }
        }
      }
    }
  }
}

inline void upsample_backward(const Tensor& in, const Tensor& dout, Tensor* din) {
  const int64_t ih = in.dim(0), iw = in.dim(1), c = in.dim(2);
  const int64_t th = dout.dim(0), tw = dout.dim(1);
  const double scale_y = static_cast<double>(ih) / static_cast<double>(th);
  const double scale_x = static_cast<double>(iw) / static_cast<double>(tw);
  for (int64_t y = 0; y < th; ++y) {
    double fy = (static_cast<double>(y) + 0.5) * scale_y - 0.5;
    int64_t y0 = static_cast<int64_t>(std::floor(fy));
    double wy = fy - static_cast<double>(y0);
    int64_t y0c = std::clamp<int64_t>(y0, 0, ih - 1), y1c = std::clamp<int64_t>(y0 + 1, 0, ih - 1);
    for (int64_t x = 0; x < tw; ++x) {
      double fx = (static_cast<double>(x) + 0.5) * scale_x - 0.5;
      int64_t x0 = static_cast<int64_t>(std::floor(fx));
      double wx = fx - static_cast<double>(x0);
      int64_t x0c = std::clamp<int64_t>(x0, 0, iw - 1), x1c = std::clamp<int64_t>(x0 + 1, 0, iw - 1);
      for (int64_t ch = 0; ch < c; ++ch) {
        const double g = dout[(y * tw + x) * c + ch];
        if (g == 0.0) continue;
        (*din)[(y0c * iw + x0c) * c + ch] += (1 - wy) * (1 - wx) * g;
        (*din)[(y0c * iw + x1c) * c + ch] += (1 - wy) * wx * g;
        (*din)[(y1c * iw + x0c) * c + ch] += wy * (1 - wx) * g;
        (*din)[(y1c * iw + x1c) * c + ch] += wy * wx * g;
      }
    }
  }
}

inline void dense_backward(const std::vector<Tensor>& taps, const LayerParams& p,
                           const Tensor& dout, std::vector<Tensor>* dtaps, LayerParams* dp) {
  const int64_t oc = dout.size();
  for (int64_t co = 0; co < oc; ++co) dp->b[co] += dout[co];
  int64_t base = 0;
  for (size_t t = 0; t < taps.size(); ++t) {
    const Tensor& in = taps[t];
    Tensor& din = (*dtaps)[t];
    for (int64_t i = 0; i < in.size(); ++i) {
      const double* wr = p.w.data() + (base + i) * oc;
      double* gwr = dp->w.data() + (base + i) * oc;
      double acc = 0.0;
      for (int64_t co = 0; co < oc; ++co) {
        acc += wr[co] * dout[co];
        gwr[co] += in[i] * dout[co];
      }
      din[i] += acc;
    }
    base += in.size();
  }
}

inline void apply_layer_backward(const LayerSpec& l, const std::vector<Tensor>& taps,
                                 const LayerParams& p, const Tensor& out, const Tensor& dout,
                                 std::vector<Tensor>* dtaps, LayerParams* dp) {
  switch (l.kind) {
    case LayerKind::Conv: conv_backward(l, taps, p, dout, dtaps, dp); return;
    case LayerKind::MaxPool:
    case LayerKind::AvgPool: pool_backward(l, taps, dout, dtaps); return;
    case LayerKind::Concat: (*dtaps)[0] += dout; return;
    case LayerKind::Upsample: upsample_backward(taps[0], dout, &(*dtaps)[0]); return;
    case LayerKind::Dense: dense_backward(taps, p, dout, dtaps, dp); return;
    case LayerKind::Relu: {
      Tensor& din = (*dtaps)[0];
      for (int64_t i = 0; i < dout.size(); ++i) {
        if (out[i] > 0.0) din[i] += dout[i];
      }
      return;
    }
  }
}

// ---------------------------------------------------------------------------
// Losses and label synthesis.
// ---------------------------------------------------------------------------

/// Mean over elements of w*t*softplus(-x) + (1-t)*softplus(x), the weighted
/// sigmoid cross-entropy with `positive_weight` on keypoint pixels.
inline double weighted_sigmoid_xent(const Tensor& logits, const Tensor& targets,
                                    double positive_weight, Tensor* dlogits = nullptr) {
  if (!logits.same_shape(targets)) {
    throw std::invalid_argument("weighted_sigmoid_xent shape mismatch: " + logits.shape_str() +
                                " vs " + targets.shape_str());
  }
  const double n = static_cast<double>(logits.size());
  double loss = 0.0;
  for (int64_t i = 0; i < logits.size(); ++i) {
    const double x = logits[i], t = targets[i];
    loss += positive_weight * t * detail::softplus(-x) + (1.0 - t) * detail::softplus(x);
    if (dlogits) {
      (*dlogits)[i] +=
          ((1.0 - t) * detail::sigmoid(x) - positive_weight * t * detail::sigmoid(-x)) / n;
    }
  }
  return loss / n;
}

inline double softmax_xent(const Tensor& logits, int64_t label, Tensor* dlogits = nullptr) {
  if (label < 0 || label >= logits.size()) {
    throw std::invalid_argument("softmax_xent: label out of range");
  }
  double mx = logits[0];
  for (int64_t i = 1; i < logits.size(); ++i) mx = std::max(mx, logits[i]);
  double z = 0.0;
  for (int64_t i = 0; i < logits.size(); ++i) z += std::exp(logits[i] - mx);
  const double logz = std::log(z) + mx;
  if (dlogits) {
    for (int64_t i = 0; i < logits.size(); ++i) {
      (*dlogits)[i] += std::exp(logits[i] - logz) - (i == label ? 1.0 : 0.0);
    }
  }
  return logz - logits[label];
}

/// Sum of squared differences with optional adjoint accumulation.
inline double squared_error(const Tensor& a, const Tensor& b, Tensor* da = nullptr,
                            double scale = 1.0) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument("squared_error shape mismatch: " + a.shape_str() + " vs " +
                                b.shape_str());
  }
  double s = 0.0;
  for (int64_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
    if (da) (*da)[i] += 2.0 * d * scale;
  }
  return s;
}

/// Per-channel gaussian heatmaps, peak 1 at each point and elementwise max
/// where blobs of one channel overlap.
inline Tensor gaussian_heatmap(const std::vector<std::vector<std::pair<double, double>>>& points,
                               double sigma, int64_t h, int64_t w) {
  if (sigma <= 0.0) throw std::invalid_argument("gaussian_heatmap: sigma must be positive");
  const int64_t c = static_cast<int64_t>(points.size());
  Tensor out({h, w, std::max<int64_t>(c, 1)});
  const double inv = 1.0 / (2.0 * sigma * sigma);
  for (int64_t ch = 0; ch < c; ++ch) {
    for (const auto& [px, py] : points[static_cast<size_t>(ch)]) {
      for (int64_t y = 0; y < h; ++y) {
        for (int64_t x = 0; x < w; ++x) {
          const double dx = static_cast<double>(x) - px, dy = static_cast<double>(y) - py;
          const double v = std::exp(-(dx * dx + dy * dy) * inv);
          double& cell = out[(y * w + x) * out.dim(2) + ch];
          cell = std::max(cell, v);
        }
      }
    }
  }
  return out;
}

}  // namespace pipevid
