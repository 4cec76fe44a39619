#pragma once

#include <map>

#include "pipevid/analysis.hpp"

namespace pipevid {

/// Forward pass over an unrolled graph that retains every node output, plus
/// exact reverse-mode backpropagation through cross-time edges, cached-state
/// reuse, skip/feedback wiring and the shared-across-time parameters.
class TrainRun {
 public:
  TrainRun(const UnrolledGraph& g, const ParamBundle& params, const std::vector<Tensor>& frames)
      : g_(g), arch_(*g.arch), params_(params), frames_(frames) {
    if (static_cast<int64_t>(frames.size()) != g.frames) {
      throw std::invalid_argument("frame count does not match the unrolled graph");
    }
    const int n = arch_.layer_count();
    layer_out_.resize(static_cast<size_t>(n));
    for (int d = 0; d < n; ++d) {
      layer_out_[static_cast<size_t>(d)].resize(g.ticks[static_cast<size_t>(d)].size());
    }
    head_out_.resize(static_cast<size_t>(g.frames));
    forward();
  }

  const std::vector<Tensor>& head_outputs() const { return head_out_; }

  bool has_node(int layer, int64_t t) const { return g_.node_exists(layer, t); }

  const Tensor& layer_output(int layer, int64_t t) const {
    if (!g_.node_exists(layer, t)) {
      throw std::invalid_argument("no node at layer " + std::to_string(layer) + ", t=" +
                                  std::to_string(t));
    }
    return layer_out_[static_cast<size_t>(layer)][static_cast<size_t>(g_.tick_index(layer, t))];
  }

  /// Reverse pass. `dhead` gives the loss adjoint of each head output;
  /// `dacts` adds adjoints on intermediate layer outputs (distillation terms).
  ParamBundle backward(const std::vector<Tensor>& dhead,
                       const std::map<std::pair<int, int64_t>, Tensor>& dacts = {}) const {
    const int n = arch_.layer_count();
    ParamBundle grads = zero_like(arch_);
    std::vector<std::vector<Tensor>> dlayer(static_cast<size_t>(n));
    for (int d = 0; d < n; ++d) {
      const auto& outs = layer_out_[static_cast<size_t>(d)];
      dlayer[static_cast<size_t>(d)].reserve(outs.size());
      for (const auto& o : outs) dlayer[static_cast<size_t>(d)].emplace_back(o.shape());
    }
    std::vector<Tensor> dheads;
    dheads.reserve(head_out_.size());
    for (size_t t = 0; t < head_out_.size(); ++t) {
      dheads.emplace_back(head_out_[t].shape());
      if (t < dhead.size() && dhead[t].size()) dheads[t] += dhead[t];
    }
    for (const auto& [key, adj] : dacts) {
      const auto [d, t] = key;
      if (!g_.node_exists(d, t)) {
        throw std::invalid_argument("distillation adjoint on a non-existing node");
      }
      dlayer[static_cast<size_t>(d)][static_cast<size_t>(g_.tick_index(d, t))] += adj;
    }

    // Reverse schedule: heads at time t come after every chain node at t, and
    // within one t deeper layers come later; walking (t desc, head, d desc)
    // visits consumers before producers. Cross-time edges always point
    // backward in t, so accumulated adjoints are complete when visited.
    for (int64_t t = g_.frames - 1; t >= 0; --t) {
      backprop_head(t, dheads[static_cast<size_t>(t)], &dlayer, &grads);
      for (int d = n - 1; d >= 0; --d) {
        if (!g_.node_exists(d, t)) continue;
        backprop_node(d, t, dlayer[static_cast<size_t>(d)][static_cast<size_t>(g_.tick_index(d, t))],
                      &dlayer, &dheads, &grads);
      }
    }
    return grads;
  }

 private:
  Tensor fetch(const TapRef& tap) const {
    switch (tap.src) {
      case TapRef::Src::Frame: return frames_[static_cast<size_t>(tap.t)];
      case TapRef::Src::Layer:
        return layer_out_[static_cast<size_t>(tap.layer)]
                         [static_cast<size_t>(g_.tick_index(tap.layer, tap.t))];
      case TapRef::Src::Head: return head_out_[static_cast<size_t>(tap.t)];
      case TapRef::Src::Zero: break;
    }
    if (tap.layer == TapRef::kHeadZero) {
      return Tensor({arch_.head_shape.h, arch_.head_shape.w, arch_.head_shape.c});
    }
    if (tap.layer == TapRef::kFrameZero) {
      return Tensor({arch_.input_shape.height, arch_.input_shape.width,
                     arch_.input_shape.channels});
    }
    const auto& sh = arch_.shapes[static_cast<size_t>(tap.layer)];
    return Tensor({sh.h, sh.w, sh.c});
  }

  /// Gathers one chain node's taps: per tap index, channel-concat of sources.
  std::vector<Tensor> gather(const NodeInputs& in) const {
    const size_t extent = in.sources[0].size();
    std::vector<Tensor> taps;
    for (size_t k = 0; k < extent; ++k) {
      std::vector<Tensor> parts;
      for (const auto& src : in.sources) parts.push_back(fetch(src[k]));
      taps.push_back(parts.size() == 1 ? std::move(parts[0]) : detail::concat_channels(parts));
    }
    return taps;
  }

  void forward() {
    const int n = arch_.layer_count();
    for (int64_t t = 0; t < g_.frames; ++t) {
      for (int d = 0; d < n; ++d) {
        if (!g_.node_exists(d, t)) continue;
        const auto& in =
            g_.node_inputs[static_cast<size_t>(d)][static_cast<size_t>(g_.tick_index(d, t))];
        layer_out_[static_cast<size_t>(d)][static_cast<size_t>(g_.tick_index(d, t))] =
            apply_layer(arch_.layers[static_cast<size_t>(d)], gather(in),
                        params_.layers[static_cast<size_t>(d)]);
      }
      const auto& hin = g_.head_inputs[static_cast<size_t>(t)];
      std::vector<std::vector<Tensor>> taps;
      for (const auto& src : hin.sources) {
        std::vector<Tensor> tap_list;
        for (const auto& tap : src) tap_list.push_back(fetch(tap));
        taps.push_back(std::move(tap_list));
      }
      head_out_[static_cast<size_t>(t)] = head_forward(arch_, taps, params_.head);
    }
  }

  void route_tap_adjoint(const TapRef& tap, const Tensor& adj,
                         std::vector<std::vector<Tensor>>* dlayer,
                         std::vector<Tensor>* dheads) const {
    switch (tap.src) {
      case TapRef::Src::Layer:
        (*dlayer)[static_cast<size_t>(tap.layer)]
                 [static_cast<size_t>(g_.tick_index(tap.layer, tap.t))] += adj;
        return;
      case TapRef::Src::Head: (*dheads)[static_cast<size_t>(tap.t)] += adj; return;
      case TapRef::Src::Frame:
      case TapRef::Src::Zero: return;  // inputs are not trained
    }
  }

  void backprop_node(int d, int64_t t, const Tensor& dout,
                     std::vector<std::vector<Tensor>>* dlayer, std::vector<Tensor>* dheads,
                     ParamBundle* grads) const {
    const auto& in = g_.node_inputs[static_cast<size_t>(d)][static_cast<size_t>(g_.tick_index(d, t))];
    const auto taps = gather(in);
    std::vector<Tensor> dtaps;
    for (const auto& tap : taps) dtaps.emplace_back(tap.shape());
    const Tensor& out =
        layer_out_[static_cast<size_t>(d)][static_cast<size_t>(g_.tick_index(d, t))];
    apply_layer_backward(arch_.layers[static_cast<size_t>(d)], taps,
                         params_.layers[static_cast<size_t>(d)], out, dout, &dtaps,
                         &grads->layers[static_cast<size_t>(d)]);
    const size_t ns = in.sources.size();
    for (size_t k = 0; k < taps.size(); ++k) {
      if (ns == 1) {
        route_tap_adjoint(in.sources[0][k], dtaps[k], dlayer, dheads);
        continue;
      }
      std::vector<Tensor> dparts;
      for (size_t s = 0; s < ns; ++s) {
        dparts.emplace_back(fetch(in.sources[s][k]).shape());
      }
      detail::split_channels(dtaps[k], &dparts);
      for (size_t s = 0; s < ns; ++s) route_tap_adjoint(in.sources[s][k], dparts[s], dlayer, dheads);
    }
  }

  void backprop_head(int64_t t, const Tensor& dout, std::vector<std::vector<Tensor>>* dlayer,
                     ParamBundle* grads) const {
    const auto& hin = g_.head_inputs[static_cast<size_t>(t)];
    std::vector<std::vector<Tensor>> taps;
    for (const auto& src : hin.sources) {
      std::vector<Tensor> tap_list;
      for (const auto& tap : src) tap_list.push_back(fetch(tap));
      taps.push_back(std::move(tap_list));
    }
    std::vector<std::vector<Tensor>> dtaps;
    for (const auto& src : taps) {
      std::vector<Tensor> d;
      for (const auto& tap : src) d.emplace_back(tap.shape());
      dtaps.push_back(std::move(d));
    }
    head_backward(arch_, taps, params_.head, head_out_[static_cast<size_t>(t)], dout, &dtaps,
                  &grads->head);
    for (size_t s = 0; s < hin.sources.size(); ++s) {
      for (size_t k = 0; k < hin.sources[s].size(); ++k) {
        // Head adjoints only flow to chain layers (no head-to-head taps).
        if (hin.sources[s][k].src == TapRef::Src::Layer) {
          (*dlayer)[static_cast<size_t>(hin.sources[s][k].layer)]
                   [static_cast<size_t>(g_.tick_index(hin.sources[s][k].layer,
                                                      hin.sources[s][k].t))] += dtaps[s][k];
        }
      }
    }
  }

  const UnrolledGraph& g_;
  const ArchitectureSpec& arch_;
  const ParamBundle& params_;
  const std::vector<Tensor>& frames_;
  std::vector<std::vector<Tensor>> layer_out_;
  std::vector<Tensor> head_out_;
};

}  // namespace pipevid
