#pragma once

#include <deque>

#include "pipevid/params.hpp"
#include "pipevid/pipeline.hpp"

namespace pipevid {

/// Runs the clocked step-by-step recurrence directly: per frame, walk the
/// layers in depth order; a layer whose clock does not tick keeps its cached
/// activations; a subnetwork entry layer reads its producers' cached state
/// (one frame old per crossed boundary), any other layer reads fresh outputs
/// from the current step. State starts at zero. This is the semantic ground
/// truth the graph executors must match bitwise.
class StepInterpreter {
 public:
  StepInterpreter(const ArchitectureSpec& arch, const PipelineConfig& config,
                  const ParamBundle& params)
      : arch_(arch), config_(config), params_(params) {
    const int n = arch.layer_count();
    caches_.resize(static_cast<size_t>(n));
    // Each producer keeps its e newest entries at or before the consumer's
    // anchor; entries fresher than the anchor (pushed within the boundary
    // window) share the deque, so capacity is extent + boundary offset.
    capacity_.assign(static_cast<size_t>(n), 2);
    head_capacity_ = 2;
    auto widen = [&](int src, int reader_stage, int extent) {
      if (src == ArchitectureSpec::kInput) return;
      const int m = reader_stage - config_.stage_of_layer[static_cast<size_t>(src)];
      capacity_[static_cast<size_t>(src)] =
          std::max(capacity_[static_cast<size_t>(src)], extent + m);
    };
    for (int d = 0; d < n; ++d) {
      const int e = arch.layers[static_cast<size_t>(d)].temporal_kernel();
      const int stage = config.stage_of_layer[static_cast<size_t>(d)];
      for (int src : arch.layer_sources[static_cast<size_t>(d)]) widen(src, stage, e);
      if (arch.feedback.enabled && arch.feedback.consumer == d) {
        head_capacity_ = std::max(head_capacity_, e + 1);
      }
    }
    for (int src : arch.head_sources) {
      widen(src, config.stage_of_head(), arch.head.kernel[0]);
    }
    input_capacity_ = 1;
    for (int d = 0; d < n; ++d) {
      for (int src : arch.layer_sources[static_cast<size_t>(d)]) {
        if (src == ArchitectureSpec::kInput) {
          input_capacity_ =
              std::max(input_capacity_, arch.layers[static_cast<size_t>(d)].temporal_kernel());
        }
      }
    }
  }

  /// Feeds one frame, returns the head output for this step.
  Tensor step(const Tensor& frame) {
    check_frame(frame);
    push(&input_cache_, input_capacity_, t_, frame);
    const int n = arch_.layer_count();
    for (int d = 0; d < n; ++d) {
      if (t_ % config_.clock_rates[static_cast<size_t>(d)] != 0) continue;  // no tick
      const auto& l = arch_.layers[static_cast<size_t>(d)];
      const int stage = config_.stage_of_layer[static_cast<size_t>(d)];
      const int e = l.temporal_kernel();
      std::vector<std::vector<Tensor>> per_source;
      for (int src : arch_.layer_sources[static_cast<size_t>(d)]) {
        per_source.push_back(gather(src, anchor_for(stage, src), e));
      }
      if (arch_.feedback.enabled && arch_.feedback.consumer == d) {
        per_source.push_back(gather_head(t_ - 1, e));
      }
      Tensor out = apply_layer(l, concat_taps(per_source),
                               params_.layers[static_cast<size_t>(d)]);
      push(&caches_[static_cast<size_t>(d)], capacity_[static_cast<size_t>(d)], t_,
           std::move(out));
    }
    std::vector<std::vector<Tensor>> head_taps;
    for (int src : arch_.head_sources) {
      head_taps.push_back(
          gather(src, anchor_for(config_.stage_of_head(), src), arch_.head.kernel[0]));
    }
    Tensor y = head_forward(arch_, head_taps, params_.head);
    push(&head_cache_, head_capacity_, t_, y);
    ++t_;
    return y;
  }

 private:
  using Cache = std::deque<std::pair<int64_t, Tensor>>;  // newest at front

  int64_t anchor_for(int reader_stage, int src) const {
    if (src == ArchitectureSpec::kInput) return t_;
    return t_ - (reader_stage - config_.stage_of_layer[static_cast<size_t>(src)]);
  }

  static void push(Cache* c, int capacity, int64_t t, Tensor v) {
    c->emplace_front(t, std::move(v));
    while (static_cast<int>(c->size()) > capacity) c->pop_back();
  }

  Tensor zero_of(int src) const {
    if (src == ArchitectureSpec::kInput) {
      return Tensor({arch_.input_shape.height, arch_.input_shape.width,
                     arch_.input_shape.channels});
    }
    const auto& sh = arch_.shapes[static_cast<size_t>(src)];
    return Tensor({sh.h, sh.w, sh.c});
  }

  std::vector<Tensor> gather(int src, int64_t anchor, int extent) const {
    const Cache& cache = src == ArchitectureSpec::kInput
                             ? input_cache_
                             : caches_[static_cast<size_t>(src)];
    std::vector<Tensor> taps;
    for (const auto& [time, v] : cache) {
      if (static_cast<int>(taps.size()) == extent) break;
      if (time <= anchor) taps.push_back(v);
    }
    while (static_cast<int>(taps.size()) < extent) taps.push_back(zero_of(src));
    return taps;
  }

  std::vector<Tensor> gather_head(int64_t anchor, int extent) const {
    std::vector<Tensor> taps;
    for (const auto& [time, v] : head_cache_) {
      if (static_cast<int>(taps.size()) == extent) break;
      if (time <= anchor) taps.push_back(v);
    }
    while (static_cast<int>(taps.size()) < extent) {
      taps.push_back(Tensor({arch_.head_shape.h, arch_.head_shape.w, arch_.head_shape.c}));
    }
    return taps;
  }

  static std::vector<Tensor> concat_taps(const std::vector<std::vector<Tensor>>& per_source) {
    const size_t extent = per_source[0].size();
    std::vector<Tensor> taps;
    for (size_t k = 0; k < extent; ++k) {
      std::vector<Tensor> parts;
      for (const auto& src : per_source) parts.push_back(src[k]);
      taps.push_back(parts.size() == 1 ? std::move(parts[0])
                                       : detail::concat_channels(parts));
    }
    return taps;
  }

  void check_frame(const Tensor& frame) const {
    if (frame.rank() != 3 || frame.dim(0) != arch_.input_shape.height ||
        frame.dim(1) != arch_.input_shape.width || frame.dim(2) != arch_.input_shape.channels) {
      throw std::invalid_argument("frame shape " + frame.shape_str() +
                                  " does not match the architecture input");
    }
  }

  const ArchitectureSpec& arch_;
  const PipelineConfig& config_;
  const ParamBundle& params_;
  int64_t t_ = 0;
  Cache input_cache_;
  std::vector<Cache> caches_;
  Cache head_cache_;
  std::vector<int> capacity_;
  int input_capacity_ = 1;
  int head_capacity_ = 2;
};

/// Spec-named convenience wrapper: per-frame head outputs for a whole clip.
inline std::vector<Tensor> reference_step_interpreter(const ArchitectureSpec& arch,
                                                      const PipelineConfig& config,
                                                      const ParamBundle& params,
                                                      const std::vector<Tensor>& frames) {
  if (frames.empty()) throw std::invalid_argument("reference interpreter: no frames");
  StepInterpreter interp(arch, config, params);
  std::vector<Tensor> outputs;
  outputs.reserve(frames.size());
  for (const auto& f : frames) outputs.push_back(interp.step(f));
  return outputs;
}

}  // namespace pipevid
