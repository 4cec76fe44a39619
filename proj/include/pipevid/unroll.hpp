#pragma once

#include <cstdint>

#include "pipevid/pipeline.hpp"

namespace pipevid {

/// One consumed entry of a producer's cached stream. Zero taps (pre-stream
/// warmup) keep the producer in `layer` so evaluators can shape them:
/// >= 0 a chain layer, kFrameZero the input stream, kHeadZero the head.
struct TapRef {
  enum class Src { Frame, Layer, Head, Zero };
  static constexpr int kFrameZero = -1;
  static constexpr int kHeadZero = -2;
  Src src = Src::Zero;
  int layer = -1;   // for Src::Layer and Src::Zero
  int64_t t = -1;   // producer tick time (or frame index)
};

/// Ordered inputs of one node instance: one tap list per source, newest tap
/// first. Sources follow ArchitectureSpec::layer_sources order, with the
/// feedback edge (when present) appended last.
struct NodeInputs {
  std::vector<std::vector<TapRef>> sources;
};

/// Time-expanded dependency graph of one (architecture, config, T) triple. A
/// chain node (d, t) exists iff t mod clock_rates[d] == 0; head nodes exist at
/// every t. Every edge is causal and cross-subnetwork edges are at least one
/// frame old.
struct UnrolledGraph {
  const ArchitectureSpec* arch = nullptr;
  PipelineConfig config;
  int64_t frames = 0;

  std::vector<std::vector<int64_t>> ticks;             // per layer, ascending
  std::vector<std::vector<NodeInputs>> node_inputs;    // per layer, per tick
  std::vector<NodeInputs> head_inputs;                 // per t
  std::vector<int> state_slots;                        // per layer cache depth
  std::vector<std::string> warnings;

  bool node_exists(int layer, int64_t t) const {
    return t >= 0 && t < frames && t % config.clock_rates[static_cast<size_t>(layer)] == 0;
  }
  int64_t tick_index(int layer, int64_t t) const {
    return t / config.clock_rates[static_cast<size_t>(layer)];
  }
  int64_t node_count() const {
    int64_t n = frames;  // head nodes
    for (const auto& ts : ticks) n += static_cast<int64_t>(ts.size());
    return n;
  }
};

namespace detail {

/// Newest `extent` producer ticks at or before `anchor`, zero-padded.
inline std::vector<TapRef> layer_taps(int producer, int rate, int64_t anchor, int extent) {
  std::vector<TapRef> taps;
  taps.reserve(static_cast<size_t>(extent));
  int64_t tick = anchor < 0 ? -1 : (anchor / rate) * rate;
  for (int k = 0; k < extent; ++k) {
    if (tick < 0) {
      taps.push_back({TapRef::Src::Zero, producer, -1});
    } else {
      taps.push_back({TapRef::Src::Layer, producer, tick});
      tick -= rate;
    }
  }
  return taps;
}

inline std::vector<TapRef> frame_taps(int64_t anchor, int extent) {
  std::vector<TapRef> taps;
  for (int k = 0; k < extent; ++k) {
    int64_t t = anchor - k;
    taps.push_back(t >= 0 ? TapRef{TapRef::Src::Frame, TapRef::kFrameZero, t}
                          : TapRef{TapRef::Src::Zero, TapRef::kFrameZero, -1});
  }
  return taps;
}

inline std::vector<TapRef> head_taps(int64_t anchor, int extent) {
  std::vector<TapRef> taps;
  for (int k = 0; k < extent; ++k) {
    int64_t t = anchor - k;
    taps.push_back(t >= 0 ? TapRef{TapRef::Src::Head, TapRef::kHeadZero, t}
                          : TapRef{TapRef::Src::Zero, TapRef::kHeadZero, -1});
  }
  return taps;
}

}  // namespace detail

/// Builds the unrolled graph. Data-edge rules:
///  - a layer reading source s at tick t uses anchor = t - m, where m is the
///    number of subnetwork boundaries between s's stage and the reader's stage
///    (0 within a stage, so fresh same-step outputs are visible; every
///    boundary adds one frame of pipeline delay);
///  - the frame stream is always fresh (anchor = t);
///  - the feedback edge reads the head at anchor = t - 1;
///  - a reader with temporal extent e consumes the e newest producer ticks at
///    or before its anchor, zero-padded before the stream starts.
inline UnrolledGraph unroll(const ArchitectureSpec& arch, const PipelineConfig& config,
                            int64_t frames) {
  if (frames < 1) throw ValidationError("unroll: frame count must be >= 1");
  if (static_cast<int>(config.clock_rates.size()) != arch.layer_count() ||
      static_cast<int>(config.stage_of_layer.size()) != arch.layer_count()) {
    throw ValidationError("unroll: config does not match the architecture");
  }

  UnrolledGraph g;
  g.arch = &arch;
  g.config = config;
  g.frames = frames;
  const int n = arch.layer_count();
  g.ticks.resize(static_cast<size_t>(n));
  g.node_inputs.resize(static_cast<size_t>(n));

  for (int d = 0; d < n; ++d) {
    const int rate = config.clock_rates[static_cast<size_t>(d)];
    if (rate > frames) {
      g.warnings.push_back("layer " + arch.layers[static_cast<size_t>(d)].name +
                           " only ticks at t=0 (rate " + std::to_string(rate) + " > T=" +
                           std::to_string(frames) + ")");
    }
    for (int64_t t = 0; t < frames; t += rate) g.ticks[static_cast<size_t>(d)].push_back(t);
  }

  auto source_taps = [&](int reader_stage, int extent, int src, int64_t t) {
    if (src == ArchitectureSpec::kInput) return detail::frame_taps(t, extent);
    const int m = reader_stage - config.stage_of_layer[static_cast<size_t>(src)];
    return detail::layer_taps(src, config.clock_rates[static_cast<size_t>(src)], t - m, extent);
  };

  for (int d = 0; d < n; ++d) {
    const auto& l = arch.layers[static_cast<size_t>(d)];
    const int extent = l.temporal_kernel();
    const int stage = config.stage_of_layer[static_cast<size_t>(d)];
    auto& per_tick = g.node_inputs[static_cast<size_t>(d)];
    per_tick.reserve(g.ticks[static_cast<size_t>(d)].size());
    for (int64_t t : g.ticks[static_cast<size_t>(d)]) {
      NodeInputs in;
      for (int src : arch.layer_sources[static_cast<size_t>(d)]) {
        in.sources.push_back(source_taps(stage, extent, src, t));
      }
      if (arch.feedback.enabled && arch.feedback.consumer == d) {
        in.sources.push_back(detail::head_taps(t - 1, extent));
      }
      per_tick.push_back(std::move(in));
    }
  }

  const int head_stage = config.stage_of_head();
  const int head_extent = arch.head.kernel[0];
  g.head_inputs.reserve(static_cast<size_t>(frames));
  for (int64_t t = 0; t < frames; ++t) {
    NodeInputs in;
    for (int src : arch.head_sources) {
      in.sources.push_back(source_taps(head_stage, head_extent, src, t));
    }
    g.head_inputs.push_back(std::move(in));
  }

  // Cache depth: max(2, deepest read) past outputs per producer.
  g.state_slots.assign(static_cast<size_t>(n), 2);
  auto widen = [&](const std::vector<TapRef>& taps) {
    for (const auto& tap : taps) {
      if (tap.src != TapRef::Src::Layer) continue;
      auto& slot = g.state_slots[static_cast<size_t>(tap.layer)];
      slot = std::max(slot, static_cast<int>(taps.size()));
    }
  };
  for (const auto& per_tick : g.node_inputs) {
    for (const auto& node : per_tick) {
      for (const auto& s : node.sources) widen(s);
    }
  }
  for (const auto& node : g.head_inputs) {
    for (const auto& s : node.sources) widen(s);
  }
  return g;
}

}  // namespace pipevid
