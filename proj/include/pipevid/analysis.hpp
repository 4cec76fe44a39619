#pragma once

#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "pipevid/params.hpp"
#include "pipevid/unroll.hpp"

namespace pipevid {

// ---------------------------------------------------------------------------
// Information latency and temporal receptive fields.
// ---------------------------------------------------------------------------

/// Backward reachability over the unrolled graph, memoized per node. Returns
/// the newest input frame index visible from (layer, t), or -1 when no frame
/// is reachable (pure warmup state).
class GraphVisibility {
 public:
  explicit GraphVisibility(const UnrolledGraph& g) : g_(g) {
    newest_.resize(g.ticks.size());
    for (size_t d = 0; d < g.ticks.size(); ++d) {
      newest_[d].assign(g.ticks[d].size(), kUnknown);
    }
    head_newest_.assign(static_cast<size_t>(g.frames), kUnknown);
  }

  int64_t newest_frame(int layer, int64_t t) {
    if (!g_.node_exists(layer, t)) {
      throw ValidationError("no node at layer " + std::to_string(layer) + ", t=" +
                            std::to_string(t));
    }
    return newest_node(layer, g_.tick_index(layer, t));
  }

  int64_t newest_frame_head(int64_t t) {
    if (t < 0 || t >= g_.frames) throw ValidationError("head time out of range");
    int64_t& memo = head_newest_[static_cast<size_t>(t)];
    if (memo == kUnknown) {
      memo = newest_of(g_.head_inputs[static_cast<size_t>(t)]);
    }
    return memo;
  }

  /// Exact set of input frames reachable backward from (layer, t).
  std::set<int64_t> visible_frames(int layer, int64_t t) {
    if (!g_.node_exists(layer, t)) {
      throw ValidationError("no node at layer " + std::to_string(layer) + ", t=" +
                            std::to_string(t));
    }
    std::set<int64_t> out;
    std::set<std::pair<int, int64_t>> seen;  // (layer or kHeadMark, t)
    collect(layer, t, &out, &seen);
    return out;
  }

 private:
  static constexpr int64_t kUnknown = -2;
  static constexpr int kHeadMark = -7;

  int64_t newest_node(int layer, int64_t tick_idx) {
    int64_t& memo = newest_[static_cast<size_t>(layer)][static_cast<size_t>(tick_idx)];
    if (memo == kUnknown) {
      memo = -3;  // in-progress guard; graph is a DAG so this never recurs
      memo = newest_of(g_.node_inputs[static_cast<size_t>(layer)][static_cast<size_t>(tick_idx)]);
    }
    return memo;
  }

  int64_t newest_of(const NodeInputs& in) {
    int64_t best = -1;
    for (const auto& taps : in.sources) {
      for (const auto& tap : taps) {
        switch (tap.src) {
          case TapRef::Src::Frame: best = std::max(best, tap.t); break;
          case TapRef::Src::Layer:
            best = std::max(best, newest_node(tap.layer, g_.tick_index(tap.layer, tap.t)));
            break;
          case TapRef::Src::Head: best = std::max(best, newest_frame_head(tap.t)); break;
          case TapRef::Src::Zero: break;
        }
      }
    }
    return best;
  }

  void collect(int layer, int64_t t, std::set<int64_t>* out,
               std::set<std::pair<int, int64_t>>* seen) {
    if (!seen->insert({layer, t}).second) return;
    const NodeInputs& in =
        layer == kHeadMark ? g_.head_inputs[static_cast<size_t>(t)]
                           : g_.node_inputs[static_cast<size_t>(layer)]
                                          [static_cast<size_t>(g_.tick_index(layer, t))];
    for (const auto& taps : in.sources) {
      for (const auto& tap : taps) {
        switch (tap.src) {
          case TapRef::Src::Frame: out->insert(tap.t); break;
          case TapRef::Src::Layer: collect(tap.layer, tap.t, out, seen); break;
          case TapRef::Src::Head: collect(kHeadMark, tap.t, out, seen); break;
          case TapRef::Src::Zero: break;
        }
      }
    }
  }

  const UnrolledGraph& g_;
  std::vector<std::vector<int64_t>> newest_;
  std::vector<int64_t> head_newest_;
};

struct ReceptiveField {
  int layer = 0;
  int64_t time = 0;
  std::set<int64_t> visible_frames;
};

inline ReceptiveField temporal_receptive_field(const UnrolledGraph& g, int layer, int64_t t) {
  GraphVisibility vis(g);
  return {layer, t, vis.visible_frames(layer, t)};
}

struct LatencyReport {
  std::vector<int64_t> info_latency;  // per layer, steady state
  int64_t output_info_latency = 0;    // at the head
  int prediction_latency = 0;
  double computational_latency = 0.0;  // cost units along the sequential path
  double steady_state_period = 0.0;    // max clock-amortized stage cost
};

struct CostModel {
  std::vector<double> layer_cost;  // multiply-accumulates per execution
  double head_cost = 0.0;

  double total_per_frame(const PipelineConfig& config) const {
    double s = head_cost;
    for (size_t i = 0; i < layer_cost.size(); ++i) {
      s += layer_cost[i] / static_cast<double>(config.clock_rates[i]);
    }
    return s;
  }
};

/// Multiply-accumulate counts from propagated shapes; pooling, concat,
/// nonlinearity and upsampling cost 0 (overridable by layer name).
inline CostModel compute_cost_model(const ArchitectureSpec& arch,
                                    const std::map<std::string, double>& overrides = {}) {
  CostModel m;
  m.layer_cost.resize(static_cast<size_t>(arch.layer_count()), 0.0);
  for (int i = 0; i < arch.layer_count(); ++i) {
    const auto& l = arch.layers[static_cast<size_t>(i)];
    const auto& sh = arch.shapes[static_cast<size_t>(i)];
    double c = 0.0;
    if (l.kind == LayerKind::Conv) {
      c = static_cast<double>(l.kernel[0]) * l.kernel[1] * l.kernel[2] *
          static_cast<double>(sh.in_c) * static_cast<double>(sh.c) *
          static_cast<double>(sh.h) * static_cast<double>(sh.w);
    } else if (l.kind == LayerKind::Dense) {
      c = static_cast<double>(l.kernel[0]) * static_cast<double>(sh.in_h * sh.in_w * sh.in_c) *
          static_cast<double>(sh.c);
    }
    auto it = overrides.find(l.name);
    m.layer_cost[static_cast<size_t>(i)] = it != overrides.end() ? it->second : c;
  }
  const auto& hs = arch.head_shape;
  if (arch.head.kind == HeadSpec::Kind::Dense) {
    m.head_cost = static_cast<double>(arch.head.kernel[0]) * arch.head.kernel[1] *
                  arch.head.kernel[2] * static_cast<double>(hs.in_c) *
                  static_cast<double>(hs.c) * static_cast<double>(hs.h) *
                  static_cast<double>(hs.w);
  } else {
    m.head_cost = static_cast<double>(hs.in_c) * static_cast<double>(hs.c);
  }
  return m;
}

/// Steady per-layer information latencies: minimum total frame offset from the
/// input over all paths, evaluated at clock-aligned times past warmup. The
/// head value is the model's information latency.
inline LatencyReport information_latency(const UnrolledGraph& g, const CostModel* cost = nullptr) {
  const ArchitectureSpec& arch = *g.arch;
  GraphVisibility vis(g);
  const int n = arch.layer_count();
  int64_t lcm = 1;
  for (int r : g.config.clock_rates) lcm = std::lcm<int64_t>(lcm, r);

  LatencyReport rep;
  rep.prediction_latency = g.config.prediction_latency;
  rep.info_latency.assign(static_cast<size_t>(n), 0);
  auto steady = [&](auto&& value_at, int64_t step) -> int64_t {
    // Scan aligned times; steady once two consecutive aligned values agree.
    // A node that never sees real input inside this unroll reports the
    // horizon (g.frames): the signal has not crossed the pipeline yet.
    int64_t prev = -100, prev_t = -1;
    for (int64_t t = 0; t < g.frames; t += step) {
      int64_t v = value_at(t);
      if (v >= 0 && prev_t >= 0 && v == prev) return v;
      prev = v;
      prev_t = t;
    }
    return prev < 0 ? g.frames : prev;  // best available estimate on a short unroll
  };
  for (int d = 0; d < n; ++d) {
    const int64_t rate = g.config.clock_rates[static_cast<size_t>(d)];
    const int64_t step = std::lcm<int64_t>(lcm, rate);
    rep.info_latency[static_cast<size_t>(d)] = steady(
        [&](int64_t t) {
          int64_t newest = vis.newest_frame(d, t);
          return newest < 0 ? int64_t{-1} : t - newest;
        },
        step);
  }
  rep.output_info_latency = steady(
      [&](int64_t t) {
        int64_t newest = vis.newest_frame_head(t);
        return newest < 0 ? int64_t{-1} : t - newest;
      },
      lcm);

  CostModel local;
  if (!cost) {
    local = compute_cost_model(arch);
    cost = &local;
  }
  rep.computational_latency = cost->head_cost;
  for (double c : cost->layer_cost) rep.computational_latency += c;
  std::vector<double> stage_cost(static_cast<size_t>(g.config.num_stages), 0.0);
  for (int d = 0; d < n; ++d) {
    stage_cost[static_cast<size_t>(g.config.stage_of_layer[static_cast<size_t>(d)])] +=
        cost->layer_cost[static_cast<size_t>(d)] /
        static_cast<double>(g.config.clock_rates[static_cast<size_t>(d)]);
  }
  stage_cost[static_cast<size_t>(g.config.num_stages - 1)] += cost->head_cost;
  rep.steady_state_period = *std::max_element(stage_cost.begin(), stage_cost.end());
  return rep;
}

/// Convenience: builds a long-enough unroll for steady-state values and
/// rejects layers the input signal can never reach.
inline LatencyReport information_latency(const ArchitectureSpec& arch,
                                         const PipelineConfig& config) {
  int64_t lcm = 1;
  for (int r : config.clock_rates) lcm = std::lcm<int64_t>(lcm, r);
  int64_t extent_span = 0;
  for (const auto& l : arch.layers) extent_span += l.temporal_kernel();
  const int64_t frames = lcm * (4 + 2 * (config.num_stages + extent_span) / std::max<int64_t>(lcm, 1));
  LatencyReport rep = information_latency(unroll(arch, config, frames));
  for (int64_t v : rep.info_latency) {
    if (v >= frames) throw ValidationError("layer is disconnected from the input stream");
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Execution counting and theoretical speedups.
// ---------------------------------------------------------------------------

struct ExecutionCounts {
  std::vector<int64_t> per_layer;
  int64_t layer_total = 0;
  std::map<std::string, int64_t> per_unit;   // every partition unit
  std::map<std::string, int64_t> per_block;  // core units grouped by block
  int64_t unit_total = 0;                    // core units only (miniblocks etc.)
};

inline ExecutionCounts execution_counts(const ArchitectureSpec& arch,
                                        const PipelineConfig& config, int64_t T) {
  ExecutionCounts ec;
  ec.per_layer.assign(static_cast<size_t>(arch.layer_count()), 0);
  auto ticks = [&](int rate) { return T <= 0 ? int64_t{0} : (T + rate - 1) / rate; };
  for (int d = 0; d < arch.layer_count(); ++d) {
    ec.per_layer[static_cast<size_t>(d)] = ticks(config.clock_rates[static_cast<size_t>(d)]);
    ec.layer_total += ec.per_layer[static_cast<size_t>(d)];
  }
  // A unit executes when its entry layer ticks.
  std::set<std::string> seen;
  for (int d = 0; d < arch.layer_count(); ++d) {
    const std::string& u = arch.unit_of[static_cast<size_t>(d)];
    if (!seen.insert(u).second) continue;
    const int64_t count = ticks(config.clock_rates[static_cast<size_t>(d)]);
    ec.per_unit[u] = count;
    const int ui = arch.unit_index_of[static_cast<size_t>(d)];
    if (arch.unit_is_core[static_cast<size_t>(ui)]) {
      ec.unit_total += count;
      ec.per_block[arch.layers[static_cast<size_t>(d)].block] += count;
    }
  }
  return ec;
}

/// Unclocked-over-clocked execution ratio at uniform per-unit cost; the
/// cost-weighted variant uses the supplied CostModel.
inline double theoretical_speedup(const ArchitectureSpec& arch, const PipelineConfig& config,
                                  int64_t T, const CostModel* cost = nullptr) {
  PipelineConfig unclocked = config;
  unclocked.clock_rates.assign(static_cast<size_t>(arch.layer_count()), 1);
  if (!cost) {
    const auto clocked = execution_counts(arch, config, T);
    const auto base = execution_counts(arch, unclocked, T);
    if (clocked.unit_total <= 0) throw ValidationError("clocked execution count is zero");
    return static_cast<double>(base.unit_total) / static_cast<double>(clocked.unit_total);
  }
  auto weighted = [&](const PipelineConfig& c) {
    double s = 0.0;
    for (int d = 0; d < arch.layer_count(); ++d) {
      const int rate = c.clock_rates[static_cast<size_t>(d)];
      s += cost->layer_cost[static_cast<size_t>(d)] *
           static_cast<double>(T <= 0 ? 0 : (T + rate - 1) / rate);
    }
    return s;
  };
  const double den = weighted(config);
  if (den <= 0.0) throw ValidationError("clocked execution cost is zero");
  return weighted(unclocked) / den;
}

// ---------------------------------------------------------------------------
// Parameter counting.
// ---------------------------------------------------------------------------

enum class CountConvention { WeightsOnly, PlusBias, PlusBatchNorm };

struct LayerParamCount {
  std::string name;
  int64_t weights = 0;
  int64_t bias = 0;
  int64_t batchnorm = 0;  // scale + offset per conv output channel
};

inline std::vector<LayerParamCount> parameter_table(const ArchitectureSpec& arch) {
  ParamBundle shapes = zero_like(arch);
  std::vector<LayerParamCount> rows;
  for (int i = 0; i < arch.layer_count(); ++i) {
    const auto& l = arch.layers[static_cast<size_t>(i)];
    const auto& lp = shapes.layers[static_cast<size_t>(i)];
    LayerParamCount row;
    row.name = l.name;
    row.weights = lp.w.size();
    row.bias = lp.b.size();
    row.batchnorm = l.kind == LayerKind::Conv ? 2 * l.out_channels : 0;
    rows.push_back(row);
  }
  LayerParamCount head;
  head.name = "head";
  head.weights = shapes.head.w.size();
  head.bias = shapes.head.b.size();
  head.batchnorm = 0;
  rows.push_back(head);
  return rows;
}

inline int64_t parameter_count(const ArchitectureSpec& arch,
                               CountConvention convention = CountConvention::WeightsOnly) {
  int64_t total = 0;
  for (const auto& row : parameter_table(arch)) {
    total += row.weights;
    if (convention != CountConvention::WeightsOnly) total += row.bias;
    if (convention == CountConvention::PlusBatchNorm) total += row.batchnorm;
  }
  return total;
}

}  // namespace pipevid
