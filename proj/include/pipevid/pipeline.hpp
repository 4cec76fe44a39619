#pragma once

#include <numeric>

#include "pipevid/arch.hpp"

namespace pipevid {

enum class Wiring { Sequential, SemiParallel, Parallel };

inline const char* wiring_name(Wiring w) {
  switch (w) {
    case Wiring::Sequential: return "sequential";
    case Wiring::SemiParallel: return "semi-parallel";
    case Wiring::Parallel: return "parallel";
  }
  return "?";
}

/// Subnetwork partition + clock assignment + prediction latency for one run.
/// Stages are contiguous runs of partition units; a unit is never split.
struct PipelineConfig {
  std::vector<int> stage_of_unit;   // per unit
  std::vector<int> stage_of_layer;  // per layer, derived
  std::vector<int> clock_rates;     // per layer
  int num_stages = 1;
  int prediction_latency = 0;
  bool temporalized = false;
  bool feedback = false;

  Wiring wiring() const {
    if (num_stages <= 1) return Wiring::Sequential;
    if (num_stages == static_cast<int>(stage_of_unit.size())) return Wiring::Parallel;
    return Wiring::SemiParallel;
  }
  int stage_of_head() const { return num_stages - 1; }
  bool is_stage_entry(int layer) const {
    return layer == 0 ||
           stage_of_layer[static_cast<size_t>(layer)] != stage_of_layer[static_cast<size_t>(layer - 1)];
  }
};

namespace detail {

inline PipelineConfig config_from_unit_stages(const ArchitectureSpec& arch,
                                              std::vector<int> stage_of_unit) {
  PipelineConfig c;
  c.num_stages = stage_of_unit.empty() ? 1 : stage_of_unit.back() + 1;
  c.stage_of_unit = std::move(stage_of_unit);
  c.stage_of_layer.resize(static_cast<size_t>(arch.layer_count()));
  for (int i = 0; i < arch.layer_count(); ++i) {
    c.stage_of_layer[static_cast<size_t>(i)] =
        c.stage_of_unit[static_cast<size_t>(arch.unit_index_of[static_cast<size_t>(i)])];
  }
  c.clock_rates.assign(static_cast<size_t>(arch.layer_count()), 1);
  c.feedback = arch.feedback.enabled;
  for (const auto& l : arch.layers) {
    if (l.kind == LayerKind::Conv && l.kernel[0] > 1) c.temporalized = true;
  }
  return c;
}

}  // namespace detail

inline PipelineConfig sequential_config(const ArchitectureSpec& arch) {
  return detail::config_from_unit_stages(arch, std::vector<int>(arch.units.size(), 0));
}

/// Balanced contiguous split of the unit chain into `num_subnetworks` stages.
inline PipelineConfig partition_by_count(const ArchitectureSpec& arch, int num_subnetworks) {
  const int u = static_cast<int>(arch.units.size());
  if (num_subnetworks < 1 || num_subnetworks > u) {
    throw ValidationError("requested " + std::to_string(num_subnetworks) +
                          " subnetworks but the architecture has " + std::to_string(u) +
                          " partitionable units");
  }
  std::vector<int> stages(static_cast<size_t>(u));
  const int base = u / num_subnetworks, rem = u % num_subnetworks;
  int unit = 0;
  for (int s = 0; s < num_subnetworks; ++s) {
    int take = base + (s < rem ? 1 : 0);
    for (int k = 0; k < take; ++k) stages[static_cast<size_t>(unit++)] = s;
  }
  return detail::config_from_unit_stages(arch, std::move(stages));
}

/// Groups of k contiguous units per subnetwork ("blocks of k layers").
inline PipelineConfig partition_by_size(const ArchitectureSpec& arch, int k) {
  const int u = static_cast<int>(arch.units.size());
  if (k < 1) throw ValidationError("subnetwork size must be >= 1");
  std::vector<int> stages(static_cast<size_t>(u));
  for (int i = 0; i < u; ++i) stages[static_cast<size_t>(i)] = i / k;
  return detail::config_from_unit_stages(arch, std::move(stages));
}

/// Explicit stage starts by unit index; must begin at 0 and strictly increase.
inline PipelineConfig partition_explicit(const ArchitectureSpec& arch,
                                         const std::vector<int>& stage_starts) {
  const int u = static_cast<int>(arch.units.size());
  if (stage_starts.empty() || stage_starts.front() != 0) {
    throw ValidationError("explicit partition must start a stage at unit 0");
  }
  for (size_t i = 1; i < stage_starts.size(); ++i) {
    if (stage_starts[i] <= stage_starts[i - 1]) {
      throw ValidationError("explicit partition boundaries must be strictly increasing");
    }
  }
  if (stage_starts.back() >= u) throw ValidationError("partition boundary past the last unit");
  std::vector<int> stages(static_cast<size_t>(u));
  int s = -1;
  size_t next = 0;
  for (int i = 0; i < u; ++i) {
    if (next < stage_starts.size() && stage_starts[next] == i) {
      ++s;
      ++next;
    }
    stages[static_cast<size_t>(i)] = s;
  }
  return detail::config_from_unit_stages(arch, std::move(stages));
}

inline PipelineConfig fully_parallel_config(const ArchitectureSpec& arch) {
  return partition_by_count(arch, static_cast<int>(arch.units.size()));
}

enum class ClockPolicy { AllOnes, HalveOnDownsample };

/// Per-layer clock rates. The halve-on-downsample policy doubles the rate at
/// every pooling layer that halves spatial resolution (stride_h or stride_w
/// > 1); the pool itself carries the new rate. On the Par-DenseNet fixture
/// this yields per-block rates (2, 4, 8, 16).
inline std::vector<int> clock_rates_for(const ArchitectureSpec& arch, ClockPolicy policy) {
  std::vector<int> rates(static_cast<size_t>(arch.layer_count()), 1);
  if (policy == ClockPolicy::AllOnes) return rates;
  // Rates follow the chain structure: each layer inherits its primary source's
  // rate and pools double it on spatial downsampling.
  for (int i = 0; i < arch.layer_count(); ++i) {
    const auto& l = arch.layers[static_cast<size_t>(i)];
    int src = arch.layer_sources[static_cast<size_t>(i)][0];
    int r = src == ArchitectureSpec::kInput ? 1 : rates[static_cast<size_t>(src)];
    const bool pool = l.kind == LayerKind::MaxPool || l.kind == LayerKind::AvgPool;
    if (pool && (l.stride[1] > 1 || l.stride[2] > 1)) r *= 2;
    rates[static_cast<size_t>(i)] = r;
  }
  return rates;
}

inline PipelineConfig& set_clock_rates(const ArchitectureSpec& arch, PipelineConfig& config,
                                       const std::vector<int>& rates) {
  if (static_cast<int>(rates.size()) != arch.layer_count()) {
    throw ValidationError("explicit clock-rate list must have one entry per layer");
  }
  for (int r : rates) {
    if (r < 1) throw ValidationError("clock rates must be positive");
  }
  config.clock_rates = rates;
  return config;
}

inline PipelineConfig& set_clock_policy(const ArchitectureSpec& arch, PipelineConfig& config,
                                        ClockPolicy policy) {
  return set_clock_rates(arch, config, clock_rates_for(arch, policy));
}

/// Spec-named op: clock assignment on a fresh sequential config.
inline PipelineConfig assign_clock_rates(const ArchitectureSpec& arch, ClockPolicy policy) {
  PipelineConfig c = sequential_config(arch);
  return set_clock_policy(arch, c, policy);
}

inline PipelineConfig assign_clock_rates(const ArchitectureSpec& arch,
                                         const std::vector<int>& rates) {
  PipelineConfig c = sequential_config(arch);
  return set_clock_rates(arch, c, rates);
}

inline PipelineConfig& set_prediction_latency(PipelineConfig& config, int frames) {
  if (frames < 0) throw ValidationError("prediction latency must be >= 0");
  config.prediction_latency = frames;
  return config;
}

}  // namespace pipevid
