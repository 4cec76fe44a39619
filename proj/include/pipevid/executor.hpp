#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdlib>
#include <mutex>
#include <thread>

#include "pipevid/analysis.hpp"
#include "pipevid/timeline.hpp"

namespace pipevid {

struct ExecutionResult {
  std::vector<Tensor> outputs;    // head output per frame
  std::vector<bool> warmup_mask;  // t < output information latency
  Timeline timeline;
};

inline int worker_pool_cap() {
  if (const char* env = std::getenv("PIPEVID_THREADS")) {
    int cap = std::atoi(env);
    if (cap >= 1) return cap;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

namespace detail {

/// Shared evaluation machinery over an unrolled graph: node table, gather,
/// and per-node compute. Outputs depend only on the graph and parameters,
/// never on scheduling order.
class GraphEvaluator {
 public:
  GraphEvaluator(const UnrolledGraph& g, const ParamBundle& params,
                 const std::vector<Tensor>& frames)
      : g_(g), arch_(*g.arch), params_(params), frames_(frames) {
    if (static_cast<int64_t>(frames.size()) != g.frames) {
      throw std::invalid_argument("frame count does not match the unrolled graph");
    }
    for (const auto& f : frames) {
      if (f.rank() != 3 || f.dim(0) != arch_.input_shape.height ||
          f.dim(1) != arch_.input_shape.width || f.dim(2) != arch_.input_shape.channels) {
        throw std::invalid_argument("frame shape " + f.shape_str() +
                                    " does not match the architecture input");
      }
    }
    const int n = arch_.layer_count();
    layer_out_.resize(static_cast<size_t>(n));
    for (int d = 0; d < n; ++d) {
      layer_out_[static_cast<size_t>(d)].resize(g.ticks[static_cast<size_t>(d)].size());
    }
    head_out_.resize(static_cast<size_t>(g.frames));

    // Node ids: chain nodes first (layer-major), then head nodes.
    for (int d = 0; d < n; ++d) {
      for (size_t k = 0; k < g.ticks[static_cast<size_t>(d)].size(); ++k) {
        nodes_.push_back({d, g.ticks[static_cast<size_t>(d)][k]});
      }
    }
    for (int64_t t = 0; t < g.frames; ++t) nodes_.push_back({kHead, t});
  }

  struct Node {
    int layer;  // kHead for head instances
    int64_t t;
  };
  static constexpr int kHead = -1;

  const std::vector<Node>& nodes() const { return nodes_; }

  const NodeInputs& inputs_of(const Node& nd) const {
    return nd.layer == kHead
               ? g_.head_inputs[static_cast<size_t>(nd.t)]
               : g_.node_inputs[static_cast<size_t>(nd.layer)]
                              [static_cast<size_t>(g_.tick_index(nd.layer, nd.t))];
  }

  /// Producer node ids a node waits for (deduplicated).
  std::vector<int64_t> producer_ids(const Node& nd) const {
    std::vector<int64_t> deps;
    for (const auto& taps : inputs_of(nd).sources) {
      for (const auto& tap : taps) {
        if (tap.src == TapRef::Src::Layer) {
          deps.push_back(node_id(tap.layer, tap.t));
        } else if (tap.src == TapRef::Src::Head) {
          deps.push_back(node_id(kHead, tap.t));
        }
      }
    }
    std::sort(deps.begin(), deps.end());
    deps.erase(std::unique(deps.begin(), deps.end()), deps.end());
    return deps;
  }

  int64_t node_id(int layer, int64_t t) const {
    if (layer == kHead) return chain_count() + t;
    int64_t base = 0;
    for (int d = 0; d < layer; ++d) base += static_cast<int64_t>(g_.ticks[static_cast<size_t>(d)].size());
    return base + g_.tick_index(layer, t);
  }

  int64_t chain_count() const {
    return static_cast<int64_t>(nodes_.size()) - g_.frames;
  }

  void compute(const Node& nd) {
    const NodeInputs& in = inputs_of(nd);
    if (nd.layer == kHead) {
      std::vector<std::vector<Tensor>> taps;
      taps.reserve(in.sources.size());
      for (const auto& src : in.sources) taps.push_back(fetch_taps(src));
      head_out_[static_cast<size_t>(nd.t)] = head_forward(arch_, taps, params_.head);
      return;
    }
    const auto& l = arch_.layers[static_cast<size_t>(nd.layer)];
    std::vector<Tensor> taps;
    const size_t extent = in.sources[0].size();
    for (size_t k = 0; k < extent; ++k) {
      std::vector<Tensor> parts;
      for (const auto& src : in.sources) parts.push_back(fetch(src[k]));
      taps.push_back(parts.size() == 1 ? std::move(parts[0]) : concat_channels(parts));
    }
    layer_out_[static_cast<size_t>(nd.layer)]
              [static_cast<size_t>(g_.tick_index(nd.layer, nd.t))] =
        apply_layer(l, taps, params_.layers[static_cast<size_t>(nd.layer)]);
  }

  std::vector<Tensor> take_head_outputs() { return std::move(head_out_); }

  const ArchitectureSpec& arch() const { return arch_; }
  const UnrolledGraph& graph() const { return g_; }

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
    // Zero tap: the recorded producer determines the shape.
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

  std::vector<Tensor> fetch_taps(const std::vector<TapRef>& taps) const {
    std::vector<Tensor> out;
    out.reserve(taps.size());
    for (const auto& tap : taps) out.push_back(fetch(tap));
    return out;
  }

  const UnrolledGraph& g_;
  const ArchitectureSpec& arch_;
  const ParamBundle& params_;
  const std::vector<Tensor>& frames_;
  std::vector<std::vector<Tensor>> layer_out_;
  std::vector<Tensor> head_out_;
  std::vector<Node> nodes_;
};

inline std::vector<bool> warmup_mask_of(const UnrolledGraph& g) {
  LatencyReport rep = information_latency(g);
  std::vector<bool> mask(static_cast<size_t>(g.frames), false);
  for (int64_t t = 0; t < g.frames; ++t) mask[static_cast<size_t>(t)] = t < rep.output_info_latency;
  return mask;
}

}  // namespace detail

/// Single-threaded baseline: the configured clocks with sequential wiring
/// (one subnetwork). Matches the reference interpreter for that wiring.
inline ExecutionResult run_sequential(const ArchitectureSpec& arch, const PipelineConfig& config,
                                      const ParamBundle& params,
                                      const std::vector<Tensor>& frames) {
  PipelineConfig seq = config;
  seq.stage_of_unit.assign(arch.units.size(), 0);
  seq.stage_of_layer.assign(static_cast<size_t>(arch.layer_count()), 0);
  seq.num_stages = 1;
  UnrolledGraph g = unroll(arch, seq, static_cast<int64_t>(frames.size()));
  detail::GraphEvaluator ev(g, params, frames);

  ExecutionResult res;
  res.timeline.workers = 1;
  const auto t0 = std::chrono::steady_clock::now();
  auto now_us = [&] {
    return std::chrono::duration<double, std::micro>(std::chrono::steady_clock::now() - t0)
        .count();
  };
  for (const auto& nd : ev.nodes()) {
    TimelineEvent e;
    e.worker = 0;
    e.layer = nd.layer;
    e.t = nd.t;
    e.start = now_us();
    ev.compute(nd);
    e.end = now_us();
    if (nd.layer >= 0) {
      e.name = arch.layers[static_cast<size_t>(nd.layer)].name;
      e.category = arch.layers[static_cast<size_t>(nd.layer)].block;
    } else {
      e.name = "head";
    }
    res.timeline.events.push_back(std::move(e));
  }
  res.timeline.makespan = now_us();
  res.outputs = ev.take_head_outputs();
  res.warmup_mask = detail::warmup_mask_of(g);
  return res;
}

/// Worker-pool execution of the configured unrolled graph. Outputs are
/// bitwise independent of the worker count and of scheduling order: every
/// node computes a pure function of its producers, which the graph fixes.
inline ExecutionResult run_pipelined(const ArchitectureSpec& arch, const PipelineConfig& config,
                                     const ParamBundle& params, const std::vector<Tensor>& frames,
                                     int workers) {
  if (workers < 1) throw std::invalid_argument("worker count must be >= 1");
  workers = std::min(workers, worker_pool_cap());
  UnrolledGraph g = unroll(arch, config, static_cast<int64_t>(frames.size()));
  detail::GraphEvaluator ev(g, params, frames);
  const auto& nodes = ev.nodes();
  const int64_t total = static_cast<int64_t>(nodes.size());

  std::vector<std::atomic<int>> pending(static_cast<size_t>(total));
  std::vector<std::vector<int64_t>> consumers(static_cast<size_t>(total));
  std::vector<int64_t> ready;
  for (int64_t id = 0; id < total; ++id) {
    auto deps = ev.producer_ids(nodes[static_cast<size_t>(id)]);
    pending[static_cast<size_t>(id)].store(static_cast<int>(deps.size()),
                                           std::memory_order_relaxed);
    for (int64_t dep : deps) consumers[static_cast<size_t>(dep)].push_back(id);
    if (deps.empty()) ready.push_back(id);
  }

  std::mutex mu;
  std::condition_variable cv;
  int64_t done = 0;
  std::exception_ptr failure;
  Timeline timeline;
  timeline.workers = workers;
  const auto t0 = std::chrono::steady_clock::now();
  auto now_us = [&] {
    return std::chrono::duration<double, std::micro>(std::chrono::steady_clock::now() - t0)
        .count();
  };

  auto work = [&](int wid) {
    for (;;) {
      int64_t id;
      {
        std::unique_lock<std::mutex> lock(mu);
        cv.wait(lock, [&] { return !ready.empty() || done == total || failure; });
        if (failure || done == total) return;
        id = ready.back();
        ready.pop_back();
      }
      TimelineEvent e;
      e.worker = wid;
      e.layer = nodes[static_cast<size_t>(id)].layer;
      e.t = nodes[static_cast<size_t>(id)].t;
      e.start = now_us();
      try {
        ev.compute(nodes[static_cast<size_t>(id)]);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!failure) failure = std::current_exception();
        cv.notify_all();
        return;
      }
      e.end = now_us();
      std::lock_guard<std::mutex> lock(mu);
      if (e.layer >= 0) {
        e.name = arch.layers[static_cast<size_t>(e.layer)].name;
        e.category = arch.layers[static_cast<size_t>(e.layer)].block;
      } else {
        e.name = "head";
      }
      timeline.events.push_back(std::move(e));
      for (int64_t c : consumers[static_cast<size_t>(id)]) {
        if (pending[static_cast<size_t>(c)].fetch_sub(1, std::memory_order_acq_rel) == 1) {
          ready.push_back(c);
        }
      }
      ++done;
      cv.notify_all();
    }
  };

  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(workers));
  for (int w = 0; w < workers; ++w) pool.emplace_back(work, w);
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);

  ExecutionResult res;
  res.outputs = ev.take_head_outputs();
  res.warmup_mask = detail::warmup_mask_of(g);
  res.timeline = std::move(timeline);
  res.timeline.makespan = now_us();
  return res;
}

}  // namespace pipevid
