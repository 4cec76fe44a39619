#pragma once

#include <queue>
#include <set>

#include "pipevid/analysis.hpp"
#include "pipevid/timeline.hpp"

namespace pipevid {

/// Deterministic discrete-event list scheduling of subnetwork instances on
/// identical workers. One task per (subnetwork, frame) holding that stage's
/// ticking layers (clock-gated costs), plus one head task per frame; a task
/// becomes ready when its producers finished; ready tasks go to idle workers
/// in (frame, stage) priority order. Within a worker's interval the stage's
/// layers are laid out in depth order so traces show layer granularity.
inline Timeline simulate_schedule(const ArchitectureSpec& arch, const PipelineConfig& config,
                                  const CostModel& cost, int workers, int64_t T) {
  if (T < 1) throw ValidationError("simulate_schedule: T must be >= 1");
  if (workers < 1) throw ValidationError("simulate_schedule: worker count must be >= 1");

  struct Task {
    int stage;  // num_stages = head pseudo-stage
    int64_t t;
    double cost = 0.0;
    std::vector<int> layers;  // ticking layers, depth order (empty for head)
  };
  const int S = config.num_stages;
  std::vector<Task> tasks;
  std::vector<std::vector<int64_t>> stage_tasks(static_cast<size_t>(S + 1));

  for (int64_t t = 0; t < T; ++t) {
    for (int s = 0; s < S; ++s) {
      Task task{s, t, 0.0, {}};
      for (int d = 0; d < arch.layer_count(); ++d) {
        if (config.stage_of_layer[static_cast<size_t>(d)] != s) continue;
        if (t % config.clock_rates[static_cast<size_t>(d)] != 0) continue;
        task.layers.push_back(d);
        task.cost += cost.layer_cost[static_cast<size_t>(d)];
      }
      if (task.layers.empty()) continue;
      stage_tasks[static_cast<size_t>(s)].push_back(static_cast<int64_t>(tasks.size()));
      tasks.push_back(std::move(task));
    }
    Task head{S, t, cost.head_cost, {}};
    stage_tasks[static_cast<size_t>(S)].push_back(static_cast<int64_t>(tasks.size()));
    tasks.push_back(std::move(head));
  }

  const int64_t n = static_cast<int64_t>(tasks.size());
  std::vector<std::vector<int64_t>> consumers(static_cast<size_t>(n));
  std::vector<int> pending(static_cast<size_t>(n), 0);
  auto add_dep = [&](int64_t from, int64_t to) {
    consumers[static_cast<size_t>(from)].push_back(to);
    ++pending[static_cast<size_t>(to)];
  };
  // Latest task of `stage` with frame <= anchor (binary search over ordered list).
  auto latest_leq = [&](int stage, int64_t anchor) -> int64_t {
    const auto& list = stage_tasks[static_cast<size_t>(stage)];
    int64_t best = -1;
    for (int64_t id : list) {
      if (tasks[static_cast<size_t>(id)].t <= anchor) best = id;
      else break;
    }
    return best;
  };
  const int feedback_stage =
      arch.feedback.enabled
          ? config.stage_of_layer[static_cast<size_t>(arch.feedback.consumer)]
          : -1;
  for (int64_t id = 0; id < n; ++id) {
    const Task& task = tasks[static_cast<size_t>(id)];
    // In-order execution within a stage (single logical device + state).
    int64_t prev = latest_leq(task.stage, task.t - 1);
    if (prev >= 0) add_dep(prev, id);
    if (task.stage == S) {
      int64_t src = latest_leq(S - 1, task.t);  // head reads the last stage fresh
      if (src >= 0) add_dep(src, id);
    } else if (task.stage > 0) {
      int64_t src = latest_leq(task.stage - 1, task.t - 1);  // boundary: one frame old
      if (src >= 0) add_dep(src, id);
    }
    if (task.stage == feedback_stage && task.t > 0) {
      int64_t head_prev = latest_leq(S, task.t - 1);
      if (head_prev >= 0) add_dep(head_prev, id);
    }
  }

  // Event-driven list schedule.
  std::set<std::tuple<int64_t, int, int64_t>> ready;  // (frame, stage, id)
  for (int64_t id = 0; id < n; ++id) {
    if (pending[static_cast<size_t>(id)] == 0) {
      ready.insert({tasks[static_cast<size_t>(id)].t, tasks[static_cast<size_t>(id)].stage, id});
    }
  }
  using Running = std::tuple<double, int, int64_t>;  // (end, worker, id)
  std::priority_queue<Running, std::vector<Running>, std::greater<>> running;
  std::set<int> idle;
  for (int w = 0; w < workers; ++w) idle.insert(w);
  double now = 0.0;
  Timeline tl;
  tl.workers = workers;
  std::vector<double> head_end(static_cast<size_t>(T), 0.0);
  int64_t remaining = n;

  while (remaining > 0) {
    while (!idle.empty() && !ready.empty()) {
      auto [t, stage, id] = *ready.begin();
      ready.erase(ready.begin());
      int w = *idle.begin();
      idle.erase(idle.begin());
      const Task& task = tasks[static_cast<size_t>(id)];
      const double start = now, end = now + task.cost;
      if (task.stage == S) {
        TimelineEvent e{w, -1, task.t, start, end, "head", "head"};
        tl.events.push_back(std::move(e));
        head_end[static_cast<size_t>(task.t)] = end;
      } else {
        double cursor = start;
        for (int d : task.layers) {
          const double c = cost.layer_cost[static_cast<size_t>(d)];
          TimelineEvent e{w,
                          d,
                          task.t,
                          cursor,
                          cursor + c,
                          arch.layers[static_cast<size_t>(d)].name,
                          arch.layers[static_cast<size_t>(d)].block};
          tl.events.push_back(std::move(e));
          cursor += c;
        }
      }
      running.push({end, w, id});
    }
    if (running.empty()) {
      throw std::logic_error("schedule deadlock: tasks remain but nothing is running");
    }
    auto [end, w, id] = running.top();
    running.pop();
    now = std::max(now, end);
    idle.insert(w);
    --remaining;
    for (int64_t c : consumers[static_cast<size_t>(id)]) {
      if (--pending[static_cast<size_t>(c)] == 0) {
        ready.insert({tasks[static_cast<size_t>(c)].t, tasks[static_cast<size_t>(c)].stage, c});
      }
    }
  }

  tl.makespan = 0.0;
  for (const auto& e : tl.events) tl.makespan = std::max(tl.makespan, e.end);
  // Steady state excludes the pipeline-fill transient (first `S` frames).
  const int64_t t0 = std::min<int64_t>(S, T - 2);
  if (T >= 2 && t0 >= 0 && head_end[static_cast<size_t>(T - 1)] > head_end[static_cast<size_t>(t0)]) {
    tl.steady_state_period = (head_end[static_cast<size_t>(T - 1)] - head_end[static_cast<size_t>(t0)]) /
                             static_cast<double>(T - 1 - t0);
  } else {
    tl.steady_state_period = tl.makespan / static_cast<double>(T);
  }
  tl.throughput = tl.steady_state_period > 0.0 ? 1.0 / tl.steady_state_period : 0.0;
  return tl;
}

/// Throughput factor of (config, workers) relative to the unclocked
/// sequential single-worker baseline, mirroring the measured-table convention.
inline double simulated_speedup(const ArchitectureSpec& arch, const PipelineConfig& config,
                                const CostModel& cost, int workers, int64_t T) {
  PipelineConfig base = sequential_config(arch);
  const double seq = simulate_schedule(arch, base, cost, 1, T).steady_state_period;
  const double par = simulate_schedule(arch, config, cost, workers, T).steady_state_period;
  if (par <= 0.0) throw ValidationError("simulated period is zero");
  return seq / par;
}

}  // namespace pipevid
