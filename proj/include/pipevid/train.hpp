#pragma once

#include "pipevid/autodiff.hpp"
#include "pipevid/optim.hpp"
#include "pipevid/synthetic.hpp"

namespace pipevid {

constexpr double kKeypointPositiveWeight = 10.0;  // loss weight on keypoint pixels

struct LossCurvePoint {
  int step = 0;
  double train_loss = 0.0;
  double task_component = 0.0;
  double distill_component = 0.0;
  double eval_loss = 0.0;  // filled on eval steps, else NaN
};

struct TrainResult {
  ParamBundle params;
  std::vector<LossCurvePoint> curve;
  double final_eval = 0.0;
};

namespace detail {

/// Mean per-frame task loss between output[t] and target[t - prediction
/// latency], over frames past warmup; adjoints accumulate into dhead.
inline double sequence_task_loss(const SyntheticTask& task, const std::vector<Tensor>& outputs,
                                 const SyntheticSequence& seq, int pred_latency, int64_t warmup,
                                 std::vector<Tensor>* dhead) {
  const int64_t T = static_cast<int64_t>(outputs.size());
  const int64_t t0 = std::max<int64_t>(warmup, pred_latency);
  if (t0 >= T) {
    throw ValidationError("sequence too short: needs more frames than information latency "
                          "plus prediction latency");
  }
  const double count = static_cast<double>(T - t0);
  double loss = 0.0;
  for (int64_t t = t0; t < T; ++t) {
    if (task.kind == SyntheticTask::Kind::MovingDot) {
      Tensor dl(outputs[static_cast<size_t>(t)].shape());
      loss += weighted_sigmoid_xent(outputs[static_cast<size_t>(t)],
                                    seq.heatmaps[static_cast<size_t>(t - pred_latency)],
                                    kKeypointPositiveWeight, dhead ? &dl : nullptr) /
              count;
      if (dhead) {
        dl *= 1.0 / count;
        (*dhead)[static_cast<size_t>(t)] += dl;
      }
    } else {
      Tensor dl(outputs[static_cast<size_t>(t)].shape());
      loss += softmax_xent(outputs[static_cast<size_t>(t)], seq.label, dhead ? &dl : nullptr) /
              count;
      if (dhead) {
        dl *= 1.0 / count;
        (*dhead)[static_cast<size_t>(t)] += dl;
      }
    }
  }
  return loss;
}

inline std::vector<Tensor> empty_like(const std::vector<Tensor>& ts) {
  std::vector<Tensor> out;
  out.reserve(ts.size());
  for (const auto& t : ts) out.emplace_back(t.shape());
  return out;
}

}  // namespace detail

/// Last layer of each of the deepest (up to) three subnetworks; the toy-scale
/// default comparison points for sequential-to-parallel distillation.
inline std::vector<int> default_distill_layers(const ArchitectureSpec& arch,
                                               const PipelineConfig& config) {
  std::vector<int> last_of_stage(static_cast<size_t>(config.num_stages), -1);
  for (int d = 0; d < arch.layer_count(); ++d) {
    last_of_stage[static_cast<size_t>(config.stage_of_layer[static_cast<size_t>(d)])] = d;
  }
  std::vector<int> picks;
  for (int s = config.num_stages - 1; s >= 0 && static_cast<int>(picks.size()) < 3; --s) {
    if (last_of_stage[static_cast<size_t>(s)] >= 0) {
      picks.push_back(last_of_stage[static_cast<size_t>(s)]);
    }
  }
  std::sort(picks.begin(), picks.end());
  return picks;
}

/// Held-out evaluation at fixed seeds disjoint from every training stream.
inline double eval_loss(const ArchitectureSpec& arch, const PipelineConfig& config,
                        const ParamBundle& params, const SyntheticTask& task, int pred_latency,
                        int num_eval = 8, uint64_t eval_seed_base = 900000) {
  UnrolledGraph g = unroll(arch, config, task.seq_len);
  const int64_t warmup = information_latency(g).output_info_latency;
  double total = 0.0;
  for (int i = 0; i < num_eval; ++i) {
    SyntheticSequence seq = sample_sequence(task, eval_seed_base + static_cast<uint64_t>(i));
    TrainRun run(g, params, seq.frames);
    total += detail::sequence_task_loss(task, run.head_outputs(), seq, pred_latency, warmup,
                                        nullptr);
  }
  return total / static_cast<double>(num_eval);
}

/// Trains with the loss between output at t and target at t - prediction
/// latency; the network learns to operate predictively when the wiring delays
/// its inputs. Returns the trained parameters, loss curve and held-out loss.
inline TrainResult train_predictive(const ArchitectureSpec& arch, PipelineConfig config,
                                    const TrainConfig& tc, const SyntheticTask& task,
                                    const ParamBundle* teacher = nullptr,
                                    const PipelineConfig* teacher_config = nullptr) {
  tc.check();
  set_prediction_latency(config, tc.prediction_latency);
  UnrolledGraph g = unroll(arch, config, task.seq_len);
  const int64_t warmup = information_latency(g).output_info_latency;
  if (std::max<int64_t>(warmup, tc.prediction_latency) >= task.seq_len) {
    throw ValidationError("sequence too short: needs more frames than information latency "
                          "plus prediction latency");
  }

  const bool distill = tc.lambda > 0.0;
  std::vector<int> dlayers = tc.distill_layers;
  if (distill && dlayers.empty()) dlayers = default_distill_layers(arch, config);
  if (distill && dlayers.empty()) throw ValidationError("distillation needs comparison layers");
  UnrolledGraph teacher_graph;
  if (distill) {
    if (!teacher) throw ValidationError("distillation needs trained teacher parameters");
    PipelineConfig tcfg = teacher_config ? *teacher_config : sequential_config(arch);
    tcfg.clock_rates = config.clock_rates;
    teacher_graph = unroll(arch, tcfg, task.seq_len);
  }

  TrainResult res;
  res.params = init_params(arch, tc.seed);
  ParamBundle velocity = zero_like(arch);
  const double m_layers = distill ? static_cast<double>(dlayers.size()) : 1.0;

  for (int step = 0; step < tc.steps; ++step) {
    ParamBundle grads = zero_like(arch);
    double loss_acc = 0.0, task_acc = 0.0, distill_acc = 0.0;
    for (int b = 0; b < tc.batch; ++b) {
      const uint64_t seq_seed =
          tc.seed * 1000003ULL + static_cast<uint64_t>(step) * 131ULL + static_cast<uint64_t>(b);
      SyntheticSequence seq = sample_sequence(task, seq_seed);
      TrainRun run(g, res.params, seq.frames);
      std::vector<Tensor> dhead = detail::empty_like(run.head_outputs());
      double task_loss = detail::sequence_task_loss(task, run.head_outputs(), seq,
                                                    tc.prediction_latency, warmup, &dhead);
      std::map<std::pair<int, int64_t>, Tensor> dacts;
      double extra = 0.0;
      if (distill) {
        TrainRun teach(teacher_graph, *teacher, seq.frames);
        for (int d : dlayers) {
          int64_t ticks = 0;
          for (int64_t t = warmup; t < task.seq_len; ++t) {
            if (g.node_exists(d, t)) ++ticks;
          }
          if (!ticks) continue;
          // (1/n_i)||a_hat - a||^2 with n_i = channel count; spatial dims stay
          // unnormalized, time steps are averaged like the per-frame task loss.
          const double n_i = static_cast<double>(arch.shapes[static_cast<size_t>(d)].c);
          const double coef = tc.lambda / n_i / (tc.distill_sum ? 1.0 : m_layers) /
                              static_cast<double>(ticks);
          for (int64_t t = warmup; t < task.seq_len; ++t) {
            if (!g.node_exists(d, t)) continue;
            const Tensor& a = run.layer_output(d, t);
            const Tensor& hat = teach.layer_output(d, t);
            Tensor da(a.shape());
            extra += squared_error(a, hat, &da, coef) * coef;
            dacts.emplace(std::make_pair(d, t), std::move(da));
          }
        }
      }
      loss_acc += task_loss + extra;
      task_acc += task_loss;
      distill_acc += extra;
      ParamBundle batch_grads = run.backward(dhead, dacts);
      for (size_t i = 0; i < grads.layers.size(); ++i) {
        if (batch_grads.layers[i].w.size()) {
          grads.layers[i].w += batch_grads.layers[i].w;
          grads.layers[i].b += batch_grads.layers[i].b;
        }
      }
      grads.head.w += batch_grads.head.w;
      grads.head.b += batch_grads.head.b;
    }
    const double inv_batch = 1.0 / static_cast<double>(tc.batch);
    grads.for_each([&](Tensor& t) { t *= inv_batch; });
    sgd_momentum_step(res.params, grads, velocity, tc.learning_rate, tc.momentum);

    LossCurvePoint pt;
    pt.step = step;
    pt.train_loss = loss_acc * inv_batch;
    pt.task_component = task_acc * inv_batch;
    pt.distill_component = distill_acc * inv_batch;
    pt.eval_loss = std::numeric_limits<double>::quiet_NaN();
    res.curve.push_back(pt);
  }
  res.final_eval = eval_loss(arch, config, res.params, task, tc.prediction_latency);
  if (!res.curve.empty()) res.curve.back().eval_loss = res.final_eval;
  return res;
}

struct TransferResult {
  std::vector<int> partition_counts;
  std::vector<double> sequential_weights_loss;  // per partition
  std::vector<double> parallel_weights_loss;    // per partition
  double sequential_self = 0.0;                 // diagonal consistency anchors
  double parallel_self = 0.0;
};

/// Trains one sequential and one fully-parallel model, then evaluates each
/// weight set under every requested partition's wiring.
inline TransferResult transfer_weights_experiment(const ArchitectureSpec& arch,
                                                  const std::vector<int>& partition_counts,
                                                  const TrainConfig& tc,
                                                  const SyntheticTask& task) {
  TransferResult out;
  out.partition_counts = partition_counts;
  PipelineConfig seq = sequential_config(arch);
  PipelineConfig par = fully_parallel_config(arch);
  TrainResult seq_train = train_predictive(arch, seq, tc, task);
  TrainResult par_train = train_predictive(arch, par, tc, task);
  out.sequential_self = seq_train.final_eval;
  out.parallel_self = par_train.final_eval;
  for (int n : partition_counts) {
    PipelineConfig cfg = partition_by_count(arch, n);
    cfg.clock_rates = seq.clock_rates;
    out.sequential_weights_loss.push_back(
        eval_loss(arch, cfg, seq_train.params, task, tc.prediction_latency));
    out.parallel_weights_loss.push_back(
        eval_loss(arch, cfg, par_train.params, task, tc.prediction_latency));
  }
  return out;
}

}  // namespace pipevid
