#pragma once

#include "pipevid/params.hpp"

namespace pipevid {

struct TrainConfig {
  double learning_rate = 0.1;
  double momentum = 0.9;
  int steps = 200;
  int batch = 1;
  int prediction_latency = 0;
  double lambda = 0.0;             // distillation weight
  std::vector<int> distill_layers;  // student/teacher comparison points
  bool distill_sum = false;         // default: average over the m layers
  uint64_t seed = 1;

  void check() const {
    if (momentum < 0.0 || momentum >= 1.0) throw ValidationError("momentum must be in [0,1)");
    if (lambda < 0.0) throw ValidationError("lambda must be >= 0");
    if (prediction_latency < 0) throw ValidationError("prediction latency must be >= 0");
    if (steps < 1 || batch < 1) throw ValidationError("steps and batch must be >= 1");
  }
};

/// v <- m*v + g; p <- p - lr*v. Velocity tensors are created on first use.
inline void sgd_momentum_step(ParamBundle& params, const ParamBundle& grads,
                              ParamBundle& velocity, double learning_rate, double momentum) {
  auto update = [&](Tensor& p, const Tensor& g, Tensor& v) {
    if (!p.same_shape(g)) {
      throw std::invalid_argument("sgd step: parameter/gradient shape mismatch " + p.shape_str() +
                                  " vs " + g.shape_str());
    }
    if (v.size() != p.size()) v = Tensor(p.shape());
    for (int64_t i = 0; i < p.size(); ++i) {
      v[i] = momentum * v[i] + g[i];
      p[i] -= learning_rate * v[i];
    }
  };
  for (size_t i = 0; i < params.layers.size(); ++i) {
    auto& lp = params.layers[i];
    if (!lp.w.size()) continue;
    update(lp.w, grads.layers[i].w, velocity.layers[i].w);
    update(lp.b, grads.layers[i].b, velocity.layers[i].b);
  }
  update(params.head.w, grads.head.w, velocity.head.w);
  update(params.head.b, grads.head.b, velocity.head.b);
}

/// L_d = L(y, y_gt) + lambda * S, where S sums (1/n_i) * ||a_hat_i - a_i||^2
/// over the m compared layers (divided by m unless `sum` is set; n_i is the
/// channel count of layer i, spatial dimensions are not divided out).
/// Adjoints accumulate into dstudent when given.
inline double distillation_loss(double task_loss, const std::vector<Tensor>& student_acts,
                                const std::vector<Tensor>& teacher_acts, double lambda,
                                bool sum_over_layers = false,
                                std::vector<Tensor>* dstudent = nullptr) {
  if (student_acts.size() != teacher_acts.size()) {
    throw std::invalid_argument("distillation: student/teacher layer count mismatch");
  }
  const double m = static_cast<double>(student_acts.size());
  double extra = 0.0;
  for (size_t i = 0; i < student_acts.size(); ++i) {
    const Tensor& a = student_acts[i];
    const Tensor& hat = teacher_acts[i];
    if (!a.same_shape(hat)) {
      throw std::invalid_argument("distillation: activation shape mismatch " + a.shape_str() +
                                  " vs " + hat.shape_str());
    }
    const double n_i = static_cast<double>(a.dim(static_cast<int>(a.rank()) - 1));
    const double coef = lambda / n_i / (sum_over_layers ? 1.0 : m);
    extra += squared_error(a, hat, dstudent ? &(*dstudent)[i] : nullptr, coef) * coef;
  }
  return task_loss + extra;
}

}  // namespace pipevid
