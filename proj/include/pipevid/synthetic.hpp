#pragma once

#include <random>

#include "pipevid/layers.hpp"

namespace pipevid {

/// Desk-scale synthetic video tasks. Dynamics are fully determined by the
/// seed, so training runs and evaluations are reproducible bitwise.
struct SyntheticTask {
  enum class Kind { MovingDot, SequenceClass };
  Kind kind = Kind::MovingDot;
  int64_t seq_len = 12;
  int64_t height = 12;
  int64_t width = 12;
  double sigma = 1.0;        // target heatmap width
  double render_sigma = 1.0; // input blob width
  double min_speed = 0.5;
  double max_speed = 1.5;
  double noise = 0.0;
  int num_classes = 4;       // SequenceClass: motion directions
};

struct SyntheticSequence {
  std::vector<Tensor> frames;    // (h, w, 1)
  std::vector<Tensor> heatmaps;  // per-frame target (MovingDot)
  int label = 0;                 // motion direction (SequenceClass)
};

/// A dot bouncing off the walls at constant speed; inputs are rendered blobs
/// (plus optional noise), targets are unit-peak gaussian heatmaps at the dot.
inline SyntheticSequence sample_sequence(const SyntheticTask& task, uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_real_distribution<double> upos(1.5, -1.5 + static_cast<double>(task.width));
  std::uniform_real_distribution<double> uspeed(task.min_speed, task.max_speed);
  std::uniform_real_distribution<double> uang(0.0, 2.0 * 3.14159265358979323846);
  std::normal_distribution<double> unoise(0.0, 1.0);

  double x = upos(rng), y = upos(rng);
  double speed = uspeed(rng);
  double vx, vy;
  SyntheticSequence seq;
  if (task.kind == SyntheticTask::Kind::SequenceClass) {
    std::uniform_int_distribution<int> udir(0, task.num_classes - 1);
    seq.label = udir(rng);
    const double step = 2.0 * 3.14159265358979323846 / static_cast<double>(task.num_classes);
    vx = speed * std::cos(step * seq.label);
    vy = speed * std::sin(step * seq.label);
  } else {
    const double ang = uang(rng);
    vx = speed * std::cos(ang);
    vy = speed * std::sin(ang);
  }

  for (int64_t t = 0; t < task.seq_len; ++t) {
    Tensor frame =
        gaussian_heatmap({{{x, y}}}, task.render_sigma, task.height, task.width);
    if (task.noise > 0.0) {
      for (int64_t i = 0; i < frame.size(); ++i) frame[i] += task.noise * unoise(rng);
    }
    seq.frames.push_back(std::move(frame));
    if (task.kind == SyntheticTask::Kind::MovingDot) {
      seq.heatmaps.push_back(gaussian_heatmap({{{x, y}}}, task.sigma, task.height, task.width));
    }
    x += vx;
    y += vy;
    if (x < 0.5) { x = 1.0 - x; vx = -vx; }
    if (x > static_cast<double>(task.width) - 1.5) {
      x = 2.0 * (static_cast<double>(task.width) - 1.5) - x + 1.0;
      vx = -vx;
    }
    if (y < 0.5) { y = 1.0 - y; vy = -vy; }
    if (y > static_cast<double>(task.height) - 1.5) {
      y = 2.0 * (static_cast<double>(task.height) - 1.5) - y + 1.0;
      vy = -vy;
    }
  }
  return seq;
}

}  // namespace pipevid
