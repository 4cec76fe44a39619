#pragma once

#include <cstdlib>
#include <random>
#include <string>

#include "pipevid/arch_json.hpp"
#include "pipevid/params.hpp"
#include "pipevid/pipeline.hpp"

namespace pipevid::testutil {

inline std::string fixture_path(const std::string& name) {
  const char* dir = std::getenv("PIPEVID_FIXTURES");
  return std::string(dir ? dir : "fixtures") + "/" + name;
}

inline ArchitectureSpec load_fixture(const std::string& name) {
  return load_architecture_file(fixture_path(name));
}

struct ChainOptions {
  int depth = 4;
  int channels = 3;
  int64_t height = 6;
  int64_t width = 6;
  int64_t in_channels = 1;
  int temporal_extent = 1;        // applied to every layer
  bool dense_head = true;
  int head_channels = 1;
  std::vector<std::pair<int, int>> skips;
  bool relu = false;               // interleave nonlinearities
};

/// Toy causal conv chain; every layer is its own partition unit.
inline ArchitectureSpec make_chain(const ChainOptions& o) {
  ArchitectureSpec arch;
  arch.name = "chain";
  arch.input_shape = {8, o.height, o.width, o.in_channels};
  for (int i = 0; i < o.depth; ++i) {
    LayerSpec l;
    l.name = "conv_" + std::to_string(i);
    l.kind = LayerKind::Conv;
    l.kernel = {o.temporal_extent, 3, 3};
    l.stride = {1, 1, 1};
    l.out_channels = o.channels;
    l.unit = l.name;
    arch.layers.push_back(l);
    if (o.relu && i + 1 < o.depth) {
      LayerSpec r;
      r.name = "relu_" + std::to_string(i);
      r.kind = LayerKind::Relu;
      r.unit = l.name;  // nonlinearity rides with its conv
      arch.layers.push_back(r);
    }
  }
  arch.skip_edges = o.skips;
  arch.head.kind = o.dense_head ? HeadSpec::Kind::Dense : HeadSpec::Kind::Classifier;
  arch.head.channels = o.head_channels;
  arch.head.kernel = {1, o.dense_head ? 3 : 1, o.dense_head ? 3 : 1};
  if (o.dense_head) {
    arch.head.resolution = {static_cast<int>(o.height), static_cast<int>(o.width)};
  }
  arch.validate();
  return arch;
}

/// Narrow two-block densenet-style topology: dense in-block skips, a skip
/// projection per block feeding the head, a transition and a pooling step.
inline ArchitectureSpec make_toy_densenet() {
  ArchitectureSpec arch;
  arch.name = "toy_densenet";
  arch.input_shape = {8, 8, 8, 1};
  auto conv = [](std::string name, int kt, int kh, int kw, int ch) {
    LayerSpec l;
    l.name = std::move(name);
    l.kind = LayerKind::Conv;
    l.kernel = {kt, kh, kw};
    l.stride = {1, 1, 1};
    l.out_channels = ch;
    return l;
  };
  LayerSpec stem = conv("stem_conv", 1, 3, 3, 3);
  stem.unit = "stem";
  stem.block = "stem";
  arch.layers.push_back(stem);
  const char* blocks[2] = {"B1", "B2"};
  std::string block_input = "stem_conv";
  std::vector<std::string> head_inputs;
  for (int b = 0; b < 2; ++b) {
    std::vector<std::string> convs;
    for (int i = 0; i < 2; ++i) {
      std::string tag = std::string(blocks[b]) + "_" + std::to_string(i);
      LayerSpec bn = conv("bn_" + tag, 2, 1, 1, 4);
      bn.unit = "mb_" + tag;
      bn.block = blocks[b];
      if (i == 0) bn.input = block_input;
      arch.layers.push_back(bn);
      LayerSpec cv = conv("cv_" + tag, 1, 3, 3, 2);
      cv.unit = "mb_" + tag;
      cv.block = blocks[b];
      arch.layers.push_back(cv);
      convs.push_back(cv.name);
    }
    LayerSpec sk = conv("skip_" + std::string(blocks[b]), 1, 1, 1, 2);
    sk.block = blocks[b];
    sk.input = convs.back();
    arch.layers.push_back(sk);
    head_inputs.push_back(sk.name);
    if (b == 0) {
      LayerSpec tr = conv("trans", 1, 1, 1, 3);
      tr.block = blocks[b];
      tr.input = convs.back();
      arch.layers.push_back(tr);
      LayerSpec pool;
      pool.name = "pool";
      pool.kind = LayerKind::AvgPool;
      pool.kernel = {1, 2, 2};
      pool.stride = {1, 2, 2};
      pool.block = blocks[b];
      arch.layers.push_back(pool);
      block_input = "pool";
    }
  }
  // dense connectivity + block-level reads of the running concat
  auto idx = [&](const std::string& n) { return arch.index_of(n); };
  arch.skip_edges.emplace_back(idx("stem_conv"), idx("bn_B1_1"));
  arch.skip_edges.emplace_back(idx("stem_conv"), idx("skip_B1"));
  arch.skip_edges.emplace_back(idx("cv_B1_0"), idx("skip_B1"));
  arch.skip_edges.emplace_back(idx("stem_conv"), idx("trans"));
  arch.skip_edges.emplace_back(idx("cv_B1_0"), idx("trans"));
  arch.skip_edges.emplace_back(idx("pool"), idx("bn_B2_1"));
  arch.skip_edges.emplace_back(idx("pool"), idx("skip_B2"));
  arch.skip_edges.emplace_back(idx("cv_B2_0"), idx("skip_B2"));
  arch.head.kind = HeadSpec::Kind::Dense;
  arch.head.channels = 2;
  arch.head.kernel = {1, 3, 3};
  arch.head.inputs = {"stem_conv", "skip_B1", "skip_B2"};
  arch.head.resolution = {8, 8};
  arch.validate();
  return arch;
}

/// Random toy wiring for equivalence sweeps: clocks, temporal extents, skip
/// edges and optional feedback.
inline std::pair<ArchitectureSpec, PipelineConfig> random_toy_config(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> depth_pick(2, 5), extent_pick(1, 3), coin(0, 1);
  ChainOptions o;
  o.depth = depth_pick(rng);
  o.channels = 2;
  o.height = 5;
  o.width = 5;
  o.temporal_extent = extent_pick(rng);
  if (o.depth >= 3 && coin(rng)) o.skips = {{0, o.depth - 1}};
  ArchitectureSpec arch = make_chain(o);
  if (coin(rng)) arch = add_feedback(arch);
  std::uniform_int_distribution<int> stage_pick(1, o.depth);
  PipelineConfig c = partition_by_count(arch, stage_pick(rng));
  std::vector<int> rates;
  int r = 1;
  for (int d = 0; d < o.depth; ++d) {
    if (d > 0 && coin(rng) && r < 4) r *= 2;
    rates.push_back(r);
  }
  set_clock_rates(arch, c, rates);
  return {std::move(arch), std::move(c)};
}

inline std::vector<Tensor> random_frames(const ArchitectureSpec& arch, int64_t n, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<Tensor> frames;
  for (int64_t t = 0; t < n; ++t) {
    Tensor f({arch.input_shape.height, arch.input_shape.width, arch.input_shape.channels});
    for (int64_t i = 0; i < f.size(); ++i) f[i] = dist(rng);
    frames.push_back(std::move(f));
  }
  return frames;
}

}  // namespace pipevid::testutil
