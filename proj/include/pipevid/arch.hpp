#pragma once

#include <algorithm>
#include <array>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace pipevid {

enum class LayerKind { Conv, MaxPool, AvgPool, Concat, Upsample, Dense, Relu };

inline const char* kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::Conv: return "conv";
    case LayerKind::MaxPool: return "maxpool";
    case LayerKind::AvgPool: return "avgpool";
    case LayerKind::Concat: return "concat";
    case LayerKind::Upsample: return "upsample";
    case LayerKind::Dense: return "dense";
    case LayerKind::Relu: return "pointwise-nonlinearity";
  }
  return "?";
}

inline LayerKind kind_from_name(const std::string& s) {
  if (s == "conv") return LayerKind::Conv;
  if (s == "maxpool") return LayerKind::MaxPool;
  if (s == "avgpool") return LayerKind::AvgPool;
  if (s == "concat") return LayerKind::Concat;
  if (s == "upsample") return LayerKind::Upsample;
  if (s == "dense") return LayerKind::Dense;
  if (s == "pointwise-nonlinearity" || s == "relu") return LayerKind::Relu;
  throw std::invalid_argument("unknown layer kind: " + s);
}

class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One row of an architecture table. Kernel and stride triplets are ordered
/// (t, h, w); kernel[0] is the layer's temporal extent (how many past steps of
/// its input stream it consumes).
struct LayerSpec {
  std::string name;
  LayerKind kind = LayerKind::Conv;
  std::array<int, 3> kernel{1, 1, 1};
  std::array<int, 3> stride{1, 1, 1};
  int out_channels = 0;           // conv/dense only
  std::string block;              // group label, e.g. "Block_1" / "Mixed_3b"
  std::string unit;               // partition granule; empty = inherit previous
  std::string branch;             // Inception-style parallel branch label
  std::string input;              // explicit producer; empty = previous layer
  std::vector<std::string> inputs;  // concat only: all producers
  std::array<int, 2> target{0, 0};  // upsample only: (h, w)

  int temporal_kernel() const { return kernel[0]; }
};

struct HeadSpec {
  enum class Kind { Dense, Classifier };
  Kind kind = Kind::Classifier;
  int channels = 0;                   // heatmap channels or class count
  std::array<int, 3> kernel{1, 1, 1};  // dense head conv kernel
  std::vector<std::string> inputs;     // default: last layer
  std::array<int, 2> resolution{0, 0}; // dense head target (h, w)
};

struct InputShape {
  int64_t time = 1;
  int64_t height = 1;
  int64_t width = 1;
  int64_t channels = 1;
};

struct FeedbackSpec {
  bool enabled = false;
  int consumer = -1;  // layer whose input gains the previous head output
};

/// Per-layer propagated output shape (spatial only; time is clock-driven).
struct LayerShape {
  int64_t h = 0, w = 0, c = 0;
  int64_t in_h = 0, in_w = 0, in_c = 0;  // after source concat
};

struct ArchitectureSpec {
  std::string name;
  InputShape input_shape;
  std::vector<LayerSpec> layers;
  std::vector<std::pair<int, int>> skip_edges;  // (from, to), extra inputs of `to`
  HeadSpec head;
  FeedbackSpec feedback;

  // --- resolved structure (filled by validate()) ---
  // Ordered input sources per layer: kInput denotes the frame stream.
  static constexpr int kInput = -1;
  std::vector<std::vector<int>> layer_sources;  // per layer, ordered producers
  std::vector<int> head_sources;                // layer indices feeding the head
  std::vector<LayerShape> shapes;               // per layer
  LayerShape head_shape;
  std::vector<std::string> unit_of;             // per layer, resolved unit label
  std::vector<std::string> units;               // distinct units in chain order
  std::vector<int> unit_index_of;               // per layer -> index into units
  std::vector<bool> unit_is_core;               // miniblock/inception-block units

  int layer_count() const { return static_cast<int>(layers.size()); }

  int index_of(const std::string& layer_name) const {
    for (int i = 0; i < layer_count(); ++i) {
      if (layers[static_cast<size_t>(i)].name == layer_name) return i;
    }
    throw ValidationError("unknown layer name: " + layer_name);
  }

  void validate();
};

namespace detail {

inline int64_t same_out(int64_t in, int stride) { return (in + stride - 1) / stride; }

}  // namespace detail

inline void ArchitectureSpec::validate() {
  if (layers.empty()) throw ValidationError("architecture has no layers");
  if (input_shape.height < 1 || input_shape.width < 1 || input_shape.channels < 1) {
    throw ValidationError("input shape extents must be positive");
  }
  std::set<std::string> names;
  for (const auto& l : layers) {
    if (l.name.empty()) throw ValidationError("layer with empty name");
    if (!names.insert(l.name).second) throw ValidationError("duplicate layer name: " + l.name);
    for (int i = 0; i < 3; ++i) {
      if (l.kernel[static_cast<size_t>(i)] < 1 || l.stride[static_cast<size_t>(i)] < 1) {
        throw ValidationError("layer " + l.name + ": kernel and stride components must be >= 1");
      }
    }
    if ((l.kind == LayerKind::Conv || l.kind == LayerKind::Dense) && l.out_channels < 1) {
      throw ValidationError("layer " + l.name + ": channel count must be positive");
    }
    if (l.kind == LayerKind::Concat && l.inputs.empty()) {
      throw ValidationError("concat layer " + l.name + " needs an explicit inputs list");
    }
    if (l.kind == LayerKind::Upsample && (l.target[0] < 1 || l.target[1] < 1)) {
      throw ValidationError("upsample layer " + l.name + " needs a positive target resolution");
    }
  }

  const int n = layer_count();
  layer_sources.assign(static_cast<size_t>(n), {});
  for (int i = 0; i < n; ++i) {
    const auto& l = layers[static_cast<size_t>(i)];
    auto& src = layer_sources[static_cast<size_t>(i)];
    if (l.kind == LayerKind::Concat) {
      for (const auto& nm : l.inputs) {
        int j = index_of(nm);
        if (j >= i) throw ValidationError("concat " + l.name + " reads a non-preceding layer");
        src.push_back(j);
      }
    } else if (!l.input.empty()) {
      int j = index_of(l.input);
      if (j >= i) throw ValidationError("layer " + l.name + " input must precede it");
      src.push_back(j);
    } else {
      src.push_back(i == 0 ? kInput : i - 1);
    }
  }
  for (auto [from, to] : skip_edges) {
    if (from < 0 || from >= n || to < 0 || to >= n) {
      throw ValidationError("skip edge references a nonexistent layer");
    }
    if (from >= to) throw ValidationError("skip edges must point strictly forward in depth");
    layer_sources[static_cast<size_t>(to)].push_back(from);
  }

  head_sources.clear();
  if (head.inputs.empty()) {
    head_sources.push_back(n - 1);
  } else {
    for (const auto& nm : head.inputs) head_sources.push_back(index_of(nm));
  }
  if (head.channels < 1) throw ValidationError("head channel count must be positive");

  // Units: empty labels inherit the previous layer's unit.
  unit_of.assign(static_cast<size_t>(n), "");
  units.clear();
  unit_index_of.assign(static_cast<size_t>(n), 0);
  for (int i = 0; i < n; ++i) {
    const auto& l = layers[static_cast<size_t>(i)];
    std::string u = l.unit;
    if (u.empty()) u = (i == 0) ? l.name : unit_of[static_cast<size_t>(i - 1)];
    unit_of[static_cast<size_t>(i)] = u;
    if (units.empty() || units.back() != u) {
      auto it = std::find(units.begin(), units.end(), u);
      if (it != units.end()) throw ValidationError("unit " + u + " is not contiguous");
      units.push_back(u);
    }
    unit_index_of[static_cast<size_t>(i)] = static_cast<int>(units.size()) - 1;
  }
  unit_is_core.assign(units.size(), true);
  for (size_t u = 0; u < units.size(); ++u) {
    if (units[u] == "stem" || units[u] == "head") unit_is_core[u] = false;
  }

  // Shape propagation (spatial dims and channels).
  shapes.assign(static_cast<size_t>(n), {});
  auto source_shape = [&](int j) -> std::array<int64_t, 3> {
    if (j == kInput) return {input_shape.height, input_shape.width, input_shape.channels};
    const auto& s = shapes[static_cast<size_t>(j)];
    return {s.h, s.w, s.c};
  };
  for (int i = 0; i < n; ++i) {
    const auto& l = layers[static_cast<size_t>(i)];
    auto& sh = shapes[static_cast<size_t>(i)];
    const auto& src = layer_sources[static_cast<size_t>(i)];
    auto first = source_shape(src[0]);
    sh.in_h = first[0];
    sh.in_w = first[1];
    sh.in_c = first[2];
    for (size_t k = 1; k < src.size(); ++k) {
      auto s = source_shape(src[k]);
      if (s[0] != sh.in_h || s[1] != sh.in_w) {
        throw ValidationError("layer " + l.name + ": cannot concat inputs of (" +
                              std::to_string(sh.in_h) + "x" + std::to_string(sh.in_w) +
                              ") and (" + std::to_string(s[0]) + "x" + std::to_string(s[1]) + ")");
      }
      sh.in_c += s[2];
    }
    if (feedback.enabled && feedback.consumer == i) sh.in_c += head.channels;
    switch (l.kind) {
      case LayerKind::Conv:
        sh.h = detail::same_out(sh.in_h, l.stride[1]);
        sh.w = detail::same_out(sh.in_w, l.stride[2]);
        sh.c = l.out_channels;
        break;
      case LayerKind::MaxPool:
      case LayerKind::AvgPool:
        sh.h = detail::same_out(sh.in_h, l.stride[1]);
        sh.w = detail::same_out(sh.in_w, l.stride[2]);
        sh.c = sh.in_c;
        break;
      case LayerKind::Concat:
      case LayerKind::Relu:
        sh.h = sh.in_h;
        sh.w = sh.in_w;
        sh.c = sh.in_c;
        break;
      case LayerKind::Upsample:
        sh.h = l.target[0];
        sh.w = l.target[1];
        sh.c = sh.in_c;
        break;
      case LayerKind::Dense:
        sh.h = 1;
        sh.w = 1;
        sh.c = l.out_channels;
        break;
    }
  }

  // Head shape: dense heads bilinearly resize every source to `resolution` and
  // concat; classifier heads global-pool the sources.
  head_shape = {};
  int64_t hc = 0;
  for (int j : head_sources) {
    hc += shapes[static_cast<size_t>(j)].c;
  }
  if (head.kind == HeadSpec::Kind::Dense) {
    int64_t rh = head.resolution[0], rw = head.resolution[1];
    if (rh < 1 || rw < 1) {
      rh = shapes[static_cast<size_t>(head_sources[0])].h;
      rw = shapes[static_cast<size_t>(head_sources[0])].w;
    }
    head_shape.in_h = rh;
    head_shape.in_w = rw;
    head_shape.in_c = hc;
    head_shape.h = rh;
    head_shape.w = rw;
    head_shape.c = head.channels;
  } else {
    head_shape.in_h = 1;
    head_shape.in_w = 1;
    head_shape.in_c = hc;
    head_shape.h = 1;
    head_shape.w = 1;
    head_shape.c = head.channels;
  }

  // Reachability: the chain must connect the input to the head.
  std::vector<bool> reach(static_cast<size_t>(n), false);
  std::vector<int> stack(head_sources.begin(), head_sources.end());
  while (!stack.empty()) {
    int j = stack.back();
    stack.pop_back();
    if (j == kInput || reach[static_cast<size_t>(j)]) continue;
    reach[static_cast<size_t>(j)] = true;
    for (int s : layer_sources[static_cast<size_t>(j)]) stack.push_back(s);
  }
  bool touches_input = false;
  for (int i = 0; i < n; ++i) {
    for (int s : layer_sources[static_cast<size_t>(i)]) {
      if (s == kInput && reach[static_cast<size_t>(i)]) touches_input = true;
    }
  }
  if (!touches_input) throw ValidationError("no path from the input stream to the head");
}

/// Raises per-unit temporal extents: the entry layer of each listed unit gets
/// the given extent as its temporal kernel. Extent 1 leaves a unit unchanged.
inline ArchitectureSpec temporalize(const ArchitectureSpec& arch,
                                    const std::map<std::string, int>& unit_extents) {
  for (const auto& [u, e] : unit_extents) {
    if (e < 1) throw ValidationError("temporal extent must be >= 1 (unit " + u + ")");
  }
  ArchitectureSpec out = arch;
  std::set<std::string> seen;
  for (int i = 0; i < out.layer_count(); ++i) {
    const std::string& u = arch.unit_of[static_cast<size_t>(i)];
    if (!seen.insert(u).second) continue;  // not the unit's entry layer
    auto it = unit_extents.find(u);
    if (it != unit_extents.end()) out.layers[static_cast<size_t>(i)].kernel[0] = it->second;
  }
  for (const auto& [u, e] : unit_extents) {
    if (std::find(arch.units.begin(), arch.units.end(), u) == arch.units.end()) {
      throw ValidationError("temporalize: unknown unit " + u);
    }
  }
  out.validate();
  return out;
}

/// Uniform variant: every core unit gets `extent`; the stem keeps extent 1.
inline ArchitectureSpec temporalize(const ArchitectureSpec& arch, int extent) {
  std::map<std::string, int> m;
  for (size_t u = 0; u < arch.units.size(); ++u) {
    if (arch.unit_is_core[u]) m[arch.units[u]] = extent;
  }
  return temporalize(arch, m);
}

/// Adds the feedback edge: the head's previous-frame output is concatenated
/// into the input of the earliest layer whose input resolution matches the
/// head's output resolution. At t=0 the fed-back tensor is zero.
inline ArchitectureSpec add_feedback(const ArchitectureSpec& arch) {
  if (arch.head.kind != HeadSpec::Kind::Dense) {
    throw ValidationError("feedback requires a dense prediction head");
  }
  if (arch.feedback.enabled) throw ValidationError("feedback edge already present");
  ArchitectureSpec out = arch;
  int consumer = -1;
  // The edge lands after the first conv layer: scan consumers of layer 0 and
  // deeper until the resolutions line up.
  for (int i = 1; i < arch.layer_count(); ++i) {
    const auto& sh = arch.shapes[static_cast<size_t>(i)];
    if (sh.in_h == arch.head_shape.h && sh.in_w == arch.head_shape.w) {
      consumer = i;
      break;
    }
  }
  if (consumer < 0) {
    throw ValidationError("no layer input matches the head resolution for feedback");
  }
  out.feedback.enabled = true;
  out.feedback.consumer = consumer;
  out.validate();
  return out;
}

}  // namespace pipevid
