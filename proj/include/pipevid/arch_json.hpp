#pragma once

#include <fstream>

#include "json.hpp"
#include "pipevid/arch.hpp"

namespace pipevid {

using ordered_json = nlohmann::ordered_json;

namespace detail {

template <size_t N>
std::array<int, N> triple(const ordered_json& j, const std::string& field) {
  if (!j.is_array() || j.size() != N) {
    throw ParseError("field '" + field + "' must be an array of " + std::to_string(N));
  }
  std::array<int, N> a{};
  for (size_t i = 0; i < N; ++i) a[i] = j[i].get<int>();
  return a;
}

}  // namespace detail

/// Parses the documented architecture-spec JSON schema. Throws ParseError for
/// malformed syntax (with position) and ValidationError for structural issues.
inline ArchitectureSpec parse_architecture(const std::string& text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("spec parse error: ") + e.what());
  }
  ArchitectureSpec arch;
  try {
    arch.name = j.at("name").get<std::string>();
    const auto& is = j.at("input_shape");
    arch.input_shape.time = is.at("time").get<int64_t>();
    arch.input_shape.height = is.at("height").get<int64_t>();
    arch.input_shape.width = is.at("width").get<int64_t>();
    arch.input_shape.channels = is.at("channels").get<int64_t>();
    if (!j.at("layers").is_array()) throw ParseError("'layers' must be an array");
    for (const auto& lj : j.at("layers")) {
      LayerSpec l;
      l.name = lj.at("name").get<std::string>();
      l.kind = kind_from_name(lj.at("kind").get<std::string>());
      if (lj.contains("kernel")) l.kernel = detail::triple<3>(lj.at("kernel"), "kernel");
      if (lj.contains("stride")) l.stride = detail::triple<3>(lj.at("stride"), "stride");
      if (lj.contains("channels")) l.out_channels = lj.at("channels").get<int>();
      if (lj.contains("block")) l.block = lj.at("block").get<std::string>();
      if (lj.contains("unit")) l.unit = lj.at("unit").get<std::string>();
      if (lj.contains("branch")) l.branch = lj.at("branch").get<std::string>();
      if (lj.contains("input")) l.input = lj.at("input").get<std::string>();
      if (lj.contains("inputs")) {
        for (const auto& s : lj.at("inputs")) l.inputs.push_back(s.get<std::string>());
      }
      if (lj.contains("target")) l.target = detail::triple<2>(lj.at("target"), "target");
      arch.layers.push_back(std::move(l));
    }
    if (j.contains("skip_edges")) {
      for (const auto& e : j.at("skip_edges")) {
        if (!e.is_array() || e.size() != 2) throw ParseError("skip edge must be a [from, to] pair");
        // Names are resolved against the layer list; unknown names raise
        // ValidationError from index_of.
        int from = arch.index_of(e[0].get<std::string>());
        int to = arch.index_of(e[1].get<std::string>());
        arch.skip_edges.emplace_back(from, to);
      }
    }
    const auto& hj = j.at("head");
    const std::string hk = hj.at("kind").get<std::string>();
    if (hk == "dense") {
      arch.head.kind = HeadSpec::Kind::Dense;
    } else if (hk == "classifier") {
      arch.head.kind = HeadSpec::Kind::Classifier;
    } else {
      throw ParseError("head kind must be 'dense' or 'classifier'");
    }
    arch.head.channels = hj.at("channels").get<int>();
    if (hj.contains("kernel")) arch.head.kernel = detail::triple<3>(hj.at("kernel"), "kernel");
    if (hj.contains("inputs")) {
      for (const auto& s : hj.at("inputs")) arch.head.inputs.push_back(s.get<std::string>());
    }
    if (hj.contains("resolution")) {
      arch.head.resolution = detail::triple<2>(hj.at("resolution"), "resolution");
    }
    if (j.contains("feedback") && j.at("feedback").get<bool>()) {
      arch.validate();
      return add_feedback(arch);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("spec field error: ") + e.what());
  }
  arch.validate();
  return arch;
}

inline std::string serialize_architecture(const ArchitectureSpec& arch) {
  ordered_json j;
  j["name"] = arch.name;
  j["input_shape"] = {{"time", arch.input_shape.time},
                      {"height", arch.input_shape.height},
                      {"width", arch.input_shape.width},
                      {"channels", arch.input_shape.channels}};
  j["layers"] = ordered_json::array();
  for (const auto& l : arch.layers) {
    ordered_json lj;
    lj["name"] = l.name;
    lj["kind"] = kind_name(l.kind);
    lj["kernel"] = l.kernel;
    lj["stride"] = l.stride;
    if (l.out_channels > 0) lj["channels"] = l.out_channels;
    if (!l.block.empty()) lj["block"] = l.block;
    if (!l.unit.empty()) lj["unit"] = l.unit;
    if (!l.branch.empty()) lj["branch"] = l.branch;
    if (!l.input.empty()) lj["input"] = l.input;
    if (!l.inputs.empty()) lj["inputs"] = l.inputs;
    if (l.kind == LayerKind::Upsample) lj["target"] = l.target;
    j["layers"].push_back(std::move(lj));
  }
  j["skip_edges"] = ordered_json::array();
  for (auto [from, to] : arch.skip_edges) {
    j["skip_edges"].push_back({arch.layers[static_cast<size_t>(from)].name,
                               arch.layers[static_cast<size_t>(to)].name});
  }
  ordered_json hj;
  hj["kind"] = arch.head.kind == HeadSpec::Kind::Dense ? "dense" : "classifier";
  hj["channels"] = arch.head.channels;
  hj["kernel"] = arch.head.kernel;
  if (!arch.head.inputs.empty()) hj["inputs"] = arch.head.inputs;
  if (arch.head.resolution[0] > 0) hj["resolution"] = arch.head.resolution;
  j["head"] = std::move(hj);
  if (arch.feedback.enabled) j["feedback"] = true;
  return j.dump(2) + "\n";
}

inline ArchitectureSpec load_architecture_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ParseError("cannot open architecture file: " + path);
  std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return parse_architecture(text);
}

}  // namespace pipevid
