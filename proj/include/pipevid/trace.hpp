#pragma once

#include <fstream>

#include "json.hpp"
#include "pipevid/timeline.hpp"

namespace pipevid {

/// Chrome-tracing JSON event format: one complete ("X") event per executed
/// interval, worker as thread id, block label as category. Loads directly in
/// chrome://tracing and Perfetto.
inline nlohmann::ordered_json trace_json(const Timeline& tl) {
  nlohmann::ordered_json j;
  j["displayTimeUnit"] = "ms";
  j["traceEvents"] = nlohmann::ordered_json::array();
  for (const auto& e : tl.events) {
    nlohmann::ordered_json ev;
    ev["name"] = e.name;
    ev["cat"] = e.category.empty() ? "layer" : e.category;
    ev["ph"] = "X";
    ev["ts"] = e.start;
    ev["dur"] = e.end - e.start;
    ev["pid"] = 0;
    ev["tid"] = e.worker;
    ev["args"] = {{"frame", e.t}, {"layer", e.layer}};
    j["traceEvents"].push_back(std::move(ev));
  }
  return j;
}

inline void emit_trace(const Timeline& tl, std::ostream& os) {
  os << trace_json(tl).dump(1) << "\n";
  if (!os) throw std::runtime_error("trace write failed");
}

inline void emit_trace_file(const Timeline& tl, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open trace file " + path);
  emit_trace(tl, os);
}

}  // namespace pipevid
