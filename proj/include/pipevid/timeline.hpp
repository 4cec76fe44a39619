#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace pipevid {

/// One executed interval. `layer` is -1 for head instances; times are cost
/// units for the simulator and microseconds for the live runners.
struct TimelineEvent {
  int worker = 0;
  int layer = -1;
  int64_t t = 0;
  double start = 0.0;
  double end = 0.0;
  std::string name;
  std::string category;  // block label
};

struct Timeline {
  std::vector<TimelineEvent> events;
  int workers = 1;
  double makespan = 0.0;
  double steady_state_period = 0.0;
  double throughput = 0.0;  // outputs per cost unit in steady state
};

}  // namespace pipevid
