#pragma once

// Umbrella header for the pipevid library: depth-parallel video-network
// graphs, static analysis, deterministic execution, schedule simulation and
// toy-scale training.

#include "pipevid/analysis.hpp"
#include "pipevid/arch.hpp"
#include "pipevid/arch_json.hpp"
#include "pipevid/autodiff.hpp"
#include "pipevid/executor.hpp"
#include "pipevid/interpreter.hpp"
#include "pipevid/layers.hpp"
#include "pipevid/manifest.hpp"
#include "pipevid/optim.hpp"
#include "pipevid/params.hpp"
#include "pipevid/pipeline.hpp"
#include "pipevid/simulate.hpp"
#include "pipevid/synthetic.hpp"
#include "pipevid/tensor.hpp"
#include "pipevid/timeline.hpp"
#include "pipevid/trace.hpp"
#include "pipevid/train.hpp"
#include "pipevid/unroll.hpp"
