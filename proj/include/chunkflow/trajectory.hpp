#pragma once

#include <cstdint>
#include <vector>

#include "chunkflow/envs/env.hpp"

namespace chunkflow {

struct Step {
  EnvState state;   // state the action was taken from
  ActionId action;  // library action id
};

// A complete trajectory s0 -> ... -> x. The last step takes a terminal action.
struct Trajectory {
  std::vector<Step> steps;
  EnvState terminal;
  double reward = 0.0;               // base reward R(x)
  std::uint64_t generation = 0;      // library generation the actions refer to
  double behavior_logprob = 0.0;     // log-prob under the sampling policy, diagnostics only

  std::size_t length() const { return steps.size(); }
  std::vector<ActionId> actions() const {
    std::vector<ActionId> out;
    out.reserve(steps.size());
    for (const auto& s : steps) out.push_back(s.action);
    return out;
  }
};

}  // namespace chunkflow
