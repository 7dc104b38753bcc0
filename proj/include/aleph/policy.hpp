#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>

#include "aleph/environment.hpp"

namespace aleph {

// argmax of the heuristic at `state`; ties go to the lowest action index.
int act_greedy(Heuristic& heuristic, const Environment& env, const State& state);

// Grows an epsilon = 0 tree of `budget` nodes from `state` and returns the
// first action on the path from the root to the last added node.
int act_tree(Heuristic& heuristic, const Environment& env, const State& state,
             std::size_t budget);

using Policy = std::function<int(const State&)>;

struct EpisodeResult {
  double total_reward = 0.0;
  int steps = 0;
  bool done = false;
};

// Runs from env.reset(seed) until done or max_steps actions.
EpisodeResult run_episode(const Environment& env, std::uint64_t seed, const Policy& policy,
                          int max_steps);

}  // namespace aleph
