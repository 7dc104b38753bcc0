#include "aleph/policy.hpp"

#include <algorithm>
#include <random>
#include <vector>

#include "aleph/error.hpp"
#include "aleph/trainer.hpp"

namespace aleph {

int act_greedy(Heuristic& heuristic, const Environment& env, const State& state) {
  std::vector<double> q(static_cast<std::size_t>(env.action_count()));
  heuristic.evaluate(env, state, q);
  return static_cast<int>(std::max_element(q.begin(), q.end()) - q.begin());
}

int act_tree(Heuristic& heuristic, const Environment& env, const State& state,
             std::size_t budget) {
  if (budget < 2) throw BudgetError("planning budget must be at least 2 nodes");
  std::mt19937_64 unused(0);  // epsilon = 0 never samples
  const SearchTree tree = generate_tree(env, state, heuristic, 0.0, budget, unused);
  NodeId id = static_cast<NodeId>(tree.size() - 1);
  while (tree.node(id).parent != 0) id = tree.node(id).parent;
  return tree.node(id).parent_action;
}

EpisodeResult run_episode(const Environment& env, std::uint64_t seed, const Policy& policy,
                          int max_steps) {
  EpisodeResult result;
  State state = env.reset(seed);
  while (result.steps < max_steps) {
    Transition t = env.simulate(state, policy(state));
    result.total_reward += t.reward;
    ++result.steps;
    if (t.done) {
      result.done = true;
      break;
    }
    state = std::move(t.state);
  }
  return result;
}

}  // namespace aleph
