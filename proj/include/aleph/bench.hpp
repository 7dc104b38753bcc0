#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "aleph/environment.hpp"
#include "aleph/search_tree.hpp"

namespace aleph {

// Least-squares slope of log(y) against log(x).
double fit_loglog_exponent(std::span<const double> x, std::span<const double> y);

struct ScalingPoint {
  std::size_t size = 0;
  double seconds = 0.0;  // median over repeats
};

struct ScalingResult {
  std::string mode;
  std::vector<ScalingPoint> points;
  double exponent = 0.0;
};

// Constant-cost environment: integer states, every action earns 1 and
// nothing terminates. Sensors are blank.
class StubEnv : public Environment {
 public:
  explicit StubEnv(int actions = 35) : actions_(actions) {}
  int action_count() const override { return actions_; }
  State reset(std::uint64_t seed) const override;
  Transition simulate(const State& state, int action) const override;
  void sensors(const State& state, std::span<float> image) const override;
  using Environment::sensors;

 private:
  int actions_;
};

// Constant-cost heuristic with a small state-dependent spread below 1.
class StubHeuristic : public Heuristic {
 public:
  void evaluate(const Environment& env, const State& state, std::span<double> q) override;
};

// Grows a tree of max_nodes by walking from the root on every expansion:
// at each level all actions are scored by C + Q[a] and the walk descends
// into the best one until it reaches an unexpanded action. This is the
// cost profile of selection in rollout-based search.
SearchTree rollout_reference_tree(const Environment& env, const State& initial,
                                  Heuristic& heuristic, std::size_t max_nodes);

// Timing sweeps. Exponent is fitted against size, except queue-ops which is
// fitted against size * log2(size).
ScalingResult bench_tree_scaling(std::span<const std::size_t> sizes);
ScalingResult bench_rollout_reference(std::span<const std::size_t> sizes);
ScalingResult bench_queue_ops(std::span<const std::size_t> sizes);

}  // namespace aleph
