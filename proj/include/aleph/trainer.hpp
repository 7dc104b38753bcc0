#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "aleph/environment.hpp"
#include "aleph/experience.hpp"
#include "aleph/heuristic_net.hpp"
#include "aleph/search_tree.hpp"

namespace aleph {

struct TrainConfig {
  double learning_rate = 0.01;
  double gamma = 0.98;
  int batch_size = 64;
  double epsilon_start = 0.5;
  double epsilon_end = 0.01;
  int iterations = 1000;
  std::size_t max_tree_nodes = 5500;
  int max_age = 20;  // iterations an experience stays in the replay buffer
  SampleMode replay = SampleMode::kUniform;
  double gc_ratio = 0.5;
  double unexplored_weight = 0.0;  // see SearchTree::backpropagate

  // Throws ConfigError.
  void validate() const;
};

enum class Algorithm { kAleph, kNStepDqn };

struct IterationMetrics {
  int iteration = 0;
  double best_path_reward = 0.0;  // C + max(Q) at the rank node
  std::size_t rank = 0;
  double efficiency = 0.0;
  double mean_loss = 0.0;
  double epsilon = 0.0;
  double gen_ms = 0.0;
  double train_ms = 0.0;
  std::size_t tree_size = 0;
  std::size_t buffer_size = 0;
};

struct RunMetrics {
  std::vector<IterationMetrics> records;
};

// Linear from epsilon_start at iteration 0 to epsilon_end at the last one.
// Throws ConfigError outside [0, iterations).
double epsilon_at(const TrainConfig& config, int iteration);

// Best-first tree growth: every node is evaluated once on creation and all
// of its actions are queued with priority C + Q[a]; each expansion pops a
// uniformly random entry with probability epsilon, the maximum otherwise.
// Stops when the queue is empty or the tree holds max_nodes nodes.
SearchTree generate_tree(const Environment& env, const State& initial, Heuristic& heuristic,
                         double epsilon, std::size_t max_nodes, std::mt19937_64& rng,
                         double gc_ratio = 0.5);

// Unbranched episode for the N-step DQN baseline: greedy on the heuristic,
// uniform random action with probability epsilon, until done or max_nodes.
SearchTree generate_chain(const Environment& env, const State& initial, Heuristic& heuristic,
                          double epsilon, std::size_t max_nodes, std::mt19937_64& rng);

using IterationCallback = std::function<void(const IterationMetrics&, const HeuristicNet&)>;

// Per iteration: fresh environment, build, backpropagate, harvest, evict,
// ceil(harvested / batch_size) SGD batches. Throws NonFiniteError when the
// loss diverges.
RunMetrics train(Algorithm algorithm, const TrainConfig& config, const Environment& env,
                 HeuristicNet& net, std::mt19937_64& rng,
                 const IterationCallback& on_iteration = {});

inline RunMetrics train_aleph(const TrainConfig& config, const Environment& env,
                              HeuristicNet& net, std::mt19937_64& rng,
                              const IterationCallback& on_iteration = {}) {
  return train(Algorithm::kAleph, config, env, net, rng, on_iteration);
}

inline RunMetrics train_nstep_dqn(const TrainConfig& config, const Environment& env,
                                  HeuristicNet& net, std::mt19937_64& rng,
                                  const IterationCallback& on_iteration = {}) {
  return train(Algorithm::kNStepDqn, config, env, net, rng, on_iteration);
}

// metrics.csv: "iteration,best_path_reward,rank,efficiency,mean_loss,epsilon,
// gen_ms,train_ms". Timing columns are written as 0 unless with_timing, which
// keeps the file byte-reproducible for a fixed config and seed.
std::string metrics_csv_header();
std::string metrics_csv_row(const IterationMetrics& m, bool with_timing);

// Trailing moving average with the given window (shorter at the start).
std::vector<double> moving_average(const std::vector<double>& values, std::size_t window);

}  // namespace aleph
