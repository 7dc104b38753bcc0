#include "aleph/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <string>

#include "aleph/error.hpp"
#include "aleph/lazy_heap.hpp"

namespace aleph {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point since) {
  return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

void evaluate_node(SearchTree& tree, NodeId id, const Environment& env, Heuristic& heuristic) {
  heuristic.evaluate(env, tree.node(id).state, tree.mutable_q(id));
}

void queue_actions(const SearchTree& tree, NodeId id, LazyHeap& queue) {
  const Node& n = tree.node(id);
  for (int a = 0; a < tree.action_count(); ++a) {
    queue.push(id, a, n.accumulated + n.q[static_cast<std::size_t>(a)]);
  }
}

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !(gamma > 0.0) || gamma > 1.0 || batch_size < 1 ||
      iterations < 0 || max_tree_nodes < 2 || max_age < 1 || !(unexplored_weight >= 0.0)) {
    throw ConfigError(
        "training parameters must be positive (gamma in (0, 1], unexplored_weight >= 0)");
  }
  if (!(epsilon_end >= 0.0) || epsilon_end > epsilon_start || epsilon_start > 1.0) {
    throw ConfigError("need 0 <= epsilon_end <= epsilon_start <= 1");
  }
}

double epsilon_at(const TrainConfig& config, int iteration) {
  if (iteration < 0 || iteration >= config.iterations) {
    throw ConfigError("iteration " + std::to_string(iteration) + " outside [0, " +
                      std::to_string(config.iterations) + ")");
  }
  if (config.iterations == 1) return config.epsilon_start;
  const double t = static_cast<double>(iteration) / (config.iterations - 1);
  return config.epsilon_start + t * (config.epsilon_end - config.epsilon_start);
}

SearchTree generate_tree(const Environment& env, const State& initial, Heuristic& heuristic,
                         double epsilon, std::size_t max_nodes, std::mt19937_64& rng,
                         double gc_ratio) {
  SearchTree tree(initial, env.action_count(), max_nodes);
  LazyHeap queue(gc_ratio);
  std::uniform_real_distribution<double> coin(0.0, 1.0);

  evaluate_node(tree, 0, env, heuristic);
  queue_actions(tree, 0, queue);
  while (!queue.empty() && tree.size() < max_nodes) {
    const QueueEntry entry = coin(rng) < epsilon ? queue.pop_rand(rng) : queue.pop_max();
    Transition t = env.simulate(tree.node(entry.node).state, entry.action);
    const bool done = t.done;
    const NodeId id = tree.append_child(entry.node, entry.action, std::move(t));
    if (!done) {
      evaluate_node(tree, id, env, heuristic);
      queue_actions(tree, id, queue);
    }
  }
  return tree;
}

SearchTree generate_chain(const Environment& env, const State& initial, Heuristic& heuristic,
                          double epsilon, std::size_t max_nodes, std::mt19937_64& rng) {
  SearchTree tree(initial, env.action_count(), max_nodes);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::uniform_int_distribution<int> any_action(0, env.action_count() - 1);

  evaluate_node(tree, 0, env, heuristic);
  NodeId current = 0;
  while (tree.size() < max_nodes) {
    int action;
    if (coin(rng) < epsilon) {
      action = any_action(rng);
    } else {
      const auto& q = tree.node(current).q;
      action = static_cast<int>(std::max_element(q.begin(), q.end()) - q.begin());
    }
    Transition t = env.simulate(tree.node(current).state, action);
    const bool done = t.done;
    current = tree.append_child(current, action, std::move(t));
    if (done) break;
    evaluate_node(tree, current, env, heuristic);
  }
  return tree;
}

RunMetrics train(Algorithm algorithm, const TrainConfig& config, const Environment& env,
                 HeuristicNet& net, std::mt19937_64& rng,
                 const IterationCallback& on_iteration) {
  config.validate();
  if (net.architecture().actions != env.action_count()) {
    throw ConfigError("network outputs " + std::to_string(net.architecture().actions) +
                      " actions, environment has " + std::to_string(env.action_count()));
  }
  RunMetrics metrics;
  ExperienceBuffer buffer;
  const auto batch = static_cast<std::size_t>(config.batch_size);
  const auto actions = static_cast<std::size_t>(env.action_count());
  std::vector<float> images(batch * kSensorPixels);
  std::vector<float> targets(batch * actions);
  std::vector<float> losses(batch);

  for (int it = 0; it < config.iterations; ++it) {
    IterationMetrics m;
    m.iteration = it;
    m.epsilon = epsilon_at(config, it);

    auto start = Clock::now();
    const State initial = env.reset(rng());
    SearchTree tree = [&] {
      NetHeuristic heuristic(net);
      return algorithm == Algorithm::kAleph
                 ? generate_tree(env, initial, heuristic, m.epsilon, config.max_tree_nodes, rng,
                                 config.gc_ratio)
                 : generate_chain(env, initial, heuristic, m.epsilon, config.max_tree_nodes,
                                  rng);
    }();
    tree.backpropagate(config.gamma, config.unexplored_weight);
    m.gen_ms = elapsed_ms(start);
    m.best_path_reward = tree.best_path_reward();
    m.rank = tree.rank();
    m.efficiency = tree.efficiency();
    m.tree_size = tree.size();

    start = Clock::now();
    const std::size_t harvested = buffer.harvest(tree, env, it);
    buffer.evict_stale(it, config.max_age);
    const std::size_t steps = (harvested + batch - 1) / batch;
    double loss_sum = 0.0;
    for (std::size_t step = 0; step < steps; ++step) {
      const auto picks = buffer.sample(batch, config.replay, rng);
      for (std::size_t i = 0; i < batch; ++i) {
        const Experience& e = buffer[picks[i]];
        std::copy(e.sensors.begin(), e.sensors.end(), images.begin() + i * kSensorPixels);
        std::copy(e.q_target.begin(), e.q_target.end(), targets.begin() + i * actions);
      }
      const float loss =
          net.sgd_step(images, targets, static_cast<float>(config.learning_rate), losses);
      if (!std::isfinite(loss)) {
        throw NonFiniteError("non-finite loss at iteration " + std::to_string(it));
      }
      const std::vector<double> per_item(losses.begin(), losses.end());
      buffer.update_losses(picks, per_item);
      loss_sum += loss;
    }
    m.mean_loss = steps > 0 ? loss_sum / static_cast<double>(steps) : 0.0;
    m.train_ms = elapsed_ms(start);
    m.buffer_size = buffer.size();

    metrics.records.push_back(m);
    if (on_iteration) on_iteration(m, net);
  }
  return metrics;
}

std::string metrics_csv_header() {
  return "iteration,best_path_reward,rank,efficiency,mean_loss,epsilon,gen_ms,train_ms\n";
}

std::string metrics_csv_row(const IterationMetrics& m, bool with_timing) {
  char line[256];
  std::snprintf(line, sizeof line, "%d,%.9g,%zu,%.9g,%.9g,%.9g,%.3f,%.3f\n", m.iteration,
                m.best_path_reward, m.rank, m.efficiency, m.mean_loss, m.epsilon,
                with_timing ? m.gen_ms : 0.0, with_timing ? m.train_ms : 0.0);
  return line;
}

std::vector<double> moving_average(const std::vector<double>& values, std::size_t window) {
  std::vector<double> out(values.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    sum += values[i];
    if (i >= window) sum -= values[i - window];
    out[i] = sum / static_cast<double>(std::min(i + 1, window));
  }
  return out;
}

}  // namespace aleph
