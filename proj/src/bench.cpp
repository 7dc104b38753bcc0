#include "aleph/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <random>

#include "aleph/error.hpp"
#include "aleph/lazy_heap.hpp"
#include "aleph/trainer.hpp"

namespace aleph {

namespace {

using Clock = std::chrono::steady_clock;

std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Median wall time of `run`, repeated at least 3 times and for >= 0.1 s.
double time_median(const std::function<void()>& run) {
  std::vector<double> samples;
  const auto start = Clock::now();
  while (samples.size() < 3 ||
         (std::chrono::duration<double>(Clock::now() - start).count() < 0.1 &&
          samples.size() < 50)) {
    const auto t0 = Clock::now();
    run();
    samples.push_back(std::chrono::duration<double>(Clock::now() - t0).count());
  }
  std::nth_element(samples.begin(), samples.begin() + samples.size() / 2, samples.end());
  return samples[samples.size() / 2];
}

ScalingResult sweep(std::string mode, std::span<const std::size_t> sizes,
                    const std::function<void(std::size_t)>& run, bool n_log_n) {
  if (sizes.size() < 2) throw ConfigError("need at least two sizes to fit an exponent");
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    if (sizes[i] < 2 || (i > 0 && sizes[i] <= sizes[i - 1])) {
      throw ConfigError("sizes must be increasing and at least 2");
    }
  }
  ScalingResult result;
  result.mode = std::move(mode);
  std::vector<double> x, y;
  for (std::size_t n : sizes) {
    const double seconds = time_median([&] { run(n); });
    result.points.push_back({n, seconds});
    const auto dn = static_cast<double>(n);
    x.push_back(n_log_n ? dn * std::log2(dn) : dn);
    y.push_back(seconds);
  }
  result.exponent = fit_loglog_exponent(x, y);
  return result;
}

}  // namespace

double fit_loglog_exponent(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw ShapeError("need >= 2 paired samples");
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= static_cast<double>(x.size());
  my /= static_cast<double>(x.size());
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

State StubEnv::reset(std::uint64_t seed) const { return State(mix(seed)); }

Transition StubEnv::simulate(const State& state, int action) const {
  const auto s = state.as<std::uint64_t>();
  return Transition{State(mix(s ^ static_cast<std::uint64_t>(action + 1))), 1.0, false};
}

void StubEnv::sensors(const State&, std::span<float> image) const {
  std::fill(image.begin(), image.end(), 0.0f);
}

void StubHeuristic::evaluate(const Environment&, const State& state, std::span<double> q) {
  const auto s = state.as<std::uint64_t>();
  for (std::size_t a = 0; a < q.size(); ++a) {
    q[a] = 1.0 + 0.5 * static_cast<double>(mix(s + a) % 1024) / 1024.0;
  }
}

SearchTree rollout_reference_tree(const Environment& env, const State& initial,
                                  Heuristic& heuristic, std::size_t max_nodes) {
  SearchTree tree(initial, env.action_count(), max_nodes);
  heuristic.evaluate(env, tree.node(0).state, tree.mutable_q(0));
  while (tree.size() < max_nodes) {
    NodeId at = 0;
    int action = -1;
    for (;;) {
      const Node& n = tree.node(at);
      double best = -1.0;
      for (int a = 0; a < tree.action_count(); ++a) {
        const double score = n.accumulated + n.q[static_cast<std::size_t>(a)];
        if (score > best) {
          best = score;
          action = a;
        }
      }
      const NodeId next = n.child(action);
      if (next == kNoNode) break;
      if (tree.node(next).done) return tree;
      at = next;
    }
    Transition t = env.simulate(tree.node(at).state, action);
    const bool done = t.done;
    const NodeId id = tree.append_child(at, action, std::move(t));
    if (!done) heuristic.evaluate(env, tree.node(id).state, tree.mutable_q(id));
  }
  return tree;
}

ScalingResult bench_tree_scaling(std::span<const std::size_t> sizes) {
  const StubEnv env;
  return sweep(
      "tree-scaling", sizes,
      [&](std::size_t n) {
        StubHeuristic heuristic;
        std::mt19937_64 rng(1);
        const SearchTree tree = generate_tree(env, env.reset(1), heuristic, 0.0, n, rng);
        if (tree.size() != n) throw Error("stub tree stopped early");
      },
      false);
}

ScalingResult bench_rollout_reference(std::span<const std::size_t> sizes) {
  const StubEnv env;
  return sweep(
      "rollout-reference", sizes,
      [&](std::size_t n) {
        StubHeuristic heuristic;
        const SearchTree tree = rollout_reference_tree(env, env.reset(1), heuristic, n);
        if (tree.size() != n) throw Error("reference tree stopped early");
      },
      false);
}

ScalingResult bench_queue_ops(std::span<const std::size_t> sizes) {
  return sweep(
      "queue-ops", sizes,
      [](std::size_t n) {
        std::mt19937_64 rng(7);
        std::uniform_real_distribution<double> priority(0.0, 1.0);
        LazyHeap queue;
        for (std::size_t i = 0; i < n; ++i) {
          queue.push(static_cast<NodeId>(i), static_cast<int>(i % 35), priority(rng));
        }
        for (std::size_t i = 0; i < n; ++i) {
          if (i % 4 == 0) {
            queue.pop_rand(rng);
          } else {
            queue.pop_max();
          }
        }
      },
      true);
}

}  // namespace aleph
