#include "aleph/grid_env.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <map>
#include <random>

#include "aleph/error.hpp"

using namespace aleph;

namespace {

GridLayout two_cells() {
  GridLayout g;
  g.rows = 1;
  g.cols = 2;
  g.rewards = {0.5, 1.0};
  g.terminal = {false, true};
  g.start = 0;
  return g;
}

// Optimal finite-horizon return by exhaustive recursion over action
// sequences, memoized on (cell, steps left).
class HorizonOracle {
 public:
  HorizonOracle(const GridLayout& g, double gamma) : g_(g), gamma_(gamma) {}

  double q(int cell, int action, int horizon) {
    int row = cell / g_.cols, col = cell % g_.cols;
    if (action == 0) --row;
    if (action == 1) ++row;
    if (action == 2) --col;
    if (action == 3) ++col;
    if (row < 0 || row >= g_.rows || col < 0 || col >= g_.cols) {
      return 0.01 + gamma_ * value(cell, horizon - 1);
    }
    const int next = row * g_.cols + col;
    const double r = g_.rewards[next];
    return g_.terminal[next] ? r : r + gamma_ * value(next, horizon - 1);
  }

  double value(int cell, int horizon) {
    if (horizon == 0) return 0.0;
    const auto key = std::make_pair(cell, horizon);
    if (auto it = memo_.find(key); it != memo_.end()) return it->second;
    double best = 0.0;
    for (int a = 0; a < 4; ++a) best = std::max(best, q(cell, a, horizon));
    memo_[key] = best;
    return best;
  }

 private:
  const GridLayout& g_;
  double gamma_;
  std::map<std::pair<int, int>, double> memo_;
};

}  // namespace

TEST_CASE("one-step grid") {
  GridEnv env(two_cells());
  const auto q = grid_q_star(env, 0.5);
  CHECK(q.at(0, kRight) == doctest::Approx(1.0).epsilon(1e-9));
  const auto t = env.simulate(env.reset(0), kRight);
  CHECK(t.done);
  CHECK(t.reward == 1.0);
  CHECK(t.state.as<GridState>().cell == 1);
}

TEST_CASE("moving into a wall keeps the agent in place") {
  GridEnv env(two_cells());
  for (int a : {kUp, kDown, kLeft}) {
    const auto t = env.simulate(env.reset(0), a);
    CHECK(t.state.as<GridState>().cell == 0);
    CHECK(t.reward == kGridBumpReward);
    CHECK_FALSE(t.done);
  }
  CHECK_THROWS_AS(env.simulate(env.reset(0), 4), Error);
}

TEST_CASE("value iteration matches finite-horizon enumeration") {
  for (std::uint64_t seed : {1, 2, 3}) {
    const GridLayout g = random_grid(4, seed);
    GridEnv env(g);
    const double gamma = 0.9;
    const auto table = grid_q_star(env, gamma);
    HorizonOracle oracle(g, gamma);
    const double r_max = *std::max_element(g.rewards.begin(), g.rewards.end());
    const double bound = std::pow(gamma, 30) * r_max / (1 - gamma);
    for (int c = 0; c < 16; ++c) {
      if (g.terminal[c]) continue;
      for (int a = 0; a < 4; ++a) {
        CHECK(std::abs(table.at(c, a) - oracle.q(c, a, 30)) <= bound);
      }
    }
  }
}

TEST_CASE("Q* satisfies the Bellman optimality equation") {
  const GridLayout g = random_grid(8, 4);
  GridEnv env(g);
  const double gamma = 0.98;
  const auto table = grid_q_star(env, gamma);
  for (int c = 0; c < 64; ++c) {
    if (g.terminal[c]) continue;
    for (int a = 0; a < 4; ++a) {
      const auto t = env.step_cell(c, a);
      const int n = t.state.as<GridState>().cell;
      const auto row = table.row(n);
      const double v = t.done ? 0.0 : *std::max_element(row.begin(), row.end());
      CHECK(table.at(c, a) == doctest::Approx(t.reward + gamma * v).epsilon(1e-8));
    }
  }
}

TEST_CASE("random grids have the documented structure") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const GridLayout g = random_grid(8, seed);
    CHECK(g.cells() == 64);
    int traps = 0, bonus = -1;
    for (int c = 0; c < 64; ++c) {
      CHECK(g.rewards[c] > 0.0);
      traps += g.terminal[c];
      if (g.rewards[c] == 1.0) bonus = c;
    }
    CHECK(traps == 6);
    REQUIRE(bonus >= 0);
    CHECK_FALSE(g.terminal[g.start]);
    CHECK(std::abs(g.start / 8 - bonus / 8) + std::abs(g.start % 8 - bonus % 8) >= 5);
    CHECK_NOTHROW(GridEnv{g});
  }
  CHECK_THROWS_AS(random_grid(1, 0), ConfigError);
}

TEST_CASE("layouts are validated") {
  GridLayout g = two_cells();
  g.rewards[0] = 0.0;
  CHECK_THROWS_AS(GridEnv{g}, ConfigError);
  g = two_cells();
  g.start = 1;
  CHECK_THROWS_AS(GridEnv{g}, ConfigError);
}

TEST_CASE("grid sensors") {
  GridEnv env(random_grid(8, 3));
  const auto image = env.sensors(env.reset(0));
  REQUIRE(image.size() == static_cast<std::size_t>(kSensorPixels));
  for (float v : image) {
    CHECK(v >= 0.0f);
    CHECK(v <= 1.0f);
  }
  const int start = env.layout().start;
  const int px = 84 / 8;
  CHECK(image[(start / 8) * px * 84 + (start % 8) * px] == 1.0f);
  CHECK(env.state_id(env.reset(0)) == static_cast<std::size_t>(start));
  CHECK(env.state_count() == 64);
}

TEST_CASE("tabular heuristic and checkpoint") {
  GridEnv env(random_grid(8, 5));
  const auto table = grid_q_star(env, 0.98);
  TabularHeuristic h(table);
  std::vector<double> q(4);
  h.evaluate(env, env.reset(0), q);
  const auto row = table.row(env.layout().start);
  CHECK(std::equal(q.begin(), q.end(), row.begin()));

  const auto path = std::filesystem::temp_directory_path() / "aleph_qstar.ckpt";
  save_table(table, path);
  const auto loaded = load_table(path);
  CHECK(loaded.states == 64);
  CHECK(loaded.actions == 4);
  for (std::size_t i = 0; i < table.values.size(); ++i) {
    CHECK(loaded.values[i] == static_cast<double>(static_cast<float>(table.values[i])));
  }
  std::filesystem::remove(path);
}
