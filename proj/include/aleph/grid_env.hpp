#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "aleph/environment.hpp"

namespace aleph {

enum GridAction : int { kUp = 0, kDown = 1, kLeft = 2, kRight = 3 };
inline constexpr int kGridActions = 4;
inline constexpr double kGridBumpReward = 0.01;

// Deterministic grid. Entering a cell earns that cell's reward; moving into
// the boundary keeps the agent in place and earns kGridBumpReward. Terminal
// cells are absorbing.
struct GridLayout {
  int rows = 1;
  int cols = 1;
  std::vector<double> rewards;  // per cell, > 0
  std::vector<bool> terminal;   // per cell
  int start = 0;                // cell index

  int cell(int row, int col) const { return row * cols + col; }
  std::size_t cells() const { return static_cast<std::size_t>(rows * cols); }
};

// Random size x size layout: small rewards everywhere, one high-reward cell,
// a few low-reward traps, and a start cell at Manhattan distance >= 5 from
// the high-reward cell (when the grid is large enough).
GridLayout random_grid(int size, std::uint64_t seed);

struct GridState {
  int cell = 0;
};

class GridEnv : public Environment {
 public:
  explicit GridEnv(GridLayout layout);

  const GridLayout& layout() const { return layout_; }

  int action_count() const override { return kGridActions; }
  // The layout fixes the start cell; the seed is ignored.
  State reset(std::uint64_t seed) const override;
  Transition simulate(const State& state, int action) const override;
  void sensors(const State& state, std::span<float> image) const override;
  using Environment::sensors;
  std::optional<std::size_t> state_id(const State& state) const override;
  std::size_t state_count() const override { return layout_.cells(); }

  int next_cell(int cell, int action) const;
  Transition step_cell(int cell, int action) const;

 private:
  GridLayout layout_;
};

// Dense action-value table indexed by state id.
struct QTable {
  std::size_t states = 0;
  int actions = 0;
  std::vector<double> values;  // states * actions

  double at(std::size_t state, int action) const {
    return values[state * static_cast<std::size_t>(actions) + static_cast<std::size_t>(action)];
  }
  std::span<const double> row(std::size_t state) const {
    return std::span<const double>(values).subspan(state * static_cast<std::size_t>(actions),
                                                   static_cast<std::size_t>(actions));
  }
};

// Exact Q* by value iteration until the max Bellman residual is < tolerance.
QTable grid_q_star(const GridEnv& env, double gamma, double tolerance = 1e-10);

// A "perfect" heuristic backed by a Q table; needs Environment::state_id.
class TabularHeuristic : public Heuristic {
 public:
  explicit TabularHeuristic(QTable table) : table_(std::move(table)) {}
  void evaluate(const Environment& env, const State& state, std::span<double> q) override;
  const QTable& table() const { return table_; }

 private:
  QTable table_;
};

// Tabular checkpoints share the network checkpoint format with descriptor
// "tabular states=<n> actions=<k>".
std::string tabular_descriptor(const QTable& table);
bool is_tabular_descriptor(const std::string& descriptor);
void save_table(const QTable& table, const std::filesystem::path& path);
QTable load_table(const std::filesystem::path& path);

}  // namespace aleph
