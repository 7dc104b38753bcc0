#include "aleph/grid_env.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

#include "aleph/error.hpp"
#include "aleph/heuristic_net.hpp"

namespace aleph {

GridLayout random_grid(int size, std::uint64_t seed) {
  if (size < 2) throw ConfigError("grid size must be at least 2");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> small(0.01, 0.2);
  std::uniform_int_distribution<int> any_cell(0, size * size - 1);

  GridLayout g;
  g.rows = g.cols = size;
  g.rewards.resize(g.cells());
  g.terminal.assign(g.cells(), false);
  for (double& r : g.rewards) r = small(rng);

  const int bonus = any_cell(rng);
  g.rewards[static_cast<std::size_t>(bonus)] = 1.0;

  auto distance = [&](int a, int b) {
    return std::abs(a / size - b / size) + std::abs(a % size - b % size);
  };
  const int far = std::min(5, 2 * (size - 1));
  std::vector<int> starts;
  for (int c = 0; c < size * size; ++c) {
    if (distance(c, bonus) >= far) starts.push_back(c);
  }
  g.start = starts[std::uniform_int_distribution<std::size_t>(0, starts.size() - 1)(rng)];

  const int traps = size * size / 10;
  for (int placed = 0; placed < traps;) {
    const int c = any_cell(rng);
    if (c == bonus || c == g.start || g.terminal[static_cast<std::size_t>(c)]) continue;
    g.terminal[static_cast<std::size_t>(c)] = true;
    g.rewards[static_cast<std::size_t>(c)] = 0.01;
    ++placed;
  }
  return g;
}

GridEnv::GridEnv(GridLayout layout) : layout_(std::move(layout)) {
  if (layout_.rows < 1 || layout_.cols < 1 || layout_.rewards.size() != layout_.cells() ||
      layout_.terminal.size() != layout_.cells()) {
    throw ConfigError("inconsistent grid layout");
  }
  if (std::any_of(layout_.rewards.begin(), layout_.rewards.end(),
                  [](double r) { return !(r > 0.0); })) {
    throw ConfigError("grid rewards must be positive");
  }
  if (layout_.start < 0 || static_cast<std::size_t>(layout_.start) >= layout_.cells() ||
      layout_.terminal[static_cast<std::size_t>(layout_.start)]) {
    throw ConfigError("grid start must be a non-terminal cell");
  }
}

State GridEnv::reset(std::uint64_t) const { return State(GridState{layout_.start}); }

int GridEnv::next_cell(int cell, int action) const {
  int row = cell / layout_.cols;
  int col = cell % layout_.cols;
  switch (action) {
    case kUp:
      --row;
      break;
    case kDown:
      ++row;
      break;
    case kLeft:
      --col;
      break;
    case kRight:
      ++col;
      break;
    default:
      throw Error("invalid grid action " + std::to_string(action));
  }
  if (row < 0 || row >= layout_.rows || col < 0 || col >= layout_.cols) return cell;
  return layout_.cell(row, col);
}

Transition GridEnv::step_cell(int cell, int action) const {
  const int next = next_cell(cell, action);
  if (next == cell) return Transition{State(GridState{cell}), kGridBumpReward, false};
  const auto idx = static_cast<std::size_t>(next);
  return Transition{State(GridState{next}), layout_.rewards[idx], layout_.terminal[idx]};
}

Transition GridEnv::simulate(const State& state, int action) const {
  return step_cell(state.as<GridState>().cell, action);
}

std::optional<std::size_t> GridEnv::state_id(const State& state) const {
  return static_cast<std::size_t>(state.as<GridState>().cell);
}

void GridEnv::sensors(const State& state, std::span<float> image) const {
  if (image.size() != static_cast<std::size_t>(kSensorPixels)) {
    throw ShapeError("sensor buffer must hold 84x84 values");
  }
  const int agent = state.as<GridState>().cell;
  const double top = *std::max_element(layout_.rewards.begin(), layout_.rewards.end());
  const int side = std::max(layout_.rows, layout_.cols);
  const int cell_px = std::max(1, kSensorSize / side);
  std::fill(image.begin(), image.end(), 0.0f);
  for (int c = 0; c < static_cast<int>(layout_.cells()); ++c) {
    const auto idx = static_cast<std::size_t>(c);
    float v = static_cast<float>(0.1 + 0.5 * layout_.rewards[idx] / top);
    if (layout_.terminal[idx]) v = 0.05f;
    if (c == agent) v = 1.0f;
    const int r0 = (c / layout_.cols) * cell_px;
    const int c0 = (c % layout_.cols) * cell_px;
    for (int r = r0; r < std::min(r0 + cell_px, kSensorSize); ++r) {
      for (int k = c0; k < std::min(c0 + cell_px, kSensorSize); ++k) {
        image[static_cast<std::size_t>(r * kSensorSize + k)] = v;
      }
    }
  }
}

QTable grid_q_star(const GridEnv& env, double gamma, double tolerance) {
  const GridLayout& g = env.layout();
  QTable table;
  table.states = g.cells();
  table.actions = kGridActions;
  table.values.assign(table.states * kGridActions, 0.0);
  std::vector<double> value(table.states, 0.0);

  for (;;) {
    double residual = 0.0;
    for (std::size_t s = 0; s < table.states; ++s) {
      if (g.terminal[s]) continue;
      for (int a = 0; a < kGridActions; ++a) {
        const int next = env.next_cell(static_cast<int>(s), a);
        const auto n = static_cast<std::size_t>(next);
        double q;
        if (next == static_cast<int>(s)) {
          q = kGridBumpReward + gamma * value[s];
        } else {
          q = g.rewards[n] + (g.terminal[n] ? 0.0 : gamma * value[n]);
        }
        double& slot = table.values[s * kGridActions + static_cast<std::size_t>(a)];
        residual = std::max(residual, std::abs(q - slot));
        slot = q;
      }
    }
    for (std::size_t s = 0; s < table.states; ++s) {
      const auto row = table.row(s);
      value[s] = *std::max_element(row.begin(), row.end());
    }
    if (residual < tolerance) break;
  }
  return table;
}

void TabularHeuristic::evaluate(const Environment& env, const State& state,
                                std::span<double> q) {
  const auto id = env.state_id(state);
  if (!id || *id >= table_.states) {
    throw Error("tabular heuristic needs a discrete state inside its table");
  }
  if (q.size() != static_cast<std::size_t>(table_.actions)) {
    throw ShapeError("heuristic output size mismatch");
  }
  const auto row = table_.row(*id);
  std::copy(row.begin(), row.end(), q.begin());
}

std::string tabular_descriptor(const QTable& table) {
  return "tabular states=" + std::to_string(table.states) +
         " actions=" + std::to_string(table.actions);
}

bool is_tabular_descriptor(const std::string& descriptor) {
  return descriptor.rfind("tabular ", 0) == 0;
}

void save_table(const QTable& table, const std::filesystem::path& path) {
  const std::vector<float> params(table.values.begin(), table.values.end());
  save_checkpoint(path, tabular_descriptor(table), params);
}

QTable load_table(const std::filesystem::path& path) {
  RawCheckpoint raw = read_checkpoint(path);
  QTable table;
  unsigned long states = 0;
  int actions = 0;
  if (std::sscanf(raw.descriptor.c_str(), "tabular states=%lu actions=%d", &states, &actions) !=
          2 ||
      actions < 1) {
    throw CheckpointError("not a tabular checkpoint: " + raw.descriptor);
  }
  table.states = states;
  table.actions = actions;
  if (raw.params.size() != table.states * static_cast<std::size_t>(actions)) {
    throw CheckpointError("truncated tabular checkpoint");
  }
  table.values.assign(raw.params.begin(), raw.params.end());
  return table;
}

}  // namespace aleph
