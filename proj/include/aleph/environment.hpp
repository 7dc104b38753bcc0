#pragma once

#include <any>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace aleph {

inline constexpr int kSensorSize = 84;
inline constexpr int kSensorPixels = kSensorSize * kSensorSize;

// Opaque, immutable environment snapshot. Any stored state can be branched
// again, so environments must never mutate through it.
class State {
 public:
  State() = default;
  template <typename T>
  explicit State(T value) : value_(std::move(value)) {}

  template <typename T>
  const T& as() const {
    return std::any_cast<const T&>(value_);
  }

  bool empty() const { return !value_.has_value(); }

 private:
  std::any value_;
};

struct Transition {
  State state;
  double reward = 0.0;
  bool done = false;
};

// Environments are stateless value objects: everything a run needs lives in
// the returned State snapshots. simulate() must be pure and return reward > 0.
class Environment {
 public:
  virtual ~Environment() = default;

  virtual int action_count() const = 0;
  virtual State reset(std::uint64_t seed) const = 0;
  virtual Transition simulate(const State& state, int action) const = 0;

  // Writes a kSensorSize x kSensorSize row-major image with values in [0, 1].
  virtual void sensors(const State& state, std::span<float> image) const = 0;

  // Discrete environments expose a dense state id for tabular heuristics.
  virtual std::optional<std::size_t> state_id(const State&) const { return std::nullopt; }
  virtual std::size_t state_count() const { return 0; }

  std::vector<float> sensors(const State& state) const {
    std::vector<float> image(kSensorPixels);
    sensors(state, image);
    return image;
  }
};

// Maps a state to a nonnegative action-value vector of length action_count().
class Heuristic {
 public:
  virtual ~Heuristic() = default;
  virtual void evaluate(const Environment& env, const State& state, std::span<double> q) = 0;
};

}  // namespace aleph
