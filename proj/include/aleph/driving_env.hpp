#pragma once

#include <array>
#include <cstdint>
#include <span>

#include "aleph/environment.hpp"

namespace aleph {

// Every constant of the driving simulator lives here so experiments can vary
// them from the run config.
struct DrivingConfig {
  double dt = 0.1;          // s
  double wheelbase = 2.5;   // m
  double max_speed = 20.0;  // m/s
  double max_steer = 0.3;   // rad
  double lane_width = 3.5;  // m, two lanes
  double keep_alive = 0.1;  // reward per second, always earned
  double car_length = 4.5;  // m
  double car_width = 1.8;   // m
  int car_count = 4;
  double other_speed_min = 5.0;   // m/s
  double other_speed_max = 15.0;  // m/s
  double spawn_min = 15.0;        // m ahead of the actor
  double spawn_max = 120.0;
  double start_speed_min = 5.0;
  double start_speed_max = 15.0;
  double pixel_size = 0.5;  // m per pixel

  // Sensor palette.
  double road_intensity = 0.4;
  double marking_intensity = 0.9;
};

inline constexpr int kSteerLevels = 7;
inline constexpr int kAccelLevels = 5;
inline constexpr int kDrivingActions = kSteerLevels * kAccelLevels;
inline constexpr int kMaxCars = 8;

struct Car {
  int lane = 0;
  double start_x = 0.0;  // longitudinal position at time 0
  double speed = 0.0;
};

struct DrivingState {
  double x = 0.0;
  double y = 0.0;        // lateral, 0 at the road center, lanes at +-lane/2
  double heading = 0.0;  // rad, 0 along the road
  double speed = 0.0;
  double steer = 0.0;
  double time = 0.0;
  int car_count = 0;
  std::array<Car, kMaxCars> cars{};

  double car_x(const Car& car) const { return car.start_x + car.speed * time; }
};

// Straight two-lane road with constant-speed traffic and a kinematic bicycle
// actor. Action = 5 * steer_index + accel_index.
class DrivingEnv : public Environment {
 public:
  explicit DrivingEnv(DrivingConfig config = {});

  const DrivingConfig& config() const { return config_; }

  int action_count() const override { return kDrivingActions; }
  State reset(std::uint64_t seed) const override;
  Transition simulate(const State& state, int action) const override;
  void sensors(const State& state, std::span<float> image) const override;
  using Environment::sensors;

  static double steer_target(int action);
  static double acceleration(int action);

  double lane_center(int lane) const;
  // Pose-level pieces of the model, exposed for tests.
  double step_reward(const DrivingState& s) const;
  bool off_road(const DrivingState& s) const;
  bool collided(const DrivingState& s) const;

 private:
  DrivingConfig config_;
};

}  // namespace aleph
