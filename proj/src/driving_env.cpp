#include "aleph/driving_env.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "aleph/error.hpp"

namespace aleph {

namespace {

constexpr std::array<double, kSteerLevels> kSteerTargets = {-0.3, -0.2, -0.1, 0.0,
                                                            0.1,  0.2,  0.3};
constexpr std::array<double, kAccelLevels> kAccelerations = {-4.0, -2.0, 0.0, 2.0, 4.0};

struct Box {
  double cx, cy, heading, half_length, half_width;
};

// Separating-axis test for two oriented rectangles.
bool overlap(const Box& a, const Box& b) {
  const double dx = b.cx - a.cx;
  const double dy = b.cy - a.cy;
  const std::array<double, 2> headings = {a.heading, b.heading};
  for (double h : headings) {
    for (int k = 0; k < 2; ++k) {
      const double ux = k == 0 ? std::cos(h) : -std::sin(h);
      const double uy = k == 0 ? std::sin(h) : std::cos(h);
      auto radius = [ux, uy](const Box& box) {
        const double c = std::cos(box.heading);
        const double s = std::sin(box.heading);
        return box.half_length * std::abs(c * ux + s * uy) +
               box.half_width * std::abs(-s * ux + c * uy);
      };
      if (std::abs(dx * ux + dy * uy) > radius(a) + radius(b)) return false;
    }
  }
  return true;
}

}  // namespace

DrivingEnv::DrivingEnv(DrivingConfig config) : config_(config) {
  if (config_.car_count < 0 || config_.car_count > kMaxCars) {
    throw ConfigError("car_count must be within [0, " + std::to_string(kMaxCars) + "]");
  }
  if (!(config_.dt > 0.0) || !(config_.keep_alive > 0.0) || !(config_.max_speed > 0.0)) {
    throw ConfigError("dt, keep_alive and max_speed must be positive");
  }
}

double DrivingEnv::steer_target(int action) {
  return kSteerTargets[static_cast<std::size_t>(action / kAccelLevels)];
}

double DrivingEnv::acceleration(int action) {
  return kAccelerations[static_cast<std::size_t>(action % kAccelLevels)];
}

double DrivingEnv::lane_center(int lane) const {
  return lane == 0 ? -0.5 * config_.lane_width : 0.5 * config_.lane_width;
}

State DrivingEnv::reset(std::uint64_t seed) const {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  DrivingState s;
  const int lane = unit(rng) < 0.5 ? 0 : 1;
  s.y = lane_center(lane);
  s.speed = uniform(config_.start_speed_min, config_.start_speed_max);
  s.car_count = config_.car_count;
  for (int i = 0; i < s.car_count; ++i) {
    Car car;
    // Keep spawned cars apart from the ones already placed in the same lane.
    for (int attempt = 0; attempt < 64; ++attempt) {
      car.lane = unit(rng) < 0.5 ? 0 : 1;
      car.start_x = uniform(config_.spawn_min, config_.spawn_max);
      const bool clear =
          std::none_of(s.cars.begin(), s.cars.begin() + i, [&](const Car& other) {
            return other.lane == car.lane &&
                   std::abs(other.start_x - car.start_x) < 2.0 * config_.car_length;
          });
      if (clear) break;
    }
    car.speed = uniform(config_.other_speed_min, config_.other_speed_max);
    s.cars[static_cast<std::size_t>(i)] = car;
  }
  return State(s);
}

double DrivingEnv::step_reward(const DrivingState& s) const {
  const double half_lane = 0.5 * config_.lane_width;
  const double offset =
      std::min(std::abs(s.y - lane_center(0)), std::abs(s.y - lane_center(1)));
  const double centered = std::max(0.0, 1.0 - offset / half_lane);
  const double aligned = std::max(0.0, std::cos(s.heading));
  return config_.dt * (s.speed * centered * aligned + config_.keep_alive);
}

bool DrivingEnv::off_road(const DrivingState& s) const {
  return std::abs(s.y) > config_.lane_width;
}

bool DrivingEnv::collided(const DrivingState& s) const {
  const Box actor{s.x, s.y, s.heading, 0.5 * config_.car_length, 0.5 * config_.car_width};
  for (int i = 0; i < s.car_count; ++i) {
    const Car& car = s.cars[static_cast<std::size_t>(i)];
    const double cx = s.car_x(car);
    if (std::abs(cx - s.x) > 2.0 * config_.car_length) continue;
    const Box other{cx, lane_center(car.lane), 0.0, 0.5 * config_.car_length,
                    0.5 * config_.car_width};
    if (overlap(actor, other)) return true;
  }
  return false;
}

Transition DrivingEnv::simulate(const State& state, int action) const {
  if (action < 0 || action >= kDrivingActions) {
    throw Error("invalid driving action " + std::to_string(action));
  }
  DrivingState s = state.as<DrivingState>();
  const double dt = config_.dt;
  s.steer = steer_target(action);
  s.speed = std::clamp(s.speed + acceleration(action) * dt, 0.0, config_.max_speed);
  s.x += s.speed * std::cos(s.heading) * dt;
  s.y += s.speed * std::sin(s.heading) * dt;
  s.heading += s.speed / config_.wheelbase * std::tan(s.steer) * dt;
  s.time += dt;

  const bool done = off_road(s) || collided(s);
  const double reward = done ? config_.keep_alive * dt : step_reward(s);
  return Transition{State(s), reward, done};
}

void DrivingEnv::sensors(const State& state, std::span<float> image) const {
  if (image.size() != static_cast<std::size_t>(kSensorPixels)) {
    throw ShapeError("sensor buffer must hold 84x84 values");
  }
  const auto& s = state.as<DrivingState>();
  const double px = config_.pixel_size;
  const double half = 0.5 * kSensorSize;
  const double v_rel = s.speed / config_.max_speed;
  const auto background = static_cast<float>(0.1 + 0.3 * v_rel);

  // Rows run against the driving direction (forward is up), columns along +y.
  auto world_x = [&](int row) { return s.x + (half - (row + 0.5)) * px; };
  auto world_y = [&](int col) { return s.y + ((col + 0.5) - half) * px; };

  std::array<float, kSensorSize> column_base{};
  for (int c = 0; c < kSensorSize; ++c) {
    const double y = world_y(c);
    float v = std::abs(y) <= config_.lane_width ? static_cast<float>(config_.road_intensity)
                                                : background;
    for (double line : {-config_.lane_width, 0.0, config_.lane_width}) {
      if (std::abs(y - line) < 0.5 * px) v = static_cast<float>(config_.marking_intensity);
    }
    column_base[static_cast<std::size_t>(c)] = v;
  }
  for (int r = 0; r < kSensorSize; ++r) {
    std::copy(column_base.begin(), column_base.end(),
              image.begin() + static_cast<std::ptrdiff_t>(r) * kSensorSize);
  }

  auto fill_box = [&](const Box& box, float value) {
    const double reach = std::hypot(box.half_length, box.half_width);
    const int r0 =
        std::max(0, static_cast<int>(std::floor(half - (box.cx - s.x + reach) / px)));
    const int r1 = std::min(kSensorSize - 1,
                            static_cast<int>(std::ceil(half - (box.cx - s.x - reach) / px)));
    const int c0 =
        std::max(0, static_cast<int>(std::floor(half + (box.cy - s.y - reach) / px)));
    const int c1 = std::min(kSensorSize - 1,
                            static_cast<int>(std::ceil(half + (box.cy - s.y + reach) / px)));
    const double ch = std::cos(box.heading);
    const double sh = std::sin(box.heading);
    for (int r = r0; r <= r1; ++r) {
      const double dx = world_x(r) - box.cx;
      for (int c = c0; c <= c1; ++c) {
        const double dy = world_y(c) - box.cy;
        if (std::abs(ch * dx + sh * dy) <= box.half_length &&
            std::abs(-sh * dx + ch * dy) <= box.half_width) {
          image[static_cast<std::size_t>(r * kSensorSize + c)] = value;
        }
      }
    }
  };

  const double view = half * px + config_.car_length;
  for (int i = 0; i < s.car_count; ++i) {
    const Car& car = s.cars[static_cast<std::size_t>(i)];
    const double cx = s.car_x(car);
    if (std::abs(cx - s.x) > view) continue;
    const double rel = std::clamp((car.speed - s.speed) / config_.max_speed, -1.0, 1.0);
    fill_box(
        Box{cx, lane_center(car.lane), 0.0, 0.5 * config_.car_length, 0.5 * config_.car_width},
        static_cast<float>(0.5 + 0.25 * rel));
  }
  fill_box(Box{s.x, s.y, s.heading, 0.5 * config_.car_length, 0.5 * config_.car_width},
           static_cast<float>(0.5 + 0.5 * v_rel));

  const auto edge = static_cast<float>(0.5 + 0.5 * (s.steer / config_.max_steer));
  for (int r = 0; r < kSensorSize; ++r) {
    float* row = image.data() + static_cast<std::ptrdiff_t>(r) * kSensorSize;
    row[0] = row[1] = row[kSensorSize - 2] = row[kSensorSize - 1] = edge;
  }
}

}  // namespace aleph
