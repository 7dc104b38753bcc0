#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>

#include "aleph/driving_env.hpp"
#include "aleph/environment.hpp"
#include "aleph/heuristic_net.hpp"
#include "aleph/trainer.hpp"

namespace aleph {

// Everything a run needs. Stored as flat `key = value` text in [env], [net]
// and [train] sections.
struct RunConfig {
  std::string env_kind = "driving";  // driving | grid
  DrivingConfig driving;
  int grid_size = 8;
  std::uint64_t grid_seed = 1;

  Architecture net;  // actions follow the environment
  std::uint64_t net_seed = 1;

  TrainConfig train;
  int checkpoint_every = 0;    // 0 disables periodic checkpoints
  bool record_timing = false;  // wall-clock columns in metrics.csv
  std::uint64_t seed = 1;
};

// Throws ConfigError for unreadable files, unknown keys or bad values.
RunConfig load_config(const std::filesystem::path& path);
RunConfig parse_config(const std::string& text);
void save_config(const RunConfig& config, const std::filesystem::path& path);
std::string format_config(const RunConfig& config);

std::unique_ptr<Environment> make_environment(const RunConfig& config);

// Initialization seed of the network for a run: derived from both net_seed
// and the run seed so every run seed starts from different weights.
std::uint64_t network_seed(const RunConfig& config);

}  // namespace aleph
