#include "aleph/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <vector>

#include "aleph/error.hpp"
#include "aleph/grid_env.hpp"

namespace aleph {

namespace pt = boost::property_tree;

namespace {

struct Field {
  std::string key;  // "section.name"
  std::function<void(const pt::ptree&)> read;
  std::function<void(pt::ptree&)> write;
};

template <typename T>
Field field(std::string key, T& ref) {
  return Field{
      key,
      [&ref](const pt::ptree& node) { ref = node.get_value<T>(); },
      [key, &ref](pt::ptree& tree) { tree.put(key, ref); },
  };
}

std::vector<Field> fields(RunConfig& c) {
  auto& d = c.driving;
  auto& t = c.train;
  auto& n = c.net;
  std::vector<Field> f = {
      field("env.kind", c.env_kind),
      field("env.dt", d.dt),
      field("env.wheelbase", d.wheelbase),
      field("env.max_speed", d.max_speed),
      field("env.lane_width", d.lane_width),
      field("env.keep_alive", d.keep_alive),
      field("env.car_length", d.car_length),
      field("env.car_width", d.car_width),
      field("env.car_count", d.car_count),
      field("env.other_speed_min", d.other_speed_min),
      field("env.other_speed_max", d.other_speed_max),
      field("env.spawn_min", d.spawn_min),
      field("env.spawn_max", d.spawn_max),
      field("env.start_speed_min", d.start_speed_min),
      field("env.start_speed_max", d.start_speed_max),
      field("env.pixel_size", d.pixel_size),
      field("env.grid_size", c.grid_size),
      field("env.grid_seed", c.grid_seed),
      field("net.conv1_filters", n.conv1_filters),
      field("net.conv1_kernel", n.conv1_kernel),
      field("net.conv1_stride", n.conv1_stride),
      field("net.conv2_filters", n.conv2_filters),
      field("net.conv2_kernel", n.conv2_kernel),
      field("net.conv2_stride", n.conv2_stride),
      field("net.hidden", n.hidden),
      field("net.seed", c.net_seed),
      field("train.learning_rate", t.learning_rate),
      field("train.gamma", t.gamma),
      field("train.batch_size", t.batch_size),
      field("train.epsilon_start", t.epsilon_start),
      field("train.epsilon_end", t.epsilon_end),
      field("train.iterations", t.iterations),
      field("train.max_tree_nodes", t.max_tree_nodes),
      field("train.max_age", t.max_age),
      field("train.gc_ratio", t.gc_ratio),
      field("train.unexplored_weight", t.unexplored_weight),
      field("train.checkpoint_every", c.checkpoint_every),
      field("train.record_timing", c.record_timing),
      field("train.seed", c.seed),
  };
  f.push_back(Field{
      "train.replay",
      [&t](const pt::ptree& node) {
        const auto v = node.get_value<std::string>();
        if (v == "uniform") {
          t.replay = SampleMode::kUniform;
        } else if (v == "prioritized") {
          t.replay = SampleMode::kLossPrioritized;
        } else {
          throw ConfigError("train.replay must be uniform or prioritized, got " + v);
        }
      },
      [&t](pt::ptree& tree) {
        tree.put("train.replay", t.replay == SampleMode::kUniform ? "uniform" : "prioritized");
      },
  });
  return f;
}

void finalize(RunConfig& c) {
  if (c.env_kind != "driving" && c.env_kind != "grid") {
    throw ConfigError("env.kind must be driving or grid, got " + c.env_kind);
  }
  c.net.input = kSensorSize;
  c.net.actions = c.env_kind == "driving" ? kDrivingActions : kGridActions;
  try {
    c.net.validate();
  } catch (const ShapeError& e) {
    throw ConfigError(e.what());
  }
  c.train.validate();
  if (c.checkpoint_every < 0) throw ConfigError("train.checkpoint_every must be >= 0");
}

RunConfig from_tree(const pt::ptree& tree) {
  RunConfig config;
  auto table = fields(config);
  std::set<std::string> known;
  for (const auto& f : table) known.insert(f.key);
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw ConfigError("key outside a section: " + section);
    for (const auto& [name, value] : body) {
      if (!known.count(section + "." + name)) {
        throw ConfigError("unknown config key " + section + "." + name);
      }
    }
  }
  for (const auto& f : table) {
    const auto node = tree.get_child_optional(pt::ptree::path_type(f.key, '.'));
    if (!node) continue;
    try {
      f.read(*node);
    } catch (const pt::ptree_error&) {
      throw ConfigError("bad value for " + f.key + ": " + node->data());
    }
  }
  finalize(config);
  return config;
}

}  // namespace

RunConfig parse_config(const std::string& text) {
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  return from_tree(tree);
}

RunConfig load_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw ConfigError("config not found: " + path.string());
  }
  pt::ptree tree;
  try {
    pt::read_ini(path.string(), tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  return from_tree(tree);
}

std::string format_config(const RunConfig& config) {
  RunConfig copy = config;
  pt::ptree tree;
  for (const auto& f : fields(copy)) f.write(tree);
  std::ostringstream out;
  pt::write_ini(out, tree);
  return out.str();
}

void save_config(const RunConfig& config, const std::filesystem::path& path) {
  RunConfig copy = config;
  pt::ptree tree;
  for (const auto& f : fields(copy)) f.write(tree);
  pt::write_ini(path.string(), tree);
}

std::unique_ptr<Environment> make_environment(const RunConfig& config) {
  if (config.env_kind == "grid") {
    return std::make_unique<GridEnv>(random_grid(config.grid_size, config.grid_seed));
  }
  return std::make_unique<DrivingEnv>(config.driving);
}

std::uint64_t network_seed(const RunConfig& config) {
  std::seed_seq seq{static_cast<std::uint32_t>(config.net_seed),
                    static_cast<std::uint32_t>(config.net_seed >> 32),
                    static_cast<std::uint32_t>(config.seed),
                    static_cast<std::uint32_t>(config.seed >> 32)};
  std::mt19937_64 rng(seq);
  return rng();
}

}  // namespace aleph
