// aleph: train, evaluate and benchmark best-first search with a learned
// heuristic.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or config error,
// 3 checkpoint mismatch.

#include <CLI11.hpp>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "aleph/bench.hpp"
#include "aleph/config.hpp"
#include "aleph/error.hpp"
#include "aleph/grid_env.hpp"
#include "aleph/heuristic_net.hpp"
#include "aleph/policy.hpp"
#include "aleph/trainer.hpp"

namespace fs = std::filesystem;
using namespace aleph;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;
constexpr int kExitCheckpoint = 3;

struct UsageError : Error {
  using Error::Error;
};

std::size_t worker_count(std::size_t jobs) {
  std::size_t workers = std::max(1u, std::thread::hardware_concurrency());
  if (const char* cap = std::getenv("ALEPH_THREADS")) {
    const long v = std::strtol(cap, nullptr, 10);
    if (v > 0) workers = std::min(workers, static_cast<std::size_t>(v));
  }
  return std::min(workers, jobs);
}

void write_pgm(const fs::path& path, const std::vector<float>& image) {
  std::ofstream out(path, std::ios::binary);
  out << "P5\n" << kSensorSize << ' ' << kSensorSize << "\n255\n";
  for (float v : image) {
    out.put(static_cast<char>(
        static_cast<unsigned char>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f))));
  }
}

// --------------------------------------------------------------------------

struct TrainArgs {
  std::string config;
  std::string out;
  std::string algo = "aleph";
  std::optional<std::uint64_t> seed;
};

int run_train(const TrainArgs& args) {
  RunConfig config = load_config(args.config);
  if (args.seed) config.seed = *args.seed;
  const Algorithm algo = args.algo == "dqn" ? Algorithm::kNStepDqn : Algorithm::kAleph;

  const fs::path out(args.out);
  fs::create_directories(out);
  save_config(config, out / "config.ini");

  const auto env = make_environment(config);
  std::mt19937_64 rng(config.seed);
  HeuristicNet net = HeuristicNet::initialized(config.net, network_seed(config));

  std::ofstream metrics(out / "metrics.csv", std::ios::trunc);
  std::ofstream timing(out / "timing.csv", std::ios::trunc);
  if (!metrics || !timing) throw Error("cannot write into " + out.string());
  metrics << metrics_csv_header() << std::flush;
  timing << "iteration,gen_ms,train_ms,tree_size,buffer_size\n";

  std::cout << "training " << args.algo << " for " << config.train.iterations << " iterations, "
            << config.train.max_tree_nodes << " nodes per tree\n";
  train(algo, config.train, *env, net, rng,
        [&](const IterationMetrics& m, const HeuristicNet& current) {
          metrics << metrics_csv_row(m, config.record_timing) << std::flush;
          timing << m.iteration << ',' << m.gen_ms << ',' << m.train_ms << ',' << m.tree_size
                 << ',' << m.buffer_size << '\n';
          if (config.checkpoint_every > 0 && (m.iteration + 1) % config.checkpoint_every == 0) {
            save(current, out / ("checkpoint_" + std::to_string(m.iteration + 1) + ".ckpt"));
          }
          std::printf("iter %4d  reward %9.3f  rank %5zu  eff %.3f  loss %9.4f  eps %.3f\n",
                      m.iteration, m.best_path_reward, m.rank, m.efficiency, m.mean_loss,
                      m.epsilon);
          std::fflush(stdout);
        });
  save(net, out / "final.ckpt");
  std::cout << "wrote " << (out / "metrics.csv").string() << " and "
            << (out / "final.ckpt").string() << '\n';
  return 0;
}

// --------------------------------------------------------------------------

struct EvalArgs {
  std::string checkpoint;
  std::string config;
  std::string policy = "greedy";
  std::size_t budget = 50;
  int episodes = 20;
  std::uint64_t seed = 1;
  int steps = 500;
  std::string out = ".";
  std::string dump_sensors;
};

int run_eval(const EvalArgs& args) {
  if (args.episodes < 1) throw UsageError("--episodes must be at least 1");
  if (args.steps < 1) throw UsageError("--steps must be at least 1");
  if (args.policy == "tree" && args.budget < 2) throw UsageError("--budget must be at least 2");

  RunConfig config = args.config.empty() ? RunConfig{} : load_config(args.config);
  const auto env = make_environment(config);

  // Either a tabular Q checkpoint or a network checkpoint.
  const RawCheckpoint raw = read_checkpoint(args.checkpoint);
  std::optional<QTable> table;
  std::optional<HeuristicNet> net;
  if (is_tabular_descriptor(raw.descriptor)) {
    table = load_table(args.checkpoint);
    if (table->states != env->state_count() || table->actions != env->action_count()) {
      throw CheckpointError("tabular checkpoint does not match the environment");
    }
  } else {
    net = load(args.checkpoint, config.net);
  }
  auto make_heuristic = [&]() -> std::unique_ptr<Heuristic> {
    if (table) return std::make_unique<TabularHeuristic>(*table);
    return std::make_unique<NetHeuristic>(*net);
  };

  std::vector<std::uint64_t> seeds(static_cast<std::size_t>(args.episodes));
  std::mt19937_64 seeder(args.seed);
  for (auto& s : seeds) s = seeder();

  std::vector<EpisodeResult> results(seeds.size());
  auto run_one = [&](std::size_t k) {
    auto heuristic = make_heuristic();
    Policy policy = [&](const State& s) {
      return args.policy == "tree" ? act_tree(*heuristic, *env, s, args.budget)
                                   : act_greedy(*heuristic, *env, s);
    };
    if (k == 0 && !args.dump_sensors.empty()) {
      fs::create_directories(args.dump_sensors);
      int frame = 0;
      Policy recording = [&](const State& s) {
        char name[32];
        std::snprintf(name, sizeof name, "step_%04d.pgm", frame++);
        write_pgm(fs::path(args.dump_sensors) / name, env->sensors(s));
        return policy(s);
      };
      results[k] = run_episode(*env, seeds[k], recording, args.steps);
    } else {
      results[k] = run_episode(*env, seeds[k], policy, args.steps);
    }
  };
  const std::size_t workers = worker_count(seeds.size());
  std::vector<std::thread> pool;
  std::exception_ptr failure;
  std::mutex failure_lock;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t k = w; k < seeds.size(); k += workers) {
        try {
          run_one(k);
        } catch (...) {
          std::lock_guard lock(failure_lock);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);

  fs::create_directories(args.out);
  std::ofstream csv(fs::path(args.out) / "eval.csv", std::ios::trunc);
  csv << "episode,seed,reward,steps,done\n";
  double total = 0.0;
  for (std::size_t k = 0; k < results.size(); ++k) {
    const auto& r = results[k];
    char line[160];
    std::snprintf(line, sizeof line, "%zu,%llu,%.17g,%d,%d\n", k,
                  static_cast<unsigned long long>(seeds[k]), r.total_reward, r.steps,
                  r.done ? 1 : 0);
    csv << line;
    std::printf("episode %3zu  reward %10.4f  steps %4d%s\n", k, r.total_reward, r.steps,
                r.done ? "  (terminated)" : "");
    total += r.total_reward;
  }
  std::printf("mean reward %.6f over %zu episodes (%s policy)\n",
              total / static_cast<double>(results.size()), results.size(), args.policy.c_str());
  return 0;
}

// --------------------------------------------------------------------------

struct BenchArgs {
  std::string mode;
  std::string sizes;
  std::string out = "bench.csv";
};

int run_bench(const BenchArgs& args) {
  std::vector<std::size_t> sizes;
  std::stringstream list(args.sizes);
  for (std::string item; std::getline(list, item, ',');) {
    try {
      std::size_t used = 0;
      const unsigned long long v = std::stoull(item, &used);
      if (used != item.size() || v == 0) throw std::invalid_argument(item);
      sizes.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      throw UsageError("--sizes must be a comma-separated list of positive integers");
    }
  }
  if (sizes.size() < 2 || !std::is_sorted(sizes.begin(), sizes.end()) ||
      std::adjacent_find(sizes.begin(), sizes.end()) != sizes.end()) {
    throw UsageError("--sizes needs at least two strictly increasing values");
  }
  ScalingResult result;
  if (args.mode == "tree-scaling") {
    result = bench_tree_scaling(sizes);
  } else if (args.mode == "queue-ops") {
    result = bench_queue_ops(sizes);
  } else {
    result = bench_rollout_reference(sizes);
  }
  std::ofstream csv(args.out, std::ios::trunc);
  csv << "mode,size,seconds\n";
  for (const auto& p : result.points) {
    csv << result.mode << ',' << p.size << ',' << p.seconds << '\n';
    std::printf("%-18s size %9zu  %.6f s\n", result.mode.c_str(), p.size, p.seconds);
  }
  std::printf("fitted log-log exponent: %.4f%s\n", result.exponent,
              args.mode == "queue-ops" ? " (against N log N)" : "");
  return 0;
}

// --------------------------------------------------------------------------

struct ExportArgs {
  std::string config;
  std::string out;
  double gamma = 0.98;
};

int run_export_qstar(const ExportArgs& args) {
  const RunConfig config = load_config(args.config);
  if (config.env_kind != "grid") throw UsageError("export-qstar needs env.kind = grid");
  const GridEnv env(random_grid(config.grid_size, config.grid_seed));
  save_table(grid_q_star(env, args.gamma), args.out);
  std::cout << "wrote exact Q* table to " << args.out << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Best-first tree search with a trainable neural heuristic"};
  app.require_subcommand(1);

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Train a heuristic");
  train_cmd->add_option("--config", train_args.config, "Run config file")->required();
  train_cmd->add_option("--out", train_args.out, "Output directory")->required();
  train_cmd->add_option("--algo", train_args.algo, "aleph or dqn")
      ->check(CLI::IsMember({"aleph", "dqn"}));
  train_cmd->add_option("--seed", train_args.seed, "Master seed (overrides train.seed)");

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval_cmd->add_option("--checkpoint", eval_args.checkpoint, "Checkpoint file")->required();
  eval_cmd->add_option("--config", eval_args.config, "Run config (environment and net)");
  eval_cmd->add_option("--policy", eval_args.policy, "greedy or tree")
      ->check(CLI::IsMember({"greedy", "tree"}));
  eval_cmd->add_option("--budget", eval_args.budget, "Tree budget in nodes");
  eval_cmd->add_option("--episodes", eval_args.episodes, "Number of episodes");
  eval_cmd->add_option("--seed", eval_args.seed, "Episode seed stream");
  eval_cmd->add_option("--steps", eval_args.steps, "Maximum steps per episode");
  eval_cmd->add_option("--out", eval_args.out, "Directory for eval.csv");
  eval_cmd->add_option("--dump-sensors", eval_args.dump_sensors,
                       "Write the first episode's sensors as PGM frames here");

  BenchArgs bench_args;
  auto* bench_cmd = app.add_subcommand("bench", "Timing sweeps with a fitted exponent");
  bench_cmd
      ->add_option("--mode", bench_args.mode, "tree-scaling, queue-ops or rollout-reference")
      ->required()
      ->check(CLI::IsMember({"tree-scaling", "queue-ops", "rollout-reference"}));
  bench_cmd->add_option("--sizes", bench_args.sizes, "Comma-separated sizes")->required();
  bench_cmd->add_option("--out", bench_args.out, "Timing CSV path");

  ExportArgs export_args;
  auto* export_cmd =
      app.add_subcommand("export-qstar", "Write the exact gridworld Q* as a checkpoint");
  export_cmd->add_option("--config", export_args.config, "Grid run config")->required();
  export_cmd->add_option("--out", export_args.out, "Checkpoint path")->required();
  export_cmd->add_option("--gamma", export_args.gamma, "Discount factor");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*train_cmd) return run_train(train_args);
    if (*eval_cmd) return run_eval(eval_args);
    if (*bench_cmd) return run_bench(bench_args);
    if (*export_cmd) return run_export_qstar(export_args);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ConfigError& e) {
    std::cerr << e.what() << '\n';
    return kExitUsage;
  } catch (const CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << '\n';
    return kExitCheckpoint;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}
