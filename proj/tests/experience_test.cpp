#include "aleph/experience.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "aleph/error.hpp"
#include "test_support.hpp"

using namespace aleph;
using aleph::testing::CountingEnv;

namespace {

Experience item(int birth, double loss = 0.0, bool trained = false) {
  Experience e;
  e.q_target = {1.0f, 2.0f};
  e.sensors = {0.5f};
  e.birth_iteration = birth;
  e.last_loss = loss;
  e.trained = trained;
  return e;
}

// Root plus a 92-node chain of live nodes, then 7 terminal leaves.
SearchTree tree_with_terminals(const CountingEnv& env) {
  SearchTree tree(env.reset(1), 3, 100);
  NodeId id = 0;
  for (int i = 0; i < 92; ++i)
    id = tree.append_child(id, 0, Transition{env.reset(i), 1.0, false});
  for (NodeId parent = 0; parent < 7; ++parent) {
    tree.append_child(parent, 1, Transition{env.reset(parent), 1.0, true});
  }
  return tree;
}

}  // namespace

TEST_CASE("harvest skips terminal nodes") {
  CountingEnv env(3);
  SearchTree tree = tree_with_terminals(env);
  REQUIRE(tree.size() == 100);
  tree.backpropagate(0.9);
  ExperienceBuffer buffer;
  CHECK(buffer.harvest(tree, env, 0) == 93);
  CHECK(buffer.size() == 93);
  CHECK(buffer.harvest(tree, env, 1) == 93);
  CHECK(buffer.size() == 186);
  CHECK(buffer[0].q_target.size() == 3);
  CHECK(buffer[0].sensors.size() == static_cast<std::size_t>(kSensorPixels));
}

TEST_CASE("harvest copies backed-up targets") {
  CountingEnv env(2);
  SearchTree tree(env.reset(0), 2, 10);
  tree.append_child(0, 0, Transition{env.reset(1), 0.5, false});
  tree.backpropagate(0.9);
  ExperienceBuffer buffer;
  buffer.harvest(tree, env, 3);
  CHECK(buffer[0].q_target[0] == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(buffer[0].birth_iteration == 3);
}

TEST_CASE("harvest of a root-only tree yields one experience") {
  CountingEnv env(2);
  SearchTree tree(env.reset(0), 2, 10);
  tree.backpropagate(0.9);
  ExperienceBuffer buffer;
  CHECK(buffer.harvest(tree, env, 0) == 1);
}

TEST_CASE("harvest requires backpropagation") {
  CountingEnv env(2);
  SearchTree tree(env.reset(0), 2, 10);
  ExperienceBuffer buffer;
  CHECK_THROWS_AS(buffer.harvest(tree, env, 0), TreeError);
}

TEST_CASE("evict_stale removes experiences past max_age") {
  ExperienceBuffer buffer;
  for (int birth : {9, 8, 4, 0}) buffer.add(item(birth));  // ages 0, 1, 5, 9
  CHECK(buffer.evict_stale(9, 4) == 2);
  CHECK(buffer.size() == 2);

  ExperienceBuffer keep;
  keep.add(item(0));
  CHECK(keep.evict_stale(20, 20) == 0);
  CHECK(keep.evict_stale(21, 20) == 1);
  CHECK_THROWS_AS(keep.evict_stale(0, 0), ConfigError);
}

TEST_CASE("samples never include evicted experiences") {
  ExperienceBuffer buffer;
  for (int birth = 0; birth < 30; ++birth) buffer.add(item(birth));
  buffer.evict_stale(29, 10);
  std::mt19937_64 rng(1);
  for (auto mode : {SampleMode::kUniform, SampleMode::kLossPrioritized}) {
    for (std::size_t i : buffer.sample(10000, mode, rng)) {
      CHECK(29 - buffer[i].birth_iteration <= 10);
    }
  }
}

TEST_CASE("sampling draws with replacement") {
  ExperienceBuffer buffer;
  buffer.add(item(0));
  std::mt19937_64 rng(2);
  const auto picks = buffer.sample(64, SampleMode::kUniform, rng);
  CHECK(picks.size() == 64);
  for (auto p : picks) CHECK(p == 0);
  ExperienceBuffer empty;
  CHECK_THROWS_AS(empty.sample(4, SampleMode::kUniform, rng), EmptyError);
}

TEST_CASE("uniform sampling is uniform") {
  ExperienceBuffer buffer;
  for (int i = 0; i < 5; ++i) buffer.add(item(0, i * 3.0, true));
  std::mt19937_64 rng(3);
  std::vector<long> counts(5, 0);
  for (auto p : buffer.sample(100000, SampleMode::kUniform, rng)) counts[p]++;
  CHECK(aleph::testing::chi_square_uniform(counts) < 18.47);  // 4 dof, p = 0.001
}

TEST_CASE("prioritized sampling follows loss plus floor") {
  ExperienceBuffer buffer;
  buffer.add(item(0, 0.0, true));
  buffer.add(item(0, 0.0, true));
  buffer.add(item(0, 10.0, true));
  std::mt19937_64 rng(4);
  const int draws = 100000;
  long third = 0;
  for (auto p : buffer.sample(draws, SampleMode::kLossPrioritized, rng)) third += p == 2;
  const double p = 10.001 / 10.003;
  const double sigma = std::sqrt(draws * p * (1 - p));
  CHECK(std::abs(third - draws * p) <= 3 * sigma);
}

TEST_CASE("prioritized sampling with equal losses is uniform") {
  ExperienceBuffer buffer;
  for (int i = 0; i < 4; ++i) buffer.add(item(0, 0.7, true));
  std::mt19937_64 rng(5);
  std::vector<long> counts(4, 0);
  for (auto p : buffer.sample(80000, SampleMode::kLossPrioritized, rng)) counts[p]++;
  CHECK(aleph::testing::chi_square_uniform(counts) < 16.27);  // 3 dof, p = 0.001
}

TEST_CASE("untrained experiences take the maximum priority") {
  ExperienceBuffer buffer;
  buffer.add(item(0, 0.0, true));
  buffer.add(item(0, 4.0, true));
  buffer.add(item(0));
  std::mt19937_64 rng(6);
  std::vector<long> counts(3, 0);
  const int draws = 90000;
  for (auto p : buffer.sample(draws, SampleMode::kLossPrioritized, rng)) counts[p]++;
  const double total = 0.001 + 4.001 + 4.001;
  const double p = 4.001 / total;
  const double sigma = std::sqrt(draws * p * (1 - p));
  CHECK(std::abs(counts[2] - draws * p) <= 3 * sigma);
}

TEST_CASE("update_losses marks experiences trained") {
  ExperienceBuffer buffer;
  buffer.add(item(0));
  buffer.add(item(0));
  const std::vector<std::size_t> idx{1};
  const std::vector<double> loss{0.25};
  buffer.update_losses(idx, loss);
  CHECK_FALSE(buffer[0].trained);
  CHECK(buffer[1].trained);
  CHECK(buffer[1].last_loss == 0.25);
  const std::vector<double> two{1.0, 2.0};
  CHECK_THROWS_AS(buffer.update_losses(idx, two), ShapeError);
}

TEST_CASE("save and load round trip") {
  ExperienceBuffer buffer;
  buffer.add(item(3, 0.5, true));
  buffer.add(item(7));
  const auto path = std::filesystem::temp_directory_path() / "aleph_experience.bin";
  buffer.save(path);
  const auto loaded = ExperienceBuffer::load(path);
  REQUIRE(loaded.size() == 2);
  CHECK(loaded[0].birth_iteration == 3);
  CHECK(loaded[0].last_loss == 0.5);
  CHECK(loaded[0].trained);
  CHECK_FALSE(loaded[1].trained);
  CHECK(loaded[1].q_target == buffer[1].q_target);
  CHECK(loaded[1].sensors == buffer[1].sensors);
  std::filesystem::remove(path);
}
