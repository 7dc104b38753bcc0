#pragma once

#include <cstddef>
#include <filesystem>
#include <random>
#include <span>
#include <vector>

#include "aleph/environment.hpp"
#include "aleph/search_tree.hpp"

namespace aleph {

struct Experience {
  std::vector<float> q_target;
  std::vector<float> sensors;
  int birth_iteration = 0;
  double last_loss = 0.0;
  bool trained = false;  // false until a loss has been written back
};

enum class SampleMode { kUniform, kLossPrioritized };

// Bag of (Q target, sensors) pairs harvested from backpropagated trees.
class ExperienceBuffer {
 public:
  explicit ExperienceBuffer(double priority_floor = 1e-3) : priority_floor_(priority_floor) {}

  // One experience per non-terminal node. Throws TreeError when the tree has
  // not been backpropagated.
  std::size_t harvest(const SearchTree& tree, const Environment& env, int iteration);
  void add(Experience experience);

  // Drops experiences with current_iteration - birth_iteration > max_age.
  std::size_t evict_stale(int current_iteration, int max_age);

  // Indices into the buffer, drawn with replacement. Prioritized mode draws
  // with probability proportional to last_loss + floor; items never trained
  // on take the current maximum priority. Throws EmptyError.
  std::vector<std::size_t> sample(std::size_t batch_size, SampleMode mode,
                                  std::mt19937_64& rng) const;
  void update_losses(std::span<const std::size_t> indices, std::span<const double> losses);

  std::size_t size() const { return items_.size(); }
  bool empty() const { return items_.empty(); }
  const Experience& operator[](std::size_t i) const { return items_[i]; }

  // Dump/restore through the checkpoint container format.
  void save(const std::filesystem::path& path) const;
  static ExperienceBuffer load(const std::filesystem::path& path);

 private:
  std::vector<Experience> items_;
  double priority_floor_;
};

}  // namespace aleph
