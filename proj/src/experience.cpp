#include "aleph/experience.hpp"

#include <algorithm>
#include <cstdio>
#include <string>

#include "aleph/error.hpp"
#include "aleph/heuristic_net.hpp"

namespace aleph {

std::size_t ExperienceBuffer::harvest(const SearchTree& tree, const Environment& env,
                                      int iteration) {
  if (!tree.backpropagated()) {
    throw TreeError("harvest needs a backpropagated tree");
  }
  std::size_t added = 0;
  for (const Node& node : tree.nodes()) {
    if (node.done) continue;
    Experience e;
    e.q_target.assign(node.q.begin(), node.q.end());
    e.sensors = env.sensors(node.state);
    e.birth_iteration = iteration;
    items_.push_back(std::move(e));
    ++added;
  }
  return added;
}

void ExperienceBuffer::add(Experience experience) { items_.push_back(std::move(experience)); }

std::size_t ExperienceBuffer::evict_stale(int current_iteration, int max_age) {
  if (max_age < 1) throw ConfigError("max_age must be at least 1");
  const auto before = items_.size();
  std::erase_if(items_, [&](const Experience& e) {
    return current_iteration - e.birth_iteration > max_age;
  });
  return before - items_.size();
}

std::vector<std::size_t> ExperienceBuffer::sample(std::size_t batch_size, SampleMode mode,
                                                  std::mt19937_64& rng) const {
  if (items_.empty()) throw EmptyError("cannot sample an empty experience buffer");
  std::vector<std::size_t> picks(batch_size);
  if (mode == SampleMode::kUniform) {
    std::uniform_int_distribution<std::size_t> pick(0, items_.size() - 1);
    for (auto& p : picks) p = pick(rng);
    return picks;
  }
  double top = 0.0;
  bool any_trained = false;
  for (const auto& e : items_) {
    if (e.trained) {
      top = std::max(top, e.last_loss + priority_floor_);
      any_trained = true;
    }
  }
  if (!any_trained) top = 1.0;
  std::vector<double> weights(items_.size());
  std::transform(items_.begin(), items_.end(), weights.begin(), [&](const Experience& e) {
    return e.trained ? e.last_loss + priority_floor_ : top;
  });
  std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
  for (auto& p : picks) p = pick(rng);
  return picks;
}

void ExperienceBuffer::update_losses(std::span<const std::size_t> indices,
                                     std::span<const double> losses) {
  if (indices.size() != losses.size()) throw ShapeError("index/loss count mismatch");
  for (std::size_t i = 0; i < indices.size(); ++i) {
    Experience& e = items_.at(indices[i]);
    e.last_loss = losses[i];
    e.trained = true;
  }
}

void ExperienceBuffer::save(const std::filesystem::path& path) const {
  const std::size_t actions = items_.empty() ? 0 : items_.front().q_target.size();
  const std::size_t pixels = items_.empty() ? 0 : items_.front().sensors.size();
  std::vector<float> flat;
  flat.reserve(items_.size() * (3 + actions + pixels));
  for (const auto& e : items_) {
    flat.push_back(static_cast<float>(e.birth_iteration));
    flat.push_back(static_cast<float>(e.last_loss));
    flat.push_back(e.trained ? 1.0f : 0.0f);
    flat.insert(flat.end(), e.q_target.begin(), e.q_target.end());
    flat.insert(flat.end(), e.sensors.begin(), e.sensors.end());
  }
  save_checkpoint(path,
                  "experience count=" + std::to_string(items_.size()) + " actions=" +
                      std::to_string(actions) + " pixels=" + std::to_string(pixels),
                  flat);
}

ExperienceBuffer ExperienceBuffer::load(const std::filesystem::path& path) {
  const RawCheckpoint raw = read_checkpoint(path);
  unsigned long count = 0, actions = 0, pixels = 0;
  if (std::sscanf(raw.descriptor.c_str(), "experience count=%lu actions=%lu pixels=%lu", &count,
                  &actions, &pixels) != 3) {
    throw CheckpointError("not an experience dump: " + raw.descriptor);
  }
  const std::size_t stride = 3 + actions + pixels;
  if (raw.params.size() != count * stride) throw CheckpointError("truncated experience dump");
  ExperienceBuffer buffer;
  for (std::size_t i = 0; i < count; ++i) {
    const float* p = raw.params.data() + i * stride;
    Experience e;
    e.birth_iteration = static_cast<int>(p[0]);
    e.last_loss = p[1];
    e.trained = p[2] != 0.0f;
    e.q_target.assign(p + 3, p + 3 + actions);
    e.sensors.assign(p + 3 + actions, p + stride);
    buffer.items_.push_back(std::move(e));
  }
  return buffer;
}

}  // namespace aleph
