#include "aleph/lazy_heap.hpp"

#include <algorithm>

#include "aleph/error.hpp"

namespace aleph {

void LazyHeap::push(NodeId node, int action, double priority) {
  std::size_t slot;
  if (!free_.empty()) {
    slot = free_.back();
    free_.pop_back();
  } else {
    slot = slots_.size();
    slots_.emplace_back();
  }
  slots_[slot].entry = QueueEntry{node, action, priority, next_sequence_++, false};
  slots_[slot].live_pos = live_.size();
  live_.push_back(slot);
  heap_.push_back(slot);
  std::push_heap(heap_.begin(), heap_.end(),
                 [this](std::size_t a, std::size_t b) { return ranks_below(a, b); });
}

std::size_t LazyHeap::take_top() {
  std::pop_heap(heap_.begin(), heap_.end(),
                [this](std::size_t a, std::size_t b) { return ranks_below(a, b); });
  const std::size_t slot = heap_.back();
  heap_.pop_back();
  return slot;
}

void LazyHeap::unlink_live(std::size_t slot) {
  const std::size_t pos = slots_[slot].live_pos;
  const std::size_t last = live_.back();
  live_[pos] = last;
  slots_[last].live_pos = pos;
  live_.pop_back();
}

void LazyHeap::release(std::size_t slot) { free_.push_back(slot); }

QueueEntry LazyHeap::pop_max() {
  if (live_.empty()) throw EmptyError("pop_max on an empty queue");
  for (;;) {
    const std::size_t slot = take_top();
    if (slots_[slot].entry.used) {
      --dead_;
      release(slot);
      continue;
    }
    unlink_live(slot);
    QueueEntry out = slots_[slot].entry;
    out.used = true;
    release(slot);
    return out;
  }
}

QueueEntry LazyHeap::pop_rand(std::mt19937_64& rng) {
  if (live_.empty()) throw EmptyError("pop_rand on an empty queue");
  std::uniform_int_distribution<std::size_t> pick(0, live_.size() - 1);
  const std::size_t slot = live_[pick(rng)];
  unlink_live(slot);
  slots_[slot].entry.used = true;
  ++dead_;
  const QueueEntry out = slots_[slot].entry;
  const double total = static_cast<double>(live_.size() + dead_);
  if (static_cast<double>(dead_) > gc_ratio_ * total) gc();
  return out;
}

void LazyHeap::gc() {
  if (dead_ == 0) return;
  auto keep = std::partition(heap_.begin(), heap_.end(),
                             [this](std::size_t s) { return !slots_[s].entry.used; });
  for (auto it = keep; it != heap_.end(); ++it) release(*it);
  heap_.erase(keep, heap_.end());
  std::make_heap(heap_.begin(), heap_.end(),
                 [this](std::size_t a, std::size_t b) { return ranks_below(a, b); });
  dead_ = 0;
}

}  // namespace aleph
