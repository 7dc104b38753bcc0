#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include "aleph/search_tree.hpp"

namespace aleph {

struct QueueEntry {
  NodeId node = kNoNode;
  int action = -1;
  double priority = 0.0;
  std::uint64_t sequence = 0;  // push order, breaks priority ties
  bool used = false;
};

// Max-priority queue of (node, action) candidates.
//
// pop_max() goes through a binary heap; pop_rand() samples a dense array of
// live handles and only tags the heap slot as used. Tagged slots are skipped
// lazily and the heap is rebuilt once the dead fraction exceeds gc_ratio.
class LazyHeap {
 public:
  explicit LazyHeap(double gc_ratio = 0.5) : gc_ratio_(gc_ratio) {}

  void push(NodeId node, int action, double priority);

  // Both pops throw EmptyError when no live entry remains.
  QueueEntry pop_max();
  QueueEntry pop_rand(std::mt19937_64& rng);

  // Drops every used entry from storage. Live-set order is preserved.
  void gc();

  std::size_t size() const { return live_.size(); }
  bool empty() const { return live_.empty(); }
  std::size_t dead_count() const { return dead_; }
  std::size_t storage_size() const { return heap_.size(); }
  double gc_ratio() const { return gc_ratio_; }

 private:
  struct Slot {
    QueueEntry entry;
    std::size_t live_pos = 0;
  };

  // Heap order: lower priority, or equal priority but pushed later, ranks below.
  bool ranks_below(std::size_t a, std::size_t b) const {
    const auto& ea = slots_[a].entry;
    const auto& eb = slots_[b].entry;
    return ea.priority < eb.priority ||
           (ea.priority == eb.priority && ea.sequence > eb.sequence);
  }
  std::size_t take_top();
  void unlink_live(std::size_t slot);
  void release(std::size_t slot);

  std::vector<Slot> slots_;
  std::vector<std::size_t> free_;  // recyclable slot indices
  std::vector<std::size_t> heap_;  // slot indices in heap order
  std::vector<std::size_t> live_;  // slot indices of live entries
  std::size_t dead_ = 0;
  std::uint64_t next_sequence_ = 0;
  double gc_ratio_;
};

}  // namespace aleph
