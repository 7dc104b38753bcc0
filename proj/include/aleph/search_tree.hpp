#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include "aleph/environment.hpp"

namespace aleph {

using NodeId = std::uint32_t;
inline constexpr NodeId kNoNode = std::numeric_limits<NodeId>::max();

struct Node {
  State state;
  double accumulated = 0.0;  // non-discounted reward from the root (C)
  double reward = 0.0;       // reward of the action that created this node (R)
  bool done = false;
  std::vector<double> q;
  NodeId parent = kNoNode;
  int parent_action = -1;
  int depth = 0;
  // (action, child) in expansion order; actions are distinct.
  std::vector<std::pair<int, NodeId>> children;

  NodeId child(int action) const {
    for (const auto& [a, id] : children) {
      if (a == action) return id;
    }
    return kNoNode;
  }
};

// Append-only search tree. Children always live at larger indices than their
// parent, so a single reverse sweep visits every subtree before its root.
class SearchTree {
 public:
  // Throws BudgetError when max_nodes < 2.
  SearchTree(State initial, int action_count, std::size_t max_nodes);

  // Throws TreeError on a terminal parent, duplicate action, out-of-range
  // action or nonpositive reward; BudgetError past max_nodes + 1 nodes.
  NodeId append_child(NodeId parent, int action, Transition transition);

  std::size_t size() const { return nodes_.size(); }
  std::size_t max_nodes() const { return max_nodes_; }
  int action_count() const { return action_count_; }

  const Node& node(NodeId id) const { return nodes_.at(id); }
  const std::vector<Node>& nodes() const { return nodes_; }
  std::span<double> mutable_q(NodeId id) { return nodes_.at(id).q; }

  // Nodes in the subtree rooted at `id`, including itself.
  std::size_t subtree_size(NodeId id) const;
  std::span<const std::size_t> subtree_sizes() const;

  // Weighted soft-max time-difference backup, children before parents:
  //   Q[s][a] = R(x) + gamma * sum_b(Q[x][b] w[x][b]) / sum_b(w[x][b])
  // with w = subtree size of the child behind b (0 if unexplored), w = 1 for
  // every action of a leaf, and V(x) = 0 for terminal x. A positive
  // unexplored_weight replaces the 0 for unexplored actions of expanded nodes.
  void backpropagate(double gamma, double unexplored_weight = 0.0);
  bool backpropagated() const { return backpropagated_; }

  // Node maximizing C + max(Q); ties go to the lowest index.
  NodeId best_node() const;
  std::size_t rank() const;
  double efficiency() const;
  double best_path_reward() const;

 private:
  void refresh_sizes() const;

  std::vector<Node> nodes_;
  int action_count_;
  std::size_t max_nodes_;
  bool backpropagated_ = false;
  mutable std::vector<std::size_t> sizes_;
  mutable bool sizes_dirty_ = true;
};

double max_q(const Node& node);

}  // namespace aleph
