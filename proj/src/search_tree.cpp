#include "aleph/search_tree.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "aleph/error.hpp"

namespace aleph {

double max_q(const Node& node) { return *std::max_element(node.q.begin(), node.q.end()); }

SearchTree::SearchTree(State initial, int action_count, std::size_t max_nodes)
    : action_count_(action_count), max_nodes_(max_nodes) {
  if (max_nodes < 2) {
    throw BudgetError("tree budget must be at least 2 nodes, got " + std::to_string(max_nodes));
  }
  if (action_count < 1) throw TreeError("action count must be positive");
  Node root;
  root.state = std::move(initial);
  root.q.assign(static_cast<std::size_t>(action_count), 0.0);
  nodes_.reserve(std::min<std::size_t>(max_nodes + 1, 1u << 16));
  nodes_.push_back(std::move(root));
}

NodeId SearchTree::append_child(NodeId parent, int action, Transition transition) {
  if (parent >= nodes_.size()) throw TreeError("unknown parent node");
  if (nodes_.size() >= max_nodes_ + 1) {
    throw BudgetError("tree budget of " + std::to_string(max_nodes_) + " nodes exhausted");
  }
  if (action < 0 || action >= action_count_) {
    throw TreeError("action index out of range: " + std::to_string(action));
  }
  const Node& p = nodes_[parent];
  if (p.done) throw TreeError("cannot expand a terminal node");
  if (p.child(action) != kNoNode) {
    throw TreeError("action " + std::to_string(action) + " already expanded");
  }
  if (!(transition.reward > 0.0) || !std::isfinite(transition.reward)) {
    throw TreeError("rewards must be positive and finite");
  }

  Node child;
  child.state = std::move(transition.state);
  child.accumulated = p.accumulated + transition.reward;
  child.reward = transition.reward;
  child.done = transition.done;
  child.q.assign(static_cast<std::size_t>(action_count_), 0.0);
  child.parent = parent;
  child.parent_action = action;
  child.depth = p.depth + 1;

  const auto id = static_cast<NodeId>(nodes_.size());
  nodes_[parent].children.emplace_back(action, id);
  nodes_.push_back(std::move(child));
  sizes_dirty_ = true;
  backpropagated_ = false;
  return id;
}

void SearchTree::refresh_sizes() const {
  if (!sizes_dirty_) return;
  sizes_.assign(nodes_.size(), 1);
  for (std::size_t i = nodes_.size(); i-- > 1;) {
    sizes_[nodes_[i].parent] += sizes_[i];
  }
  sizes_dirty_ = false;
}

std::size_t SearchTree::subtree_size(NodeId id) const {
  refresh_sizes();
  return sizes_.at(id);
}

std::span<const std::size_t> SearchTree::subtree_sizes() const {
  refresh_sizes();
  return sizes_;
}

void SearchTree::backpropagate(double gamma, double unexplored_weight) {
  // Sizes are accumulated in the same sweep: when node i is reached all of its
  // descendants have already added themselves.
  sizes_.assign(nodes_.size(), 1);
  for (std::size_t i = nodes_.size(); i-- > 1;) {
    const Node& x = nodes_[i];
    double value = 0.0;
    if (!x.done) {
      if (x.children.empty()) {
        double sum = 0.0;
        for (double q : x.q) sum += q;
        value = sum / static_cast<double>(x.q.size());
      } else {
        double weighted = 0.0;
        double weights = 0.0;
        for (const auto& [action, child] : x.children) {
          const auto w = static_cast<double>(sizes_[child]);
          weighted += x.q[static_cast<std::size_t>(action)] * w;
          weights += w;
        }
        if (unexplored_weight > 0.0) {
          for (int a = 0; a < action_count_; ++a) {
            if (x.child(a) != kNoNode) continue;
            weighted += x.q[static_cast<std::size_t>(a)] * unexplored_weight;
            weights += unexplored_weight;
          }
        }
        value = weighted / weights;
      }
    }
    Node& parent = nodes_[x.parent];
    parent.q[static_cast<std::size_t>(x.parent_action)] = x.reward + gamma * value;
    sizes_[x.parent] += sizes_[i];
  }
  sizes_dirty_ = false;
  backpropagated_ = true;
}

NodeId SearchTree::best_node() const {
  NodeId best = 0;
  double best_score = nodes_[0].accumulated + max_q(nodes_[0]);
  for (std::size_t i = 1; i < nodes_.size(); ++i) {
    const double score = nodes_[i].accumulated + max_q(nodes_[i]);
    if (score > best_score) {
      best_score = score;
      best = static_cast<NodeId>(i);
    }
  }
  return best;
}

std::size_t SearchTree::rank() const {
  return static_cast<std::size_t>(nodes_[best_node()].depth);
}

double SearchTree::efficiency() const {
  return static_cast<double>(rank()) / static_cast<double>(max_nodes_);
}

double SearchTree::best_path_reward() const {
  const Node& n = nodes_[best_node()];
  return n.accumulated + max_q(n);
}

}  // namespace aleph
