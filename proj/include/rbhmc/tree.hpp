#pragma once

#include <map>
#include <optional>
#include <span>

#include "rbhmc/types.hpp"

namespace rbhmc {

struct Node {
  NodeId id;
  std::optional<NodeId> parent;
  std::vector<NodeId> children;  // creation order
  int level = 0;
  Vec weights;      // K+1 simplex, last entry is the remainder mass
  Vec log_weights;  // elementwise log of weights, exact where weights underflow
  Vec margin;   // eta
  std::size_t count = 0;  // data whose path passes through this node
};

class Tree {
 public:
  Tree() = default;
  Tree(Vec root_log_weights, std::size_t dim);

  NodeId root() const { return kRootId; }
  bool contains(NodeId id) const { return nodes_.count(id) != 0; }
  const Node& node(NodeId id) const;
  Node& node(NodeId id);
  const std::map<NodeId, Node>& nodes() const { return nodes_; }
  std::size_t size() const { return nodes_.size(); }

  NodeId add_child(NodeId parent, Vec log_weights, Vec margin);
  void set_log_weights(NodeId id, Vec log_weights);
  // Removes a node and its subtree.
  void remove(NodeId id);

  std::vector<NodeId> occupied_children(NodeId id) const;
  // Occupied siblings of `id` in creation order, excluding `id` itself.
  std::vector<NodeId> occupied_siblings(NodeId id) const;

  void add_path(std::span<const NodeId> path);
  void remove_path(std::span<const NodeId> path);
  // Drops every non-root node with zero count. Returns the number removed.
  std::size_t prune_empty();

  std::uint32_t next_id() const { return next_id_; }
  void restore_next_id(std::uint32_t next) { next_id_ = next; }

 private:
  std::map<NodeId, Node> nodes_;
  std::uint32_t next_id_ = 0;
};

}  // namespace rbhmc
