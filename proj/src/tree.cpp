#include "rbhmc/tree.hpp"

#include <algorithm>
#include <string>

#include "rbhmc/error.hpp"

namespace rbhmc {

Tree::Tree(Vec root_log_weights, std::size_t dim) {
  Node root;
  root.id = kRootId;
  root.weights = exp_exact(root_log_weights);
  root.log_weights = std::move(root_log_weights);
  root.margin = Vec::Zero(static_cast<Eigen::Index>(dim));
  nodes_.emplace(kRootId, std::move(root));
  next_id_ = 1;
}

const Node& Tree::node(NodeId id) const {
  auto it = nodes_.find(id);
  if (it == nodes_.end()) fail(ErrorKind::State, "unknown node " + std::to_string(id.value));
  return it->second;
}

Node& Tree::node(NodeId id) {
  auto it = nodes_.find(id);
  if (it == nodes_.end()) fail(ErrorKind::State, "unknown node " + std::to_string(id.value));
  return it->second;
}

void Tree::set_log_weights(NodeId id, Vec log_weights) {
  Node& n = node(id);
  n.weights = exp_exact(log_weights);
  n.log_weights = std::move(log_weights);
}

NodeId Tree::add_child(NodeId parent, Vec log_weights, Vec margin) {
  Node& p = node(parent);
  Node child;
  child.id = NodeId{next_id_++};
  child.parent = parent;
  child.level = p.level + 1;
  child.weights = exp_exact(log_weights);
  child.log_weights = std::move(log_weights);
  child.margin = std::move(margin);
  p.children.push_back(child.id);
  const NodeId id = child.id;
  nodes_.emplace(id, std::move(child));
  return id;
}

void Tree::remove(NodeId id) {
  if (id == kRootId) fail(ErrorKind::State, "cannot remove the root");
  const Node& n = node(id);
  const auto kids = n.children;
  for (NodeId c : kids) remove(c);
  auto& siblings = node(*node(id).parent).children;
  siblings.erase(std::find(siblings.begin(), siblings.end(), id));
  nodes_.erase(id);
}

std::vector<NodeId> Tree::occupied_children(NodeId id) const {
  std::vector<NodeId> out;
  for (NodeId c : node(id).children)
    if (node(c).count > 0) out.push_back(c);
  return out;
}

std::vector<NodeId> Tree::occupied_siblings(NodeId id) const {
  const Node& n = node(id);
  if (!n.parent) return {};
  std::vector<NodeId> out;
  for (NodeId c : node(*n.parent).children)
    if (c != id && node(c).count > 0) out.push_back(c);
  return out;
}

void Tree::add_path(std::span<const NodeId> path) {
  for (NodeId z : path) ++node(z).count;
}

void Tree::remove_path(std::span<const NodeId> path) {
  for (NodeId z : path) {
    Node& n = node(z);
    if (n.count == 0) fail(ErrorKind::State, "node count underflow at " + std::to_string(z.value));
    --n.count;
  }
}

std::size_t Tree::prune_empty() {
  std::vector<NodeId> empty;
  for (const auto& [id, n] : nodes_) {
    if (id == kRootId || n.count > 0) continue;
    const Node& p = nodes_.at(*n.parent);
    if (p.id == kRootId || p.count > 0) empty.push_back(id);
  }
  const std::size_t before = nodes_.size();
  for (NodeId id : empty) remove(id);
  return before - nodes_.size();
}

}  // namespace rbhmc
