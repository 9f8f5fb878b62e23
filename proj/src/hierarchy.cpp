#include "rbhmc/hierarchy.hpp"

#include <algorithm>
#include <map>
#include <string>

#include "rbhmc/error.hpp"

namespace rbhmc {

const Hierarchy::Node& Hierarchy::at(NodeId id) const {
  auto it = std::lower_bound(nodes.begin(), nodes.end(), id, [](const Node& n, NodeId v) { return n.id < v; });
  if (it == nodes.end() || it->id != id) fail(ErrorKind::Data, "unknown node " + std::to_string(id.value));
  return *it;
}

int Hierarchy::max_level() const {
  int m = 0;
  for (const auto& n : nodes) m = std::max(m, n.level);
  return m;
}

bool Hierarchy::singular_path() const {
  for (const auto& n : nodes)
    if (n.children.size() > 1) return false;
  return true;
}

std::vector<std::vector<NodeId>> Hierarchy::datum_paths() const {
  std::vector<std::vector<NodeId>> out(num_data);
  std::vector<NodeId> trail;
  auto walk = [&](auto&& self, const Node& node) -> void {
    trail.push_back(node.id);
    if (node.children.empty())
      for (std::size_t m : node.members) out.at(m) = trail;
    for (NodeId c : node.children) self(self, at(c));
    trail.pop_back();
  };
  walk(walk, root());
  return out;
}

void Hierarchy::validate() const {
  if (nodes.empty()) fail(ErrorKind::Data, "tree has no nodes");
  if (nodes.front().parent) fail(ErrorKind::Data, "first node must be the root");
  for (std::size_t i = 1; i < nodes.size(); ++i) {
    if (!(nodes[i - 1].id < nodes[i].id)) fail(ErrorKind::Data, "node ids must be unique and ascending");
    if (!nodes[i].parent) fail(ErrorKind::Data, "more than one root");
  }
  const auto wsize = nodes.front().weights.size();
  const auto msize = nodes.front().margin.size();
  for (const auto& n : nodes) {
    const std::string tag = "node " + std::to_string(n.id.value);
    if (n.weights.size() != wsize || n.margin.size() != msize) fail(ErrorKind::Data, tag + " has inconsistent vector sizes");
    if (n.parent) {
      const Node& p = at(*n.parent);
      if (std::find(p.children.begin(), p.children.end(), n.id) == p.children.end())
        fail(ErrorKind::Data, tag + " is missing from its parent's children");
      if (n.level != p.level + 1) fail(ErrorKind::Data, tag + " has an inconsistent level");
    } else if (n.level != 0) {
      fail(ErrorKind::Data, "root level must be 0");
    }
    for (NodeId c : n.children)
      if (at(c).parent != n.id) fail(ErrorKind::Data, tag + " lists a child with another parent");
    if (!std::is_sorted(n.members.begin(), n.members.end()) ||
        std::adjacent_find(n.members.begin(), n.members.end()) != n.members.end())
      fail(ErrorKind::Data, tag + " members must be sorted and unique");
    for (std::size_t m : n.members)
      if (m >= num_data) fail(ErrorKind::Data, tag + " member index " + std::to_string(m) + " out of range");
    if (n.members.empty()) fail(ErrorKind::Data, tag + " has no members");
    if (!n.children.empty()) {
      std::vector<std::size_t> joined;
      for (NodeId c : n.children) {
        const auto& cm = at(c).members;
        joined.insert(joined.end(), cm.begin(), cm.end());
      }
      std::sort(joined.begin(), joined.end());
      if (joined != n.members) fail(ErrorKind::Data, tag + " members differ from the union of its children");
    }
  }
  if (root().members.size() != num_data) fail(ErrorKind::Data, "root must contain every datum");
}

Hierarchy to_hierarchy(const Tree& tree, const std::vector<Path>& paths) {
  std::map<NodeId, std::vector<std::size_t>> members;
  for (std::size_t n = 0; n < paths.size(); ++n)
    for (NodeId z : paths[n]) members[z].push_back(n);
  Hierarchy h;
  h.num_data = paths.size();
  for (const auto& [id, node] : tree.nodes()) {
    if (id != tree.root() && !members.count(id)) continue;
    Hierarchy::Node out;
    out.id = id;
    out.parent = node.parent;
    out.level = node.level;
    out.weights = node.weights;
    out.margin = node.margin;
    out.members = members[id];
    for (NodeId c : node.children)
      if (members.count(c)) out.children.push_back(c);
    h.nodes.push_back(std::move(out));
  }
  return h;
}

Hierarchy to_hierarchy(const ChainState& state) {
  std::vector<Path> paths;
  paths.reserve(state.assignments.size());
  for (const auto& a : state.assignments) paths.push_back(a.path);
  return to_hierarchy(state.tree, paths);
}

Hierarchy to_hierarchy(const ViState& state, const ViProblem& problem) {
  const auto& sk = problem.skeleton();
  const auto e = expectations(state, problem);
  std::vector<std::vector<std::size_t>> members(sk.size());
  for (std::size_t n = 0; n < state.path_ind.size(); ++n)
    for (int z : sk.paths[state.path_ind[n]]) members[static_cast<std::size_t>(z)].push_back(n);
  Hierarchy h;
  h.num_data = state.path_ind.size();
  const Vec zero = Vec::Zero(static_cast<Eigen::Index>(problem.hyper().dim()));
  for (std::size_t z = 0; z < sk.size(); ++z) {
    if (z != 0 && members[z].empty()) continue;
    Hierarchy::Node out;
    out.id = NodeId{static_cast<std::uint32_t>(z)};
    if (sk.parent[z] >= 0) out.parent = NodeId{static_cast<std::uint32_t>(sk.parent[z])};
    out.level = sk.level[z];
    out.weights = e.e_beta[z];
    out.margin = zero;
    out.members = members[z];
    for (int c : sk.children[z])
      if (!members[static_cast<std::size_t>(c)].empty()) out.children.push_back(NodeId{static_cast<std::uint32_t>(c)});
    h.nodes.push_back(std::move(out));
  }
  return h;
}

Hierarchy merge_singletons(const Hierarchy& h) {
  std::map<NodeId, Hierarchy::Node> nodes;
  for (const auto& n : h.nodes) nodes.emplace(n.id, n);
  bool changed = true;
  while (changed) {
    changed = false;
    for (auto it = nodes.begin(); it != nodes.end(); ++it) {
      auto& node = it->second;
      if (!node.parent) continue;
      auto& parent = nodes.at(*node.parent);
      if (parent.children.size() != 1) continue;
      if (!parent.parent && node.children.empty()) continue;  // keep root -> leaf for a single path
      parent.children = node.children;
      for (NodeId c : node.children) nodes.at(c).parent = parent.id;
      nodes.erase(it);
      changed = true;
      break;
    }
  }
  Hierarchy out;
  out.num_data = h.num_data;
  for (auto& [id, n] : nodes) out.nodes.push_back(std::move(n));
  std::map<NodeId, std::size_t> index;
  for (std::size_t i = 0; i < out.nodes.size(); ++i) index[out.nodes[i].id] = i;
  std::vector<std::size_t> queue{0};
  out.nodes[0].level = 0;
  for (std::size_t q = 0; q < queue.size(); ++q) {
    const auto& n = out.nodes[queue[q]];
    for (NodeId c : n.children) {
      out.nodes[index.at(c)].level = n.level + 1;
      queue.push_back(index.at(c));
    }
  }
  return out;
}

}  // namespace rbhmc
