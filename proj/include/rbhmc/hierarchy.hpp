#pragma once

#include <optional>

#include "rbhmc/mcmc.hpp"
#include "rbhmc/vi.hpp"

namespace rbhmc {

// Presentation tree with member lists, used for metrics and export.
struct Hierarchy {
  struct Node {
    NodeId id;
    std::optional<NodeId> parent;
    std::vector<NodeId> children;
    int level = 0;
    Vec weights;
    Vec margin;
    std::vector<std::size_t> members;  // sorted datum indices
  };

  std::vector<Node> nodes;  // ascending id, root first
  std::size_t num_data = 0;

  const Node& at(NodeId id) const;
  const Node& root() const { return nodes.front(); }
  int max_level() const;
  bool singular_path() const;
  // Node ids from root to leaf for every datum.
  std::vector<std::vector<NodeId>> datum_paths() const;
  // Throws Error(Data) if the structure or membership is inconsistent.
  void validate() const;
};

Hierarchy to_hierarchy(const Tree& tree, const std::vector<Path>& paths);
Hierarchy to_hierarchy(const ChainState& state);
Hierarchy to_hierarchy(const ViState& state, const ViProblem& problem);
// Folds every node without siblings into its parent and renumbers levels.
// A single path is kept as root -> leaf.
Hierarchy merge_singletons(const Hierarchy& h);

}  // namespace rbhmc
