#pragma once

#include <span>

#include "rbhmc/tree.hpp"

namespace rbhmc {

struct Violation {
  int level = 1;
  NodeId node;
  auto operator<=>(const Violation&) const = default;
};

struct PathAssignment {
  Path path;
  Violation violation;
  double zeta = 0.0;  // value of the worst violation
  double aug = 1.0;   // lambda
  std::size_t component = 0;  // zero-based
};

struct Dataset {
  DataMatrix x;
  std::vector<std::string> labels;  // empty when absent

  std::size_t size() const { return static_cast<std::size_t>(x.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(x.cols()); }
  void validate() const;
};

std::vector<double> crp_next(std::span<const std::size_t> counts, double alpha);
Vec stick_break(std::span<const double> proportions);
// Root weights: o_k ~ Beta(1, gamma0) for k < K and o_K = 1, so the remainder is zero.
Vec truncated_gem(double gamma0, std::size_t trunc, Rng& rng);
Vec truncated_gem_log(double gamma0, std::size_t trunc, Rng& rng);
Vec diffuse_weights(const Vec& parent, double gamma, Rng& rng);
Vec diffuse_log_weights(const Vec& parent, double gamma, Rng& rng);

// Walks the nCRP over occupied children, creating nodes as needed. Counts are not touched.
Path ncrp_extend(Tree& tree, const Hyperparams& hyper, Rng& rng);

struct Generated {
  Dataset data;
  Tree tree;
  std::vector<PathAssignment> assignments;
  std::vector<Vec> kernels;
};

Generated generate_dataset(const Hyperparams& hyper, std::size_t n, Rng& rng);

}  // namespace rbhmc
