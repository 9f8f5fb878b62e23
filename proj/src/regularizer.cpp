#include "rbhmc/regularizer.hpp"

#include <cmath>
#include <string>

#include "rbhmc/error.hpp"

namespace rbhmc {

namespace {

const Vec& margin_of(const Tree& tree, NodeId z, Eigen::Index dim) {
  if (!tree.contains(z)) fail(ErrorKind::State, "no margin vector for node " + std::to_string(z.value));
  const Vec& m = tree.node(z).margin;
  if (m.size() != dim) fail(ErrorKind::State, "margin vector of node " + std::to_string(z.value) + " has wrong size");
  return m;
}

}  // namespace

double zeta(VecRef x, const Path& path, int level, NodeId sib, const Tree& tree,
            const MarginContext& ctx) {
  if (level < 1 || level >= static_cast<int>(path.size())) fail(ErrorKind::State, "violation level out of range");
  const NodeId v = path[static_cast<std::size_t>(level)];
  const Vec& eta_v = margin_of(tree, v, x.size());
  const Vec& eta_z = margin_of(tree, sib, x.size());
  const double eps = sib == v ? 0.0 : ctx.eps0;
  return eps - (eta_v - eta_z).dot(x);
}

WorstViolation worst_violation(VecRef x, const Path& path, const Tree& tree,
                               const MarginContext& ctx) {
  if (path.size() < 2) fail(ErrorKind::State, "path has no levels");
  WorstViolation best{{1, path[1]}, 0.0};
  bool found = false;
  for (std::size_t level = 1; level < path.size(); ++level) {
    const NodeId v = path[level];
    const Vec& eta_v = margin_of(tree, v, x.size());
    const double score_v = eta_v.dot(x);
    for (NodeId z : tree.occupied_siblings(v)) {
      const double value = ctx.eps0 - score_v + margin_of(tree, z, x.size()).dot(x);
      if (!found || value > best.zeta) {
        best = {{static_cast<int>(level), z}, value};
        found = true;
      }
    }
  }
  return best;
}

double hinge_penalty(std::span<const PathAssignment> assignments, const Tree& tree,
                     const DataMatrix& x, const MarginContext& ctx) {
  double total = 0.0;
  for (std::size_t n = 0; n < assignments.size(); ++n) {
    const auto w = worst_violation(x.row(static_cast<Eigen::Index>(n)).transpose(), assignments[n].path, tree, ctx);
    total += std::max(0.0, w.zeta);
  }
  return 2.0 * ctx.cost * total;
}

double log_augmentation(double lambda, double cost, double zeta) {
  if (!(lambda > 0.0)) fail(ErrorKind::Domain, "augmentation variable must be positive");
  const double u = cost * zeta + lambda;
  return -0.5 * std::log(lambda) - u * u / (2.0 * lambda);
}

double log_mixture(VecRef x, const Vec& leaf_log_weights, const std::vector<Vec>& kernels,
                   const GaussianKernel& kernel) {
  Vec terms(static_cast<Eigen::Index>(kernels.size()));
  for (std::size_t k = 0; k < kernels.size(); ++k) {
    const auto i = static_cast<Eigen::Index>(k);
    terms[i] = leaf_log_weights[i] + kernel.log_density(x, kernels[k]);
  }
  return log_sum_exp(terms);
}

double log_pseudo_likelihood(VecRef x, double lambda, const Path& path, const Violation& s,
                             const Tree& tree, const MarginContext& ctx,
                             const std::vector<Vec>& kernels, const GaussianKernel& kernel) {
  if (!(lambda > 0.0)) fail(ErrorKind::Domain, "augmentation variable must be positive");
  const double z = zeta(x, path, s.level, s.node, tree, ctx);
  return log_mixture(x, tree.node(path.back()).log_weights, kernels, kernel) +
         log_augmentation(lambda, ctx.cost, z);
}

}  // namespace rbhmc
