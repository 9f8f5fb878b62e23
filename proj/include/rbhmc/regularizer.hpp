#pragma once

#include <span>

#include "rbhmc/model.hpp"
#include "rbhmc/random.hpp"

namespace rbhmc {

struct MarginContext {
  double cost = 0.1;
  double eps0 = 1.0;
};

struct WorstViolation {
  Violation s;
  double zeta = 0.0;
};

double zeta(VecRef x, const Path& path, int level, NodeId sib, const Tree& tree,
            const MarginContext& ctx);

// Argmax over levels and occupied siblings; ties go to the lowest level, then creation order.
// Paths without siblings get the sentinel (1, path[1]) with zeta 0.
WorstViolation worst_violation(VecRef x, const Path& path, const Tree& tree,
                               const MarginContext& ctx);

double hinge_penalty(std::span<const PathAssignment> assignments, const Tree& tree,
                     const DataMatrix& x, const MarginContext& ctx);

double log_augmentation(double lambda, double cost, double zeta);
// Mixture term log sum_k beta_k N(x; theta_k, Sigma) from the leaf's log weights.
double log_mixture(VecRef x, const Vec& leaf_log_weights, const std::vector<Vec>& kernels,
                   const GaussianKernel& kernel);
double log_pseudo_likelihood(VecRef x, double lambda, const Path& path, const Violation& s,
                             const Tree& tree, const MarginContext& ctx,
                             const std::vector<Vec>& kernels, const GaussianKernel& kernel);

}  // namespace rbhmc
