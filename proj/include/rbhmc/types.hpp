#pragma once

#include <Eigen/Core>
#include <cmath>
#include <compare>
#include <cstdint>
#include <random>
#include <vector>

namespace rbhmc {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using DataMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using VecRef = Eigen::Ref<const Vec>;
using Rng = std::mt19937_64;

struct NodeId {
  std::uint32_t value = 0;
  auto operator<=>(const NodeId&) const = default;
};

inline constexpr NodeId kRootId{0};

using Path = std::vector<NodeId>;

// Elementwise std::exp. Eigen's vectorised exp returns a denormal for -inf, which would leak mass
// onto zero-support entries.
template <typename Derived>
Vec exp_exact(const Eigen::MatrixBase<Derived>& v) {
  return v.unaryExpr([](double x) { return std::exp(x); });
}

// Floor applied to mixture weights before taking logs.
inline constexpr double kWeightFloor = 1e-12;

struct Hyperparams {
  double alpha = 0.4;
  double gamma = 1.0;
  double gamma0 = 0.85;
  int depth = 3;
  std::size_t trunc = 10;
  double margin_cost = 0.1;
  double margin_eps = 1.0;
  double eta_prior_scale = 1.0;
  Mat kernel_cov;
  Vec prior_mean;
  Mat prior_cov;
  double vi_weight = 0.1;

  std::size_t dim() const { return static_cast<std::size_t>(prior_mean.size()); }
  // Throws Error(Parameter) on any violated invariant.
  void validate() const;
  // Animals settings with identity covariances in `dim` dimensions.
  static Hyperparams animals(std::size_t dim);
};

}  // namespace rbhmc
