#include "rbhmc/model.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <string>

#include "rbhmc/error.hpp"
#include "rbhmc/random.hpp"

namespace rbhmc {

namespace {

bool is_spd(const Mat& m) {
  if (m.rows() == 0 || m.rows() != m.cols() || !m.allFinite()) return false;
  if (!m.isApprox(m.transpose(), 1e-10)) return false;
  Eigen::LLT<Mat> llt(m);
  return llt.info() == Eigen::Success;
}

bool positive(double v) { return v > 0.0 && std::isfinite(v); }

}  // namespace

void Hyperparams::validate() const {
  if (!positive(alpha)) fail(ErrorKind::Parameter, "alpha must be positive");
  if (!positive(gamma)) fail(ErrorKind::Parameter, "gamma must be positive");
  if (!positive(gamma0)) fail(ErrorKind::Parameter, "gamma0 must be positive");
  if (depth < 1) fail(ErrorKind::Parameter, "depth must be at least 1");
  if (trunc < 1) fail(ErrorKind::Parameter, "trunc must be at least 1");
  if (!positive(margin_cost)) fail(ErrorKind::Parameter, "margin_cost must be positive");
  if (!(margin_eps >= 0.0) || !std::isfinite(margin_eps)) fail(ErrorKind::Parameter, "margin_eps must be non-negative");
  if (!positive(eta_prior_scale)) fail(ErrorKind::Parameter, "eta_prior_scale must be positive");
  if (!(vi_weight >= 0.0) || !std::isfinite(vi_weight)) fail(ErrorKind::Parameter, "vi_weight must be non-negative");
  const auto d = prior_mean.size();
  if (d < 1 || !prior_mean.allFinite()) fail(ErrorKind::Parameter, "prior_mean must be a finite vector");
  if (kernel_cov.rows() != d || !is_spd(kernel_cov))
    fail(ErrorKind::Parameter, "kernel_cov must be a symmetric positive definite " + std::to_string(d) + "x" + std::to_string(d) + " matrix");
  if (prior_cov.rows() != d || !is_spd(prior_cov))
    fail(ErrorKind::Parameter, "prior_cov must be a symmetric positive definite " + std::to_string(d) + "x" + std::to_string(d) + " matrix");
}

Hyperparams Hyperparams::animals(std::size_t dim) {
  Hyperparams h;
  const auto d = static_cast<Eigen::Index>(dim);
  h.kernel_cov = Mat::Identity(d, d);
  h.prior_mean = Vec::Zero(d);
  h.prior_cov = Mat::Identity(d, d);
  return h;
}

void Dataset::validate() const {
  if (x.rows() < 1 || x.cols() < 1) fail(ErrorKind::Data, "dataset must have at least one row and one column");
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < x.cols(); ++j)
      if (!std::isfinite(x(i, j)))
        fail(ErrorKind::Data, "non-finite value at row " + std::to_string(i + 1) + ", column " + std::to_string(j + 1));
  if (!labels.empty() && labels.size() != size()) fail(ErrorKind::Data, "label count does not match row count");
}

std::vector<double> crp_next(std::span<const std::size_t> counts, double alpha) {
  if (!positive(alpha)) fail(ErrorKind::Parameter, "alpha must be positive");
  double n = 0.0;
  for (std::size_t c : counts) {
    if (c == 0) fail(ErrorKind::Parameter, "table counts must be at least 1");
    n += static_cast<double>(c);
  }
  std::vector<double> out;
  out.reserve(counts.size() + 1);
  for (std::size_t c : counts) out.push_back(static_cast<double>(c) / (n + alpha));
  out.push_back(alpha / (n + alpha));
  return out;
}

Vec stick_break(std::span<const double> proportions) {
  Vec out(static_cast<Eigen::Index>(proportions.size() + 1));
  double rest = 1.0;
  for (std::size_t k = 0; k < proportions.size(); ++k) {
    const double o = proportions[k];
    if (!(o > 0.0 && o <= 1.0)) fail(ErrorKind::Domain, "stick proportion outside (0, 1]");
    out[static_cast<Eigen::Index>(k)] = o * rest;
    rest *= 1.0 - o;
  }
  out[out.size() - 1] = rest;
  return out;
}

Vec truncated_gem(double gamma0, std::size_t trunc, Rng& rng) {
  const Vec out = exp_exact(truncated_gem_log(gamma0, trunc, rng));
  return out / out.sum();
}

Vec truncated_gem_log(double gamma0, std::size_t trunc, Rng& rng) {
  if (!positive(gamma0)) fail(ErrorKind::Parameter, "gamma0 must be positive");
  if (trunc < 1) fail(ErrorKind::Parameter, "trunc must be at least 1");
  Vec out = Vec::Constant(static_cast<Eigen::Index>(trunc) + 1, -INFINITY);
  double log_rest = 0.0;
  for (std::size_t k = 0; k + 1 < trunc; ++k) {
    // o = Ga / (Ga + Gb) with Ga ~ Gamma(1), Gb ~ Gamma(gamma0), kept in log space
    const double la = sample_log_gamma(1.0, rng);
    const double lb = sample_log_gamma(gamma0, rng);
    const double m = std::max(la, lb);
    const double lse = m + std::log(std::exp(la - m) + std::exp(lb - m));
    out[static_cast<Eigen::Index>(k)] = log_rest + la - lse;
    log_rest += lb - lse;
  }
  out[static_cast<Eigen::Index>(trunc) - 1] = log_rest;
  return out;
}

Vec diffuse_weights(const Vec& parent, double gamma, Rng& rng) {
  const Vec out = exp_exact(diffuse_log_weights(parent, gamma, rng));
  return out / out.sum();
}

Vec diffuse_log_weights(const Vec& parent, double gamma, Rng& rng) {
  if (!positive(gamma)) fail(ErrorKind::Parameter, "gamma must be positive");
  if ((parent.array() < 0.0).any() || std::abs(parent.sum() - 1.0) > 1e-9)
    fail(ErrorKind::Parameter, "parent weights are not on the simplex");
  return sample_log_dirichlet(gamma * parent, rng);
}

Path ncrp_extend(Tree& tree, const Hyperparams& hyper, Rng& rng) {
  Path path{tree.root()};
  NodeId z = tree.root();
  const auto dim = tree.node(z).margin.size();
  for (int level = 1; level <= hyper.depth; ++level) {
    const auto occupied = tree.occupied_children(z);
    std::vector<std::size_t> counts;
    for (NodeId c : occupied) counts.push_back(tree.node(c).count);
    const auto probs = crp_next(counts, hyper.alpha);
    Vec logp(static_cast<Eigen::Index>(probs.size()));
    for (std::size_t i = 0; i < probs.size(); ++i) logp[static_cast<Eigen::Index>(i)] = std::log(probs[i]);
    const std::size_t pick = occupied.empty() ? 0 : sample_categorical_log(logp, rng);
    if (pick < occupied.size()) {
      z = occupied[pick];
    } else {
      Vec w = diffuse_log_weights(tree.node(z).weights, hyper.gamma, rng);
      Vec eta(dim);
      for (Eigen::Index i = 0; i < dim; ++i) eta[i] = hyper.eta_prior_scale * sample_normal(rng);
      z = tree.add_child(z, std::move(w), std::move(eta));
    }
    path.push_back(z);
  }
  return path;
}

Generated generate_dataset(const Hyperparams& hyper, std::size_t n, Rng& rng) {
  hyper.validate();
  if (n < 1) fail(ErrorKind::Parameter, "n must be at least 1");
  const std::size_t d = hyper.dim();
  Generated out;
  out.tree = Tree(truncated_gem_log(hyper.gamma0, hyper.trunc, rng), d);
  for (std::size_t k = 0; k < hyper.trunc; ++k)
    out.kernels.push_back(sample_gaussian(hyper.prior_mean, hyper.prior_cov, rng));
  out.data.x.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < n; ++i) {
    PathAssignment a;
    a.path = ncrp_extend(out.tree, hyper, rng);
    out.tree.add_path(a.path);
    const Vec& leaf = out.tree.node(a.path.back()).log_weights;
    a.component = sample_categorical_log(leaf.head(static_cast<Eigen::Index>(hyper.trunc)), rng);
    out.data.x.row(static_cast<Eigen::Index>(i)) =
        sample_gaussian(out.kernels[a.component], hyper.kernel_cov, rng).transpose();
    out.assignments.push_back(std::move(a));
  }
  return out;
}

}  // namespace rbhmc
