#include "rbhmc/random.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <limits>
#include <numbers>

#include "rbhmc/error.hpp"

namespace rbhmc {

double sample_uniform(Rng& rng) {
  for (;;) {
    const double u = std::generate_canonical<double, 53>(rng);
    if (u > 0.0 && u < 1.0) return u;
  }
}

double sample_normal(Rng& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  return dist(rng);
}

double sample_log_gamma(double shape, Rng& rng) {
  if (!(shape > 0.0) || !std::isfinite(shape)) fail(ErrorKind::Parameter, "gamma shape must be positive");
  if (shape >= 1.0) {
    std::gamma_distribution<double> dist(shape, 1.0);
    return std::log(dist(rng));
  }
  // G(a) = G(a+1) U^{1/a}
  std::gamma_distribution<double> dist(shape + 1.0, 1.0);
  return std::log(dist(rng)) + std::log(sample_uniform(rng)) / shape;
}

double sample_beta(double a, double b, Rng& rng) {
  if (!(a > 0.0) || !(b > 0.0)) fail(ErrorKind::Parameter, "beta parameters must be positive");
  const double la = sample_log_gamma(a, rng);
  const double lb = sample_log_gamma(b, rng);
  return 1.0 / (1.0 + std::exp(lb - la));
}

Vec sample_dirichlet(const Vec& conc, Rng& rng) {
  const Vec out = exp_exact(sample_log_dirichlet(conc, rng));
  return out / out.sum();
}

Vec sample_log_dirichlet(const Vec& conc, Rng& rng) {
  Vec logs = Vec::Constant(conc.size(), -std::numeric_limits<double>::infinity());
  bool any = false;
  for (Eigen::Index k = 0; k < conc.size(); ++k) {
    if (conc[k] < 0.0 || !std::isfinite(conc[k])) fail(ErrorKind::Parameter, "dirichlet concentration must be finite and non-negative");
    if (conc[k] > 0.0) {
      logs[k] = sample_log_gamma(conc[k], rng);
      any = true;
    }
  }
  if (!any) fail(ErrorKind::Parameter, "dirichlet concentration has zero sum");
  return logs.array() - log_sum_exp(logs);
}

double log_sum_exp(const Vec& v) {
  if (v.size() == 0) return -std::numeric_limits<double>::infinity();
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log(exp_exact((v.array() - m).matrix()).sum());
}

std::size_t sample_categorical_log(const Vec& log_weights, Rng& rng) {
  const double lse = log_sum_exp(log_weights);
  if (!std::isfinite(lse)) fail(ErrorKind::Numerical, "categorical weights are all zero or not finite");
  const double u = sample_uniform(rng);
  double acc = 0.0;
  std::size_t last = 0;
  for (Eigen::Index k = 0; k < log_weights.size(); ++k) {
    const double p = std::exp(log_weights[k] - lse);
    if (p <= 0.0) continue;
    acc += p;
    last = static_cast<std::size_t>(k);
    if (u < acc) return last;
  }
  return last;
}

double sample_inverse_gaussian(double mu, double shape, Rng& rng) {
  if (!(mu > 0.0) || !(shape > 0.0) || !std::isfinite(mu) || !std::isfinite(shape))
    fail(ErrorKind::Parameter, "inverse gaussian parameters must be positive and finite");
  const double v = sample_normal(rng);
  const double t = mu * v * v / (2.0 * shape);
  const double x = mu / (1.0 + t + std::sqrt(t) * std::sqrt(t + 2.0));
  if (sample_uniform(rng) <= mu / (mu + x)) return x;
  return mu * (mu / x);
}

double sample_lambda(double cost, double zeta, Rng& rng, double clamp) {
  if (!(cost > 0.0)) fail(ErrorKind::Parameter, "margin cost must be positive");
  if (!(clamp > 0.0)) fail(ErrorKind::Parameter, "zeta clamp must be positive");
  const double b = std::max(std::abs(cost * zeta), clamp);
  return 1.0 / sample_inverse_gaussian(1.0 / b, 1.0, rng);
}

double gig_density(double x, const GigParams& p) {
  if (!(x > 0.0)) fail(ErrorKind::Domain, "gig density needs x > 0");
  if (!(p.a > 0.0) || !(p.b > 0.0)) fail(ErrorKind::Parameter, "gig parameters a and b must be positive");
  return std::exp((p.rho - 1.0) * std::log(x) - 0.5 * (p.a * x + p.b / x));
}

namespace {

Eigen::LLT<Mat> factor(const Mat& precision) {
  Eigen::LLT<Mat> llt(precision);
  if (llt.info() != Eigen::Success || !precision.allFinite())
    fail(ErrorKind::Numerical, "precision matrix is not positive definite");
  return llt;
}

}  // namespace

Vec canonical_mean(const CanonicalGaussian& g) { return factor(g.precision).solve(g.potential); }

double canonical_log_density(const Vec& x, const CanonicalGaussian& g) {
  const auto llt = factor(g.precision);
  const Vec mean = llt.solve(g.potential);
  const Mat l = llt.matrixL();
  const Vec r = l.transpose() * (x - mean);
  const double logdet = 2.0 * l.diagonal().array().log().sum();
  return -0.5 * static_cast<double>(x.size()) * std::log(2.0 * std::numbers::pi) + 0.5 * logdet -
         0.5 * r.squaredNorm();
}

Vec sample_canonical_gaussian(const CanonicalGaussian& g, Rng& rng) {
  const auto llt = factor(g.precision);
  Vec z(g.potential.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = sample_normal(rng);
  return llt.solve(g.potential) + llt.matrixU().solve(z);
}

Vec sample_gaussian(const Vec& mean, const Mat& cov, Rng& rng) {
  Eigen::LLT<Mat> llt(cov);
  if (llt.info() != Eigen::Success) fail(ErrorKind::Numerical, "covariance matrix is not positive definite");
  Vec z(mean.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = sample_normal(rng);
  return mean + llt.matrixL() * z;
}

double log_dirichlet_density(const Vec& log_x, const Vec& conc) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  double out = 0.0;
  double total = 0.0;
  for (Eigen::Index k = 0; k < conc.size(); ++k) {
    if (conc[k] <= 0.0) {
      if (log_x[k] > -inf) return -inf;
      continue;
    }
    if (log_x[k] == -inf) return -inf;
    total += conc[k];
    out += (conc[k] - 1.0) * log_x[k] - std::lgamma(conc[k]);
  }
  return out + std::lgamma(total);
}

GaussianKernel::GaussianKernel(const Mat& cov) : cov_(cov) {
  Eigen::LLT<Mat> llt(cov);
  if (cov.rows() == 0 || cov.rows() != cov.cols() || llt.info() != Eigen::Success)
    fail(ErrorKind::Parameter, "kernel covariance must be symmetric positive definite");
  chol_lower_ = llt.matrixL();
  precision_ = llt.solve(Mat::Identity(cov.rows(), cov.cols()));
  log_norm_ = -0.5 * static_cast<double>(cov.rows()) * std::log(2.0 * std::numbers::pi) -
              chol_lower_.diagonal().array().log().sum();
}

double GaussianKernel::log_density(VecRef x, VecRef mean) const {
  const Vec r = chol_lower_.triangularView<Eigen::Lower>().solve(x - mean);
  return log_norm_ - 0.5 * r.squaredNorm();
}

}  // namespace rbhmc
