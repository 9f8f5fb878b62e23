#pragma once

#include "rbhmc/types.hpp"

namespace rbhmc {

inline constexpr double kDefaultZetaClamp = 1e-8;

struct CanonicalGaussian {
  Vec potential;
  Mat precision;
};

struct GigParams {
  double rho = 0.5;
  double a = 1.0;
  double b = 1.0;
};

double sample_uniform(Rng& rng);  // open interval (0, 1)
double sample_normal(Rng& rng);
// log of a Gamma(shape, 1) draw; stays finite for tiny shapes.
double sample_log_gamma(double shape, Rng& rng);
double sample_beta(double a, double b, Rng& rng);
Vec sample_dirichlet(const Vec& conc, Rng& rng);
// Normalised log of a Dirichlet draw; exact for entries far below the double range. -inf off support.
Vec sample_log_dirichlet(const Vec& conc, Rng& rng);
std::size_t sample_categorical_log(const Vec& log_weights, Rng& rng);

double sample_inverse_gaussian(double mu, double shape, Rng& rng);
double sample_lambda(double cost, double zeta, Rng& rng, double clamp = kDefaultZetaClamp);
double gig_density(double x, const GigParams& p);

Vec canonical_mean(const CanonicalGaussian& g);
double canonical_log_density(const Vec& x, const CanonicalGaussian& g);
Vec sample_canonical_gaussian(const CanonicalGaussian& g, Rng& rng);
Vec sample_gaussian(const Vec& mean, const Mat& cov, Rng& rng);

// Log Dirichlet density at exp(log_x) over the support of `conc` (entries with conc > 0).
double log_dirichlet_density(const Vec& log_x, const Vec& conc);
double log_sum_exp(const Vec& v);

// Shared-covariance Gaussian log density with a cached factorisation.
class GaussianKernel {
 public:
  explicit GaussianKernel(const Mat& cov);
  double log_density(VecRef x, VecRef mean) const;
  const Mat& precision() const { return precision_; }
  const Mat& cov() const { return cov_; }

 private:
  Mat cov_;
  Mat chol_lower_;
  Mat precision_;
  double log_norm_ = 0.0;
};

}  // namespace rbhmc
