// Shared statistics helpers for the unit tests.
#pragma once

#include <algorithm>
#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>
#include <functional>
#include <vector>

namespace testutil {

struct Moments {
  double mean = 0.0;
  double var = 0.0;
};

inline Moments moments(const std::vector<double>& v) {
  Moments m;
  for (double x : v) m.mean += x;
  m.mean /= static_cast<double>(v.size());
  for (double x : v) m.var += (x - m.mean) * (x - m.mean);
  m.var /= static_cast<double>(v.size() - 1);
  return m;
}

// |sample mean - mean| in units of the standard error.
inline double mean_z(const std::vector<double>& v, double mean, double var) {
  return std::abs(moments(v).mean - mean) / std::sqrt(var / static_cast<double>(v.size()));
}

// Chi-square p value of draws against equiprobable bins from `quantile`.
inline double chi_square_p(const std::vector<double>& draws, const std::function<double(double)>& quantile, int bins) {
  std::vector<double> edges;
  for (int i = 1; i < bins; ++i) edges.push_back(quantile(static_cast<double>(i) / bins));
  std::vector<double> observed(static_cast<std::size_t>(bins), 0.0);
  for (double d : draws)
    observed[static_cast<std::size_t>(std::upper_bound(edges.begin(), edges.end(), d) - edges.begin())] += 1.0;
  const double expected = static_cast<double>(draws.size()) / bins;
  double stat = 0.0;
  for (double o : observed) stat += (o - expected) * (o - expected) / expected;
  return boost::math::cdf(boost::math::complement(boost::math::chi_squared(bins - 1.0), stat));
}

// Quantile by bisection on a monotone CDF over (0, inf).
inline double bisect_quantile(const std::function<double(double)>& cdf, double p) {
  double lo = 0.0, hi = 1.0;
  while (cdf(hi) < p) hi *= 2.0;
  for (int i = 0; i < 200 && hi - lo > 1e-15 * hi; ++i) {
    const double mid = 0.5 * (lo + hi);
    (cdf(mid) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace testutil
