// Acceptance checks. Prints one PASS/FAIL line per criterion and exits non-zero if any fail.
// Usage: rbhmc_acceptance [criterion numbers...]

#include <Eigen/Cholesky>
#include <Eigen/LU>
#include <algorithm>
#include <array>
#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/special_functions/bessel.hpp>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <unistd.h>
#include <vector>

#include "rbhmc/commands.hpp"
#include "rbhmc/config.hpp"
#include "rbhmc/error.hpp"
#include "rbhmc/hierarchy.hpp"
#include "rbhmc/io.hpp"
#include "rbhmc/mcmc.hpp"
#include "rbhmc/metrics.hpp"
#include "rbhmc/model.hpp"
#include "rbhmc/random.hpp"
#include "rbhmc/regularizer.hpp"
#include "rbhmc/vi.hpp"
#include "toy_oracle.hpp"

namespace fs = std::filesystem;
using namespace rbhmc;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

// ---------------------------------------------------------------- 1
Outcome augmentation_identity() {
  using boost::math::quadrature::exp_sinh;
  exp_sinh<double> integrator;
  double worst = 0.0;
  int cases = 0;
  for (double c : {0.1, 1.0}) {
    for (double z : {-2.0, -0.5, 0.0, 0.7, 3.0}) {
      // Substituting lambda = t^2 removes the endpoint singularity at zero.
      auto f = [&](double t) {
        const double lambda = t * t;
        if (!(lambda > 0.0)) return 0.0;
        return 2.0 * t * std::exp(log_augmentation(lambda, c, z)) / std::sqrt(2.0 * M_PI);
      };
      const double value = integrator.integrate(f, 0.0, std::numeric_limits<double>::infinity(), 1e-13);
      const double expect = std::exp(-2.0 * c * std::max(0.0, z));
      worst = std::max(worst, std::abs(value - expect) / expect);
      ++cases;
    }
  }
  return {worst <= 1e-6 && cases == 10, std::to_string(cases) + " cases, max rel err " + fmt("%.2e", worst)};
}

// ---------------------------------------------------------------- 2
// Chi-square goodness of fit over equiprobable bins given by a quantile function.
double chi_square_p(std::vector<double> draws, const std::function<double(double)>& quantile, int bins) {
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

struct MomentCheck {
  double z_mean = 0.0;
  double z_var = 0.0;
};

// z scores of the sample mean and variance against exact moments (mean, variance, fourth central).
MomentCheck moments(const std::vector<double>& draws, double mean, double var, double mu4) {
  const double n = static_cast<double>(draws.size());
  double m = 0.0;
  for (double d : draws) m += d;
  m /= n;
  double v = 0.0;
  for (double d : draws) v += (d - m) * (d - m);
  v /= n - 1.0;
  return {(m - mean) / std::sqrt(var / n), (v - var) / std::sqrt((mu4 - var * var) / n)};
}

// log Phi(b) with an asymptotic tail for very negative b, where erfc underflows.
double log_normal_cdf(double b) {
  if (b > -30.0) return std::log(0.5 * std::erfc(-b / std::sqrt(2.0)));
  const double r = 1.0 / (b * b);
  return -0.5 * b * b - std::log(-b) - 0.5 * std::log(2.0 * M_PI) +
         std::log1p(r * (-1.0 + r * (3.0 + r * (-15.0 + 105.0 * r))));
}

// IG(mu, shape) CDF, stable for large shape / mu where exp(2 shape / mu) overflows.
double ig_cdf(double x, double mu, double shape) {
  if (!(x > 0.0)) return 0.0;
  const double s = std::sqrt(shape / x);
  const double a = s * (x / mu - 1.0), b = -s * (x / mu + 1.0);
  return 0.5 * std::erfc(-a / std::sqrt(2.0)) + std::exp(2.0 * shape / mu + log_normal_cdf(b));
}

double bisect_quantile(const std::function<double(double)>& cdf, double p) {
  double lo = 0.0, hi = 1.0;
  while (cdf(hi) < p) hi *= 2.0;
  for (int i = 0; i < 200 && hi - lo > 1e-15 * hi; ++i) {
    const double mid = 0.5 * (lo + hi);
    (cdf(mid) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

// GIG(1/2, a, b) written out here: unnormalised density, normaliser, CDF and quantile.
struct GigHalf {
  double a, b;
  double norm;

  GigHalf(double a_, double b_) : a(a_), b(b_) {
    // x = t^2 removes the x^(-1/2) factor and the endpoint singularity.
    auto f = [this](double t) { return t > 0.0 ? 2.0 * std::exp(-0.5 * (a * t * t + b / (t * t))) : 0.0; };
    norm = boost::math::quadrature::exp_sinh<double>().integrate(f, 0.0, std::numeric_limits<double>::infinity(), 1e-13);
  }
  double cdf(double x) const {
    auto f = [this](double t) { return t > 0.0 ? 2.0 * std::exp(-0.5 * (a * t * t + b / (t * t))) : 0.0; };
    return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, 0.0, std::sqrt(x), 20, 1e-13) / norm;
  }
  double quantile(double p) const {
    return bisect_quantile([this](double x) { return cdf(x); }, p);
  }
  // Raw moment E[X^r] from the Bessel ratio.
  double raw(int r) const {
    const double w = std::sqrt(a * b);
    return std::pow(b / a, 0.5 * r) * boost::math::cyl_bessel_k(0.5 + r, w) / boost::math::cyl_bessel_k(0.5, w);
  }
};

Outcome sampler_laws() {
  constexpr std::size_t kDraws = 100000;
  constexpr int kBins = 50;
  Rng rng(7771);
  double worst_z = 0.0, worst_p = 1.0;
  std::ostringstream notes;

  auto record = [&](const std::string& tag, const MomentCheck& m, double p) {
    worst_z = std::max({worst_z, std::abs(m.z_mean), std::abs(m.z_var)});
    worst_p = std::min(worst_p, p);
    notes << tag << " z=" << fmt("%.2f", m.z_mean) << "/" << fmt("%.2f", m.z_var) << " p=" << fmt("%.3f", p) << " ";
  };

  for (auto [mu, shape] : std::vector<std::pair<double, double>>{{2.0, 1.0}, {0.5, 3.0}, {1.0, 1e6}}) {
    std::vector<double> d(kDraws);
    for (double& v : d) v = sample_inverse_gaussian(mu, shape, rng);
    const double var = mu * mu * mu / shape;
    const double p = chi_square_p(
        d, [&](double q) { return bisect_quantile([&](double x) { return ig_cdf(x, mu, shape); }, q); }, kBins);
    record("IG(" + fmt("%g", mu) + "," + fmt("%g", shape) + ")", moments(d, mu, var, var * var * (3.0 + 15.0 * mu / shape)), p);
  }

  auto gig_check = [&](const std::string& tag, const GigHalf& g, const std::vector<double>& d) {
    const double m1 = g.raw(1), m2 = g.raw(2), m3 = g.raw(3), m4 = g.raw(4);
    const double var = m2 - m1 * m1;
    const double mu4 = m4 - 4.0 * m1 * m3 + 6.0 * m1 * m1 * m2 - 3.0 * m1 * m1 * m1 * m1;
    const double p = chi_square_p(d, [&](double q) { return g.quantile(q); }, kBins);
    record(tag, moments(d, m1, var, mu4), p);
  };

  // lambda | zeta ~ GIG(1/2, 1, C^2 zeta^2)
  double norm_err = 0.0;
  for (auto [c, z] : std::vector<std::pair<double, double>>{{1.0, 2.0}, {0.1, -3.0}}) {
    const GigHalf g(1.0, c * c * z * z);
    norm_err = std::max(norm_err, std::abs(g.norm / (std::sqrt(2.0 * M_PI) * std::exp(-std::abs(c * z))) - 1.0));
    std::vector<double> d(kDraws);
    for (double& v : d) v = sample_lambda(c, z, rng);
    gig_check("lambda(C=" + fmt("%g", c) + ",zeta=" + fmt("%g", z) + ")", g, d);
  }
  // If y ~ IG(|b|, a) then 1/y ~ GIG(1/2, a, a / b^2).
  {
    const double a = 2.0, b = 0.5;
    std::vector<double> d(kDraws);
    for (double& v : d) v = 1.0 / sample_inverse_gaussian(std::abs(b), a, rng);
    gig_check("1/IG(.5,2)", GigHalf(a, a / (b * b)), d);
  }
  // Six chi-square tests share a family-wise 1% level.
  const double level = 0.01 / 6.0;
  const bool pass = worst_z <= 3.0 && worst_p > level && norm_err < 1e-9;
  return {pass, "max |z| " + fmt("%.2f", worst_z) + ", min chi2 p " + fmt("%.4f", worst_p) + " vs " + fmt("%.4f", level) +
                    ", GIG normaliser rel err " + fmt("%.1e", norm_err) + "; " + notes.str()};
}

// ---------------------------------------------------------------- 3
Outcome toy_posterior_oracle() {
  const toy::Setup setup;
  const auto exact = toy::enumerate(setup);
  const auto empirical = toy::run(setup, 2000, 1000000, 20240611);
  const double tv = toy::total_variation(exact, empirical);
  return {tv <= 0.02, "TV " + fmt("%.4f", tv) + " over " + std::to_string(exact.size()) +
                          " (partition, component) states, 1e6 sweeps"};
}

// ---------------------------------------------------------------- 4
Outcome eta_gibbs() {
  constexpr std::size_t kDraws = 10000;
  Hyperparams h = Hyperparams::animals(2);
  h.depth = 2;
  h.trunc = 2;
  h.margin_cost = 0.7;
  h.margin_eps = 1.0;
  h.eta_prior_scale = 1.5;

  Vec root_w(3);
  root_w << std::log(0.6), std::log(0.4), -INFINITY;
  Tree tree(root_w, 2);
  auto eta = [](double a, double b) { return (Vec(2) << a, b).finished(); };
  const NodeId na = tree.add_child(tree.root(), root_w, eta(0.5, 0.0));
  const NodeId nb = tree.add_child(tree.root(), root_w, eta(-0.5, 0.0));
  const NodeId na1 = tree.add_child(na, root_w, eta(0.1, 0.2));
  const NodeId na2 = tree.add_child(na, root_w, eta(0.0, 0.1));
  const NodeId nb1 = tree.add_child(nb, root_w, eta(0.3, -0.2));

  Rng rng(4242);
  const std::size_t n_data = 24;
  DataMatrix x(static_cast<Eigen::Index>(n_data), 2);
  ChainState st;
  st.tree = tree;
  st.kernels = {eta(0.0, 0.0), eta(1.0, 1.0)};
  std::uniform_real_distribution<double> aug(0.2, 3.0);
  for (std::size_t n = 0; n < n_data; ++n) {
    x(static_cast<Eigen::Index>(n), 0) = 1.5 * sample_normal(rng);
    x(static_cast<Eigen::Index>(n), 1) = 1.5 * sample_normal(rng);
    PathAssignment a;
    a.path = n % 3 == 0 ? Path{kRootId, na, na1} : n % 3 == 1 ? Path{kRootId, na, na2} : Path{kRootId, nb, nb1};
    a.aug = aug(rng);
    a.component = n % 2;
    st.assignments.push_back(a);
  }
  Sampler sampler(h, x, McmcOptions{});
  sampler.set_state(st);
  const Tree& t = sampler.state().tree;

  // Worst violation from the definition: eps0 [z != v] - (eta_v - eta_z) x over occupied siblings.
  struct Worst {
    int level;
    NodeId node;
  };
  std::vector<Worst> worst(n_data);
  std::size_t mismatched = 0;
  for (std::size_t n = 0; n < n_data; ++n) {
    const Vec xn = x.row(static_cast<Eigen::Index>(n)).transpose();
    const auto& path = st.assignments[n].path;
    double best = -INFINITY;
    for (int l = 1; l <= 2; ++l) {
      const NodeId v = path[static_cast<std::size_t>(l)];
      for (NodeId z : t.node(*t.node(v).parent).children) {
        if (z == v) continue;
        const double zeta = h.margin_eps - (t.node(v).margin - t.node(z).margin).dot(xn);
        if (zeta > best) {
          best = zeta;
          worst[n] = {l, z};
        }
      }
    }
    const auto& got = sampler.state().assignments[n].violation;
    if (got.level != worst[n].level || got.node != worst[n].node) ++mismatched;
  }

  // Canonical parameters written out term by term, with prior precision nu0^-2 I.
  const double c = h.margin_cost, eps0 = h.margin_eps, nu0 = h.eta_prior_scale;
  auto oracle = [&](NodeId z) {
    const int level = t.node(z).level;
    Mat lambda = Mat::Identity(2, 2) / (nu0 * nu0);
    Vec nu = Vec::Zero(2);
    int touching = 0;
    for (std::size_t n = 0; n < n_data; ++n) {
      if (worst[n].level != level) continue;
      const Vec xn = x.row(static_cast<Eigen::Index>(n)).transpose();
      const double l = st.assignments[n].aug;
      const NodeId v = st.assignments[n].path[static_cast<std::size_t>(level)];
      const NodeId s = worst[n].node;
      if (v == z)
        nu += c * c / l * ((l / c + eps0) * xn + xn * xn.dot(t.node(s).margin));
      else if (s == z)
        nu -= c * c / l * ((l / c + eps0) * xn - xn * xn.dot(t.node(v).margin));
      else
        continue;
      lambda += c * c * xn * xn.transpose() / l;
      ++touching;
    }
    return std::make_tuple(nu, lambda, touching);
  };

  double worst_z = 0.0, param_err = 0.0;
  bool prior_ok = true;
  std::ostringstream notes;
  for (NodeId z : {na, nb, na1, na2, nb1}) {
    const auto [nu, lambda, touching] = oracle(z);
    const Mat cov = lambda.inverse();
    const Vec mean = cov * nu;
    const auto g = sampler.eta_conditional(z);
    param_err = std::max({param_err, (g.potential - nu).norm() / std::max(1.0, nu.norm()),
                          (g.precision - lambda).norm() / lambda.norm()});
    if (touching == 0) {
      const bool is_prior = nu.isZero(0.0) && lambda.isApprox(Mat::Identity(2, 2) / (nu0 * nu0), 0.0);
      prior_ok = prior_ok && is_prior;
    }
    Vec sum = Vec::Zero(2);
    std::vector<Vec> draws;
    for (std::size_t i = 0; i < kDraws; ++i) {
      draws.push_back(sampler.gibbs_eta(z, rng));
      sum += draws.back();
    }
    const double nd = static_cast<double>(kDraws);
    const Vec m = sum / nd;
    Mat s = Mat::Zero(2, 2);
    for (const auto& d : draws) s += (d - m) * (d - m).transpose();
    s /= nd - 1.0;
    for (Eigen::Index i = 0; i < 2; ++i) {
      worst_z = std::max(worst_z, std::abs(m[i] - mean[i]) / std::sqrt(cov(i, i) / nd));
      for (Eigen::Index j = 0; j < 2; ++j) {
        const double se = std::sqrt((cov(i, i) * cov(j, j) + cov(i, j) * cov(i, j)) / nd);
        worst_z = std::max(worst_z, std::abs(s(i, j) - cov(i, j)) / se);
      }
    }
    notes << "node " << z.value << " data " << touching << "; ";
  }
  const bool pass = mismatched == 0 && worst_z <= 3.0 && prior_ok && param_err < 1e-12;
  return {pass, "max |z| " + fmt("%.2f", worst_z) + ", canonical rel err " + fmt("%.1e", param_err) +
                    ", argmax mismatches " + std::to_string(mismatched) + ", no-data prior " +
                    (prior_ok ? "ok" : "wrong") + "; " + notes.str()};
}

// ---------------------------------------------------------------- 5
Outcome regularisation_effect() {
  Hyperparams gen = Hyperparams::animals(2);
  gen.depth = 3;
  gen.trunc = 8;
  gen.gamma0 = 3.0;
  gen.gamma = 0.5;
  gen.prior_cov = 16.0 * Mat::Identity(2, 2);
  gen.kernel_cov = 0.16 * Mat::Identity(2, 2);
  Rng data_rng(1);
  const Generated g = generate_dataset(gen, 80, data_rng);

  McmcOptions opts;
  opts.burnin = 2000;
  opts.draws = 3000;
  std::ostringstream notes;
  std::map<double, std::pair<double, double>> med;
  for (double cost : {1.0, 1e-4}) {
    Hyperparams h = gen;
    h.margin_cost = cost;
    h.margin_eps = 1.0;
    std::vector<double> aids, aods;
    for (std::uint64_t chain = 0; chain < 10; ++chain) {
      Rng rng(1 + chain);
      const Trace trace = run_chain(h, g.data.x, opts, rng);
      const EvalReport r = evaluate(merge_singletons(to_hierarchy(trace.best)), g.data.x, nullptr);
      if (!r.aod) continue;  // singular trees are excluded from both aggregates
      aids.push_back(r.aid);
      aods.push_back(*r.aod);
    }
    if (aids.empty()) return {false, "every chain at C=" + fmt("%g", cost) + " returned a singular tree"};
    med[cost] = {median(aids), median(aods)};
    notes << "C=" << fmt("%g", cost) << ": median AID " << fmt("%.3f", med[cost].first) << ", median AOD "
          << fmt("%.3f", med[cost].second) << " over " << aids.size() << " non-singular; ";
  }
  const bool pass = med[1.0].first < med[1e-4].first && med[1.0].second > med[1e-4].second;
  return {pass, notes.str()};
}

// ---------------------------------------------------------------- 6
Outcome rcdl_selection() {
  Hyperparams h = Hyperparams::animals(2);
  h.depth = 2;
  h.trunc = 4;
  h.margin_cost = 0.5;
  Rng data_rng(3);
  const Generated g = generate_dataset(h, 40, data_rng);
  McmcOptions opts;
  opts.burnin = 200;
  opts.draws = 300;

  Rng rng(5);
  const Trace trace = run_chain(h, g.data.x, opts, rng);
  const double best = *std::max_element(trace.rcdl.begin() + static_cast<std::ptrdiff_t>(opts.burnin), trace.rcdl.end());
  const bool selected = trace.best_rcdl == best && trace.rcdl[trace.best_iter] == best;

  // The stored snapshot reproduces its recorded RCDL.
  Sampler replay(h, g.data.x, opts);
  replay.set_state(trace.best);
  const bool snapshot = replay.rcdl() == trace.best_rcdl;

  // All zeta <= 0 by construction: eps0 = 0 and every margin vector zero.
  Hyperparams flat = h;
  flat.margin_eps = 0.0;
  ChainState zeroed = trace.best;
  std::vector<NodeId> ids;
  for (const auto& [id, node] : zeroed.tree.nodes()) ids.push_back(id);
  for (NodeId id : ids) zeroed.tree.node(id).margin.setZero();
  Sampler constructed(flat, g.data.x, opts);
  constructed.set_state(zeroed);
  const bool construction = constructed.rcdl() == constructed.cdl();

  // C towards zero: the hinge discount vanishes below double resolution on every iteration.
  Hyperparams tiny = h;
  tiny.margin_cost = 1e-20;
  Rng tiny_rng(6);
  const Trace t2 = run_chain(tiny, g.data.x, opts, tiny_rng);
  double diff = 0.0;
  for (std::size_t i = 0; i < t2.rcdl.size(); ++i) diff = std::max(diff, std::abs(t2.rcdl[i] - t2.cdl[i]));

  const bool pass = selected && snapshot && construction && diff == 0.0;
  return {pass, std::string("selected ") + (selected ? "= max" : "!= max") + ", snapshot replay " +
                    (snapshot ? "exact" : "differs") + ", zero-margin RCDL-CDL " +
                    fmt("%.1e", constructed.rcdl() - constructed.cdl()) + ", C=1e-20 max |RCDL-CDL| " + fmt("%.1e", diff)};
}

// ---------------------------------------------------------------- 7
Outcome vi_gradient() {
  constexpr double kStep = 1e-5;
  double worst = 0.0;
  double smallest = INFINITY;
  for (int i = 0; i < 20; ++i) {
    Hyperparams h = Hyperparams::animals(2);
    h.depth = 2;
    h.trunc = 4;
    h.vi_weight = 0.3;
    Rng rng(static_cast<std::uint64_t>(100 + i));
    const Generated g = generate_dataset(h, 30, rng);
    const ViProblem problem(g.data.x, h, ViSkeleton::complete(2, 2));
    // States come from a few unregularised cycles plus noise on the means.
    Hyperparams plain = h;
    plain.vi_weight = 0.0;
    const ViProblem warm(g.data.x, plain, ViSkeleton::complete(2, 2));
    ViState state = init_vi(warm, rng);
    ViOptions opts;
    for (int c = 0; c < i % 4; ++c) vi_cycle(state, warm, opts);
    for (auto& m : state.kernel_mean)
      for (Eigen::Index d = 0; d < m.size(); ++d) m[d] += 0.5 * sample_normal(rng);
    const std::size_t k = static_cast<std::size_t>(i) % h.trunc;

    const Vec grad = grad_relbo_mean(k, state, problem);
    const FrozenQ frozen = freeze_q(k, state, problem);
    Vec fd(grad.size());
    for (Eigen::Index d = 0; d < grad.size(); ++d) {
      ViState plus = state, minus = state;
      plus.kernel_mean[k][d] += kStep;
      minus.kernel_mean[k][d] -= kStep;
      fd[d] = (relbo_frozen(plus, problem, frozen) - relbo_frozen(minus, problem, frozen)) / (2.0 * kStep);
    }
    worst = std::max(worst, (grad - fd).norm() / fd.norm());
    smallest = std::min(smallest, fd.norm());
  }
  return {worst <= 1e-4, "20 states, max rel err " + fmt("%.2e", worst) + ", smallest |grad| " + fmt("%.2e", smallest)};
}

// ---------------------------------------------------------------- 8
Outcome vi_monotone() {
  Hyperparams h = Hyperparams::animals(2);
  h.depth = 2;
  h.trunc = 5;
  h.vi_weight = 0.0;
  Rng data_rng(11);
  const Generated g = generate_dataset(h, 60, data_rng);
  const ViProblem problem(g.data.x, h, ViSkeleton::complete(2, 3));
  ViOptions opts;
  double worst = INFINITY;
  bool finite = true;
  std::size_t cycles = 0;
  for (std::uint64_t init = 0; init < 10; ++init) {
    Rng rng(500 + init);
    ViState state = init_vi(problem, rng);
    double previous = relbo(state, problem);
    finite = finite && std::isfinite(previous);
    for (int c = 0; c < 40; ++c) {
      vi_cycle(state, problem, opts);
      const double value = relbo(state, problem);
      finite = finite && std::isfinite(value);
      worst = std::min(worst, value - previous);
      previous = value;
      ++cycles;
    }
  }
  return {finite && worst >= -1e-8, std::to_string(cycles) + " cycles over 10 inits, smallest change " +
                                        fmt("%.2e", worst) + (finite ? ", all finite" : ", non-finite value")};
}

// ---------------------------------------------------------------- 9
// Random hierarchy with every leaf at `depth`; nodes split into one to three non-empty groups.
Hierarchy random_hierarchy(std::size_t n, int depth, Rng& rng) {
  Hierarchy h;
  h.num_data = n;
  std::uint32_t next = 0;
  auto build = [&](auto&& self, std::vector<std::size_t> members, std::optional<NodeId> parent, int level) -> NodeId {
    const NodeId id{next++};
    std::sort(members.begin(), members.end());
    h.nodes.push_back({id, parent, {}, level, Vec(), Vec(), members});
    const std::size_t slot = h.nodes.size() - 1;
    if (level == depth) return id;
    std::uniform_int_distribution<std::size_t> parts(1, std::min<std::size_t>(3, members.size()));
    const std::size_t k = parts(rng);
    std::shuffle(members.begin(), members.end(), rng);
    std::vector<std::vector<std::size_t>> groups(k);
    for (std::size_t i = 0; i < members.size(); ++i)
      groups[i < k ? i : std::uniform_int_distribution<std::size_t>(0, k - 1)(rng)].push_back(members[i]);
    for (auto& grp : groups) {
      const NodeId child = self(self, grp, id, level + 1);
      h.nodes[slot].children.push_back(child);
    }
    return id;
  };
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), std::size_t{0});
  build(build, all, std::nullopt, 0);
  return h;
}

bool close(double a, double b) { return std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(b)); }

Outcome metric_oracles() {
  Rng rng(9);
  int bad = 0;
  for (int inst = 0; inst < 25; ++inst) {
    const std::size_t n = 6 + static_cast<std::size_t>(inst);
    const int dim = 1 + inst % 3;
    const int depth = 1 + inst % 3;
    DataMatrix x(static_cast<Eigen::Index>(n), dim);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = 2.0 * sample_normal(rng);
    const Hierarchy h = random_hierarchy(n, depth, rng);
    h.validate();
    std::map<std::size_t, std::string> labels;
    for (std::size_t i = 0; i < n; ++i) labels[i] = std::string(1, static_cast<char>('a' + rng() % 3));

    // AID: pairwise double loop.
    double aid_ref = 0.0;
    for (const auto& node : h.nodes) {
      if (!node.parent) continue;
      const auto& m = node.members;
      if (m.size() < 2) continue;
      double pairs = 0.0;
      for (std::size_t i = 0; i < m.size(); ++i)
        for (std::size_t j = i + 1; j < m.size(); ++j)
          pairs += (x.row(static_cast<Eigen::Index>(m[i])) - x.row(static_cast<Eigen::Index>(m[j]))).squaredNorm();
      aid_ref += 2.0 * pairs / (static_cast<double>(m.size()) * static_cast<double>(m.size() - 1));
    }
    aid_ref /= static_cast<double>(h.nodes.size() - 1);

    // AOD: all ordered sibling pairs.
    auto centre = [&](const Hierarchy::Node& node) {
      Vec c = Vec::Zero(dim);
      for (std::size_t m : node.members) c += x.row(static_cast<Eigen::Index>(m)).transpose();
      return Vec(c / static_cast<double>(node.members.size()));
    };
    double aod_sum = 0.0, unordered = 0.0;
    std::size_t ordered = 0;
    for (const auto& a : h.nodes)
      for (const auto& b : h.nodes)
        if (a.parent && b.parent && a.id != b.id && *a.parent == *b.parent) {
          const double d2 = (centre(a) - centre(b)).squaredNorm();
          aod_sum += d2;
          if (a.id < b.id) unordered += 2.0 * d2;
          ++ordered;
        }

    // F-measure: full (class, cluster) table per level with precision and recall.
    const auto paths = h.datum_paths();
    std::map<int, double> f_ref;
    for (int level = 1; level <= depth; ++level) {
      std::set<std::string> classes;
      std::set<NodeId> clusters;
      for (std::size_t i = 0; i < n; ++i) {
        classes.insert(labels[i]);
        clusters.insert(paths[i][static_cast<std::size_t>(level)]);
      }
      double score = 0.0;
      for (const auto& cls : classes) {
        double class_size = 0.0, best = 0.0;
        for (std::size_t i = 0; i < n; ++i) class_size += labels[i] == cls;
        for (NodeId cl : clusters) {
          double both = 0.0, cluster_size = 0.0;
          for (std::size_t i = 0; i < n; ++i) {
            const bool in = paths[i][static_cast<std::size_t>(level)] == cl;
            cluster_size += in;
            both += in && labels[i] == cls;
          }
          if (both == 0.0) continue;
          const double precision = both / cluster_size, recall = both / class_size;
          best = std::max(best, 2.0 * precision * recall / (precision + recall));
        }
        score += class_size / static_cast<double>(n) * best;
      }
      f_ref[level] = score;
    }

    const EvalReport r = evaluate(h, x, &labels);
    bool ok = close(r.aid, aid_ref);
    if (ordered == 0) {
      ok = ok && !r.aod;
    } else {
      ok = ok && r.aod && close(*r.aod, aod_sum / static_cast<double>(ordered)) &&
           close(*r.aod, unordered / static_cast<double>(ordered));
    }
    ok = ok && r.f_by_level.size() == f_ref.size();
    for (const auto& [level, v] : f_ref) ok = ok && r.f_by_level.count(level) && close(r.f_by_level.at(level), v);
    if (!ok) ++bad;
  }

  // Hand cases.
  auto leaf = [](std::uint32_t id, std::uint32_t parent, int level, std::vector<std::size_t> m) {
    return Hierarchy::Node{NodeId{id}, NodeId{parent}, {}, level, Vec(), Vec(), std::move(m)};
  };
  Hierarchy pair;
  pair.num_data = 2;
  pair.nodes = {{kRootId, std::nullopt, {NodeId{1}}, 0, Vec(), Vec(), {0, 1}}, leaf(1, 0, 1, {0, 1})};
  DataMatrix x02(2, 1);
  x02 << 0.0, 2.0;
  const bool aid_case = aid(pair, x02) == 4.0;

  Hierarchy sibs;
  sibs.num_data = 2;
  sibs.nodes = {{kRootId, std::nullopt, {NodeId{1}, NodeId{2}}, 0, Vec(), Vec(), {0, 1}}, leaf(1, 0, 1, {0}), leaf(2, 0, 1, {1})};
  DataMatrix x03(2, 1);
  x03 << 0.0, 3.0;
  const auto aod_val = aod(sibs, x03);
  const bool aod_case = aod_val && *aod_val == 9.0;

  Hierarchy one;
  one.num_data = 4;
  one.nodes = {{kRootId, std::nullopt, {NodeId{1}}, 0, Vec(), Vec(), {0, 1, 2, 3}}, leaf(1, 0, 1, {0, 1, 2, 3})};
  const std::map<std::size_t, std::string> two_classes{{0, "p"}, {1, "p"}, {2, "q"}, {3, "q"}};
  const bool f_case = f_measure_by_level(one, two_classes).at(1) == 2.0 / 3.0;

  const bool pass = bad == 0 && aid_case && aod_case && f_case;
  return {pass, std::to_string(25 - bad) + "/25 random instances match, hand cases AID " + (aid_case ? "ok" : "wrong") +
                    " AOD " + (aod_case ? "ok" : "wrong") + " F " + (f_case ? "ok" : "wrong")};
}

// ---------------------------------------------------------------- 10
std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) out[fs::relative(e.path(), dir).string()] = read_text(e.path());
  return out;
}

Outcome reproducibility() {
  const fs::path root = fs::temp_directory_path() / ("rbhmc_accept_" + std::to_string(::getpid()));
  fs::remove_all(root);
  RunConfig gen;
  gen.set("n", "40");
  gen.set("dim", "2");
  gen.set("depth", "2");
  gen.set("seed", "17");
  cmd_generate(gen, root / "data");
  const fs::path data = root / "data" / "data.csv";

  std::ostringstream notes;
  bool pass = true;
  auto twice = [&](const std::string& tag, RunConfig cfg) {
    cmd_fit(cfg, data, root / (tag + "_a"));
    cmd_fit(cfg, data, root / (tag + "_b"));
    const auto a = snapshot(root / (tag + "_a")), b = snapshot(root / (tag + "_b"));
    std::size_t traces = 0, trees = 0;
    for (const auto& [name, text] : a) {
      traces += fs::path(name).extension() == ".csv";
      trees += fs::path(name).extension() == ".json" && name.find("tree") != std::string::npos;
    }
    const bool same = !a.empty() && a == b && traces > 0 && trees > 0;
    pass = pass && same;
    notes << tag << ": " << a.size() << " files " << (same ? "identical" : "differ");
    for (const auto& [name, text] : a)
      if (!b.count(name) || b.at(name) != text) notes << " [" << name << "]";
    notes << "; ";
  };

  RunConfig mcmc;
  mcmc.set("depth", "2");
  mcmc.set("trunc", "4");
  mcmc.set("burnin", "50");
  mcmc.set("draws", "50");
  mcmc.set("chains", "2");
  mcmc.set("jobs", "2");
  mcmc.set("seed", "23");
  twice("mcmc", mcmc);

  RunConfig vi = mcmc;
  vi.set("mode", "vi");
  vi.set("vi_max_cycles", "20");
  twice("vi", vi);
  fs::remove_all(root);
  return {pass, notes.str()};
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all{
      {1, "augmentation identity", augmentation_identity},
      {2, "sampler laws", sampler_laws},
      {3, "regularised posterior oracle", toy_posterior_oracle},
      {4, "eta conditional", eta_gibbs},
      {5, "regularisation effect", regularisation_effect},
      {6, "RCDL selection", rcdl_selection},
      {7, "VI gradient", vi_gradient},
      {8, "VI monotonicity without regulariser", vi_monotone},
      {9, "metric oracles", metric_oracles},
      {10, "reproducibility", reproducibility},
  };
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));
  int failures = 0;
  for (const auto& c : all) {
    if (!wanted.empty() && !wanted.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("criterion %2d %s: %s (%s; %.1f s)\n", c.id, c.name, o.pass ? "PASS" : "FAIL", o.detail.c_str(), secs);
    std::fflush(stdout);
    if (!o.pass) ++failures;
  }
  return failures == 0 ? 0 : 1;
}
