#include "rbhmc/vi.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <boost/math/special_functions/digamma.hpp>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <string>

#include "rbhmc/error.hpp"
#include "rbhmc/hierarchy.hpp"

namespace rbhmc {

namespace {

using boost::math::digamma;

constexpr double kLog2Pi = 1.8378770664093453;

double log_beta_fn(double a, double b) { return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b); }

double beta_entropy(double a, double b) {
  return log_beta_fn(a, b) - (a - 1.0) * digamma(a) - (b - 1.0) * digamma(b) + (a + b - 2.0) * digamma(a + b);
}

double dirichlet_entropy(const Vec& w) {
  const double total = w.sum();
  double log_b = -std::lgamma(total);
  double t = 0.0;
  for (Eigen::Index k = 0; k < w.size(); ++k) {
    log_b += std::lgamma(w[k]);
    t -= (w[k] - 1.0) * digamma(w[k]);
  }
  return log_b + (total - static_cast<double>(w.size())) * digamma(total) + t;
}

void fill_weight_expectations(ViExpectations& e, const ViState& s, const ViProblem& problem) {
  const auto& sk = problem.skeleton();
  const auto k_trunc = static_cast<Eigen::Index>(problem.trunc());
  e.elog_o.resize(k_trunc);
  e.elog_1mo.resize(k_trunc);
  Vec e_o(k_trunc);
  for (Eigen::Index k = 0; k < k_trunc; ++k) {
    const auto [r1, r2] = s.root_sticks[static_cast<std::size_t>(k)];
    const double dsum = digamma(r1 + r2);
    e.elog_o[k] = digamma(r1) - dsum;
    e.elog_1mo[k] = digamma(r2) - dsum;
    e_o[k] = r1 / (r1 + r2);
  }
  e.elog_beta.assign(sk.size(), Vec());
  e.e_beta.assign(sk.size(), Vec());
  Vec root_log(k_trunc + 1), root_mean(k_trunc + 1);
  double log_rest = 0.0, rest = 1.0;
  for (Eigen::Index k = 0; k < k_trunc; ++k) {
    root_log[k] = e.elog_o[k] + log_rest;
    root_mean[k] = e_o[k] * rest;
    log_rest += e.elog_1mo[k];
    rest *= 1.0 - e_o[k];
  }
  root_log[k_trunc] = log_rest;
  root_mean[k_trunc] = rest;
  e.elog_beta[0] = root_log;
  e.e_beta[0] = root_mean;
  e.elog_u.assign(sk.size(), 0.0);
  e.elog_1mu.assign(sk.size(), 0.0);
  for (std::size_t z = 1; z < sk.size(); ++z) {
    const Vec& w = s.node_conc[z];
    if (w.size() == 0) continue;  // not yet initialised
    const double total = w.sum();
    const double dsum = digamma(total);
    Vec el(w.size());
    for (Eigen::Index k = 0; k < w.size(); ++k) el[k] = digamma(w[k]) - dsum;
    e.elog_beta[z] = el;
    e.e_beta[z] = w / total;
    const auto [a1, a2] = s.sticks[z];
    const double ds = digamma(a1 + a2);
    e.elog_u[z] = digamma(a1) - ds;
    e.elog_1mu[z] = digamma(a2) - ds;
  }
}

void fill_kernel_expectations(ViExpectations& e, const ViState& s, const ViProblem& problem) {
  const auto& x = problem.x();
  const auto n_data = x.rows();
  const auto k_trunc = static_cast<Eigen::Index>(problem.trunc());
  const auto d = static_cast<double>(x.cols());
  const Mat& prec = problem.kernel().precision();
  const Mat& sigma = problem.kernel().cov();
  Eigen::LLT<Mat> sig_llt(sigma);
  const double sig_logdet = 2.0 * Mat(sig_llt.matrixL()).diagonal().array().log().sum();
  e.elog_f.resize(n_data, k_trunc);
  e.log_e_f.resize(n_data, k_trunc);
  for (Eigen::Index k = 0; k < k_trunc; ++k) {
    const Vec& m = s.kernel_mean[static_cast<std::size_t>(k)];
    const Mat& phi = s.kernel_cov[static_cast<std::size_t>(k)];
    Eigen::LLT<Mat> phi_llt(phi);
    if (phi_llt.info() != Eigen::Success || !phi.allFinite())
      fail(ErrorKind::Numerical, "kernel covariance " + std::to_string(k) + " is not positive definite");
    const double trace_term = (prec * phi).trace();
    Eigen::LLT<Mat> marg(sigma + phi);
    if (marg.info() != Eigen::Success) fail(ErrorKind::Numerical, "marginal kernel covariance is not positive definite");
    const Mat lm = marg.matrixL();
    const double marg_logdet = 2.0 * lm.diagonal().array().log().sum();
    for (Eigen::Index n = 0; n < n_data; ++n) {
      const Vec r = x.row(n).transpose() - m;
      e.elog_f(n, k) = -0.5 * d * kLog2Pi - 0.5 * sig_logdet - 0.5 * (r.dot(prec * r) + trace_term);
      const Vec w = lm.triangularView<Eigen::Lower>().solve(r);
      e.log_e_f(n, k) = -0.5 * d * kLog2Pi - 0.5 * marg_logdet - 0.5 * w.squaredNorm();
    }
  }
}

std::vector<int> siblings(const ViSkeleton& sk, int z) {
  std::vector<int> out;
  if (sk.parent[static_cast<std::size_t>(z)] < 0) return out;
  for (int c : sk.children[static_cast<std::size_t>(sk.parent[static_cast<std::size_t>(z)])])
    if (c != z) out.push_back(c);
  return out;
}

// log sum_k E[beta_zk] E[f_nk] over the K real components
double log_similarity(std::size_t n, int z, const ViExpectations& e, std::size_t k_trunc) {
  const Vec& eb = e.e_beta[static_cast<std::size_t>(z)];
  Vec t(static_cast<Eigen::Index>(k_trunc));
  for (std::size_t k = 0; k < k_trunc; ++k) {
    const auto i = static_cast<Eigen::Index>(k);
    t[i] = std::log(eb[i]) + e.log_e_f(static_cast<Eigen::Index>(n), i);
  }
  return log_sum_exp(t);
}

double path_prior(const std::vector<int>& path, const ViSkeleton& sk, const ViExpectations& e) {
  double t = 0.0;
  for (std::size_t l = 1; l < path.size(); ++l) {
    const int z = path[l];
    t += e.elog_u[static_cast<std::size_t>(z)];
    for (int s : sk.children[static_cast<std::size_t>(sk.parent[static_cast<std::size_t>(z)])]) {
      if (s == z) break;
      t += e.elog_1mu[static_cast<std::size_t>(s)];
    }
  }
  return t;
}

double path_regulariser(std::size_t n, const std::vector<int>& path, const ViProblem& problem,
                        const ViExpectations& e) {
  double t = 0.0;
  for (std::size_t l = 1; l < path.size(); ++l)
    for (int s : siblings(problem.skeleton(), path[l])) t += log_similarity(n, s, e, problem.trunc());
  return t;
}

double row_entropy(const Eigen::RowVectorXd& r) {
  double h = 0.0;
  for (Eigen::Index k = 0; k < r.size(); ++k)
    if (r[k] > 0.0) h -= r[k] * std::log(r[k]);
  return h;
}

}  // namespace

ViSkeleton ViSkeleton::complete(int depth, std::size_t branching) {
  if (depth < 1) fail(ErrorKind::Parameter, "skeleton depth must be at least 1");
  if (branching < 1) fail(ErrorKind::Parameter, "skeleton branching must be at least 1");
  ViSkeleton sk;
  sk.depth = depth;
  sk.parent.push_back(-1);
  sk.children.emplace_back();
  sk.level.push_back(0);
  std::vector<int> frontier{0};
  for (int l = 1; l <= depth; ++l) {
    std::vector<int> next;
    for (int p : frontier) {
      for (std::size_t b = 0; b < branching; ++b) {
        const int id = static_cast<int>(sk.parent.size());
        sk.parent.push_back(p);
        sk.children.emplace_back();
        sk.level.push_back(l);
        sk.children[static_cast<std::size_t>(p)].push_back(id);
        next.push_back(id);
      }
    }
    frontier = std::move(next);
  }
  for (int leaf : frontier) {
    std::vector<int> path;
    for (int z = leaf; z >= 0; z = sk.parent[static_cast<std::size_t>(z)]) path.push_back(z);
    std::reverse(path.begin(), path.end());
    sk.paths.push_back(std::move(path));
  }
  return sk;
}

ViSkeleton ViSkeleton::from_tree(const Tree& tree) {
  ViSkeleton sk;
  std::map<NodeId, int> index;
  for (const auto& [id, node] : tree.nodes()) {
    const int i = static_cast<int>(sk.parent.size());
    index[id] = i;
    sk.parent.push_back(node.parent ? index.at(*node.parent) : -1);
    sk.children.emplace_back();
    sk.level.push_back(node.level);
    if (node.parent) sk.children[static_cast<std::size_t>(index.at(*node.parent))].push_back(i);
    sk.depth = std::max(sk.depth, node.level);
  }
  for (std::size_t z = 0; z < sk.size(); ++z) {
    if (!sk.children[z].empty() || sk.level[z] != sk.depth) continue;
    std::vector<int> path;
    for (int v = static_cast<int>(z); v >= 0; v = sk.parent[static_cast<std::size_t>(v)]) path.push_back(v);
    std::reverse(path.begin(), path.end());
    sk.paths.push_back(std::move(path));
  }
  return sk;
}

ViProblem::ViProblem(const DataMatrix& x, Hyperparams hyper, ViSkeleton skeleton)
    : x_(x),
      hyper_(std::move(hyper)),
      skeleton_(std::move(skeleton)),
      kernel_((hyper_.validate(), hyper_.kernel_cov)) {
  if (x_.rows() < 1) fail(ErrorKind::Data, "no data");
  if (static_cast<std::size_t>(x_.cols()) != hyper_.dim()) fail(ErrorKind::Parameter, "data dimension does not match the model");
  if (skeleton_.paths.empty()) fail(ErrorKind::State, "skeleton has no candidate paths");
  if (skeleton_.depth != hyper_.depth) fail(ErrorKind::Parameter, "skeleton depth does not match the model depth");
  Eigen::LLT<Mat> llt(hyper_.prior_cov);
  prior_precision_ = llt.solve(Mat::Identity(hyper_.prior_cov.rows(), hyper_.prior_cov.cols()));
  prior_logdet_ = 2.0 * Mat(llt.matrixL()).diagonal().array().log().sum();
}

ViExpectations expectations(const ViState& state, const ViProblem& problem) {
  ViExpectations e;
  fill_weight_expectations(e, state, problem);
  fill_kernel_expectations(e, state, problem);
  return e;
}

double path_score(std::size_t n, std::size_t p, const ViState& state, const ViProblem& problem,
                  const ViExpectations& e) {
  const auto& path = problem.skeleton().paths[p];
  const Eigen::RowVectorXd r = state.resp[n].row(static_cast<Eigen::Index>(p));
  const Vec& elb = e.elog_beta[static_cast<std::size_t>(path.back())];
  const auto k_trunc = static_cast<Eigen::Index>(problem.trunc());
  double mix = 0.0;
  for (Eigen::Index k = 0; k < k_trunc; ++k) mix += r[k] * (e.elog_f(static_cast<Eigen::Index>(n), k) + elb[k]);
  return path_prior(path, problem.skeleton(), e) + mix + row_entropy(r) -
         problem.hyper().vi_weight * path_regulariser(n, path, problem, e);
}

void update_paths(ViState& state, const ViProblem& problem, const ViExpectations& e) {
  const std::size_t n_paths = problem.skeleton().paths.size();
  for (std::size_t n = 0; n < problem.size(); ++n) {
    std::size_t best = 0;
    double best_score = path_score(n, 0, state, problem, e);
    for (std::size_t p = 1; p < n_paths; ++p) {
      const double s = path_score(n, p, state, problem, e);
      if (s > best_score) {
        best = p;
        best_score = s;
      }
    }
    state.path_ind[n] = best;
  }
}

void update_resp(ViState& state, const ViProblem& problem, const ViExpectations& e) {
  const auto& sk = problem.skeleton();
  const auto k_trunc = static_cast<Eigen::Index>(problem.trunc());
  for (std::size_t n = 0; n < problem.size(); ++n) {
    Mat& r = state.resp[n];
    r.resize(static_cast<Eigen::Index>(sk.paths.size()), k_trunc);
    for (std::size_t p = 0; p < sk.paths.size(); ++p) {
      const Vec& elb = e.elog_beta[static_cast<std::size_t>(sk.paths[p].back())];
      Vec logits(k_trunc);
      for (Eigen::Index k = 0; k < k_trunc; ++k) logits[k] = e.elog_f(static_cast<Eigen::Index>(n), k) + elb[k];
      const double lse = log_sum_exp(logits);
      r.row(static_cast<Eigen::Index>(p)) = exp_exact((logits.array() - lse).matrix()).transpose();
    }
  }
}

void update_sticks(ViState& state, const ViProblem& problem) {
  const auto& sk = problem.skeleton();
  std::vector<double> through(sk.size(), 0.0);
  for (std::size_t p : state.path_ind)
    for (int z : sk.paths[p]) through[static_cast<std::size_t>(z)] += 1.0;
  const double alpha = problem.hyper().alpha;
  for (std::size_t z = 0; z < sk.size(); ++z) {
    const auto& kids = sk.children[z];
    double later = 0.0;
    for (auto it = kids.rbegin(); it != kids.rend(); ++it) {
      const auto c = static_cast<std::size_t>(*it);
      state.sticks[c] = {1.0 + through[c], alpha + later};
      later += through[c];
    }
  }
}

Vec node_conc_update(int z, const ViState& state, const ViProblem& problem, const ViExpectations& e,
                     double omega_min) {
  const auto& sk = problem.skeleton();
  const auto zi = static_cast<std::size_t>(z);
  const int level = sk.level[zi];
  const auto k_trunc = static_cast<Eigen::Index>(problem.trunc());
  Vec omega = problem.hyper().gamma * e.e_beta[static_cast<std::size_t>(sk.parent[zi])];
  const double weight = problem.hyper().vi_weight;
  Vec reg = Vec::Zero(omega.size());
  for (std::size_t n = 0; n < problem.size(); ++n) {
    const auto& path = sk.paths[state.path_ind[n]];
    const int v = path[static_cast<std::size_t>(level)];
    if (v == z) {
      omega.head(k_trunc) += state.resp[n].row(static_cast<Eigen::Index>(state.path_ind[n])).transpose();
    } else if (weight > 0.0 && sk.parent[static_cast<std::size_t>(v)] == sk.parent[zi]) {
      const double lse = log_similarity(n, z, e, problem.trunc());
      for (Eigen::Index k = 0; k < k_trunc; ++k)
        reg[k] += std::exp(std::log(e.e_beta[zi][k]) + e.log_e_f(static_cast<Eigen::Index>(n), k) - lse);
    }
  }
  if (weight > 0.0)
    for (Eigen::Index k = 0; k < k_trunc; ++k) omega[k] -= weight * reg[k] / e.elog_beta[zi][k];
  return omega.cwiseMax(omega_min);
}

std::vector<std::array<double, 2>> root_sticks_update(const ViState& state, const ViProblem& problem) {
  const auto k_trunc = static_cast<Eigen::Index>(problem.trunc());
  Vec counts = Vec::Zero(k_trunc);
  for (std::size_t n = 0; n < problem.size(); ++n)
    counts += state.resp[n].row(static_cast<Eigen::Index>(state.path_ind[n])).transpose();
  std::vector<std::array<double, 2>> out(static_cast<std::size_t>(k_trunc));
  double tail = 0.0;
  for (Eigen::Index k = k_trunc - 1; k >= 0; --k) {
    out[static_cast<std::size_t>(k)] = {1.0 + counts[k], problem.hyper().gamma0 + tail};
    tail += counts[k];
  }
  return out;
}

Vec kernel_weights(std::size_t k, const ViState& state, const ViProblem& problem, const ViExpectations& e) {
  const auto& sk = problem.skeleton();
  const auto ki = static_cast<Eigen::Index>(k);
  const double weight = problem.hyper().vi_weight;
  Vec r(static_cast<Eigen::Index>(problem.size()));
  for (std::size_t n = 0; n < problem.size(); ++n) {
    const auto p = state.path_ind[n];
    double value = state.resp[n](static_cast<Eigen::Index>(p), ki);
    if (weight > 0.0) {
      double q = 0.0;
      const auto& path = sk.paths[p];
      for (std::size_t l = 1; l < path.size(); ++l)
        for (int s : siblings(sk, path[l]))
          q += std::exp(std::log(e.e_beta[static_cast<std::size_t>(s)][ki]) +
                        e.log_e_f(static_cast<Eigen::Index>(n), ki) - log_similarity(n, s, e, problem.trunc()));
      value -= weight * q;
    }
    r[static_cast<Eigen::Index>(n)] = value;
  }
  return r;
}

KernelUpdate update_kernel_mean(std::size_t k, const ViState& state, const ViProblem& problem,
                                const ViExpectations& e) {
  const Vec r = kernel_weights(k, state, problem, e);
  const Mat& prec = problem.kernel().precision();
  const Mat& p0 = problem.prior_precision();
  const auto& x = problem.x();
  const Vec weighted = x.transpose() * r;
  const Mat a = r.sum() * prec + p0;
  Eigen::LLT<Mat> llt(a);
  if (llt.info() != Eigen::Success)
    fail(ErrorKind::Numerical, "kernel " + std::to_string(k) + " update is not positive definite (total weight " +
                                   std::to_string(r.sum()) + ")");
  KernelUpdate out;
  out.mean = llt.solve(prec * weighted + p0 * problem.hyper().prior_mean);
  const Mat b = r.cwiseMax(0.0).sum() * prec + p0;
  out.cov = b.llt().solve(Mat::Identity(b.rows(), b.cols()));
  out.cov = 0.5 * (out.cov + out.cov.transpose());
  return out;
}

RelboTerms relbo_terms(const ViState& state, const ViProblem& problem, const ViExpectations& e) {
  const auto& sk = problem.skeleton();
  const auto& h = problem.hyper();
  const auto k_trunc = static_cast<Eigen::Index>(problem.trunc());
  const double d = static_cast<double>(h.dim());
  RelboTerms t;
  for (std::size_t n = 0; n < problem.size(); ++n) {
    const auto p = state.path_ind[n];
    const auto& path = sk.paths[p];
    const Eigen::RowVectorXd r = state.resp[n].row(static_cast<Eigen::Index>(p));
    const Vec& elb = e.elog_beta[static_cast<std::size_t>(path.back())];
    for (Eigen::Index k = 0; k < k_trunc; ++k) {
      t.data += r[k] * e.elog_f(static_cast<Eigen::Index>(n), k);
      t.components += r[k] * elb[k];
    }
    t.entropy += row_entropy(r);
    t.paths += path_prior(path, sk, e);
    t.regulariser += path_regulariser(n, path, problem, e);
  }
  for (std::size_t k = 0; k < problem.trunc(); ++k) {
    const Vec dm = state.kernel_mean[k] - h.prior_mean;
    const Mat& phi = state.kernel_cov[k];
    t.kernel_prior += -0.5 * d * kLog2Pi - 0.5 * problem.prior_logdet() -
                      0.5 * (dm.dot(problem.prior_precision() * dm) + (problem.prior_precision() * phi).trace());
    Eigen::LLT<Mat> llt(phi);
    const double logdet = 2.0 * Mat(llt.matrixL()).diagonal().array().log().sum();
    t.entropy += 0.5 * d * (1.0 + kLog2Pi) + 0.5 * logdet;
  }
  for (Eigen::Index k = 0; k < k_trunc; ++k) {
    t.root += std::log(h.gamma0) + (h.gamma0 - 1.0) * e.elog_1mo[k];
    const auto [r1, r2] = state.root_sticks[static_cast<std::size_t>(k)];
    t.entropy += beta_entropy(r1, r2);
  }
  const double entries = static_cast<double>(k_trunc + 1);
  for (std::size_t z = 1; z < sk.size(); ++z) {
    t.sticks += std::log(h.alpha) + (h.alpha - 1.0) * e.elog_1mu[z];
    const auto [a1, a2] = state.sticks[z];
    t.entropy += beta_entropy(a1, a2);
    const auto p = static_cast<std::size_t>(sk.parent[z]);
    t.weights += std::lgamma(h.gamma) + entries * std::log(h.gamma) + e.elog_beta[p].sum() +
                 ((h.gamma * e.e_beta[p]).array() - 1.0).matrix().dot(e.elog_beta[z]);
    t.entropy += dirichlet_entropy(state.node_conc[z]);
  }
  return t;
}

double relbo(const ViState& state, const ViProblem& problem, const ViExpectations& e) {
  const auto t = relbo_terms(state, problem, e);
  return t.elbo() - problem.hyper().vi_weight * t.regulariser;
}

double relbo(const ViState& state, const ViProblem& problem) {
  return relbo(state, problem, expectations(state, problem));
}

FrozenQ freeze_q(std::size_t k, const ViState& state, const ViProblem& problem) {
  const auto e = expectations(state, problem);
  const auto& sk = problem.skeleton();
  FrozenQ f;
  f.component = k;
  f.anchor_mean = state.kernel_mean[k];
  f.anchor_reg = relbo_terms(state, problem, e).regulariser;
  f.weight = Vec::Zero(static_cast<Eigen::Index>(problem.size()));
  const auto ki = static_cast<Eigen::Index>(k);
  for (std::size_t n = 0; n < problem.size(); ++n) {
    const auto& path = sk.paths[state.path_ind[n]];
    for (std::size_t l = 1; l < path.size(); ++l)
      for (int s : siblings(sk, path[l]))
        f.weight[static_cast<Eigen::Index>(n)] +=
            std::exp(std::log(e.e_beta[static_cast<std::size_t>(s)][ki]) + e.log_e_f(static_cast<Eigen::Index>(n), ki) -
                     log_similarity(n, s, e, problem.trunc()));
  }
  return f;
}

double relbo_frozen(const ViState& state, const ViProblem& problem, const FrozenQ& frozen) {
  const auto e = expectations(state, problem);
  const auto t = relbo_terms(state, problem, e);
  const Mat& prec = problem.kernel().precision();
  const Vec& m = state.kernel_mean[frozen.component];
  double shift = 0.0;
  for (std::size_t n = 0; n < problem.size(); ++n) {
    const Vec x = problem.x().row(static_cast<Eigen::Index>(n)).transpose();
    const Vec a = x - m, b = x - frozen.anchor_mean;
    shift += frozen.weight[static_cast<Eigen::Index>(n)] * -0.5 * (a.dot(prec * a) - b.dot(prec * b));
  }
  return t.elbo() - problem.hyper().vi_weight * (frozen.anchor_reg + shift);
}

Vec grad_relbo_mean(std::size_t k, const ViState& state, const ViProblem& problem) {
  const auto e = expectations(state, problem);
  const Vec r = kernel_weights(k, state, problem, e);
  const Vec& m = state.kernel_mean[k];
  Vec acc = Vec::Zero(m.size());
  for (std::size_t n = 0; n < problem.size(); ++n)
    acc += r[static_cast<Eigen::Index>(n)] * (problem.x().row(static_cast<Eigen::Index>(n)).transpose() - m);
  return problem.kernel().precision() * acc - problem.prior_precision() * (m - problem.hyper().prior_mean);
}

ViState init_vi(const ViProblem& problem, Rng& rng) {
  const auto& sk = problem.skeleton();
  const auto& h = problem.hyper();
  const std::size_t k_trunc = problem.trunc();
  ViState s;
  std::uniform_int_distribution<std::size_t> pick_path(0, sk.paths.size() - 1);
  s.path_ind.resize(problem.size());
  for (auto& p : s.path_ind) p = pick_path(rng);
  std::vector<std::size_t> order(problem.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  for (std::size_t k = 0; k < k_trunc; ++k) {
    s.kernel_mean.push_back(problem.x().row(static_cast<Eigen::Index>(order[k % order.size()])).transpose());
    s.kernel_cov.push_back(h.kernel_cov);
  }
  s.root_sticks.assign(k_trunc, {1.0, h.gamma0});
  s.sticks.assign(sk.size(), {1.0, h.alpha});
  s.node_conc.assign(sk.size(), Vec());
  s.resp.assign(problem.size(), Mat());
  ViExpectations e;
  fill_weight_expectations(e, s, problem);
  for (std::size_t z = 1; z < sk.size(); ++z) {
    s.node_conc[z] = (h.gamma * e.e_beta[static_cast<std::size_t>(sk.parent[z])]).array() + 1.0;
    fill_weight_expectations(e, s, problem);
  }
  fill_kernel_expectations(e, s, problem);
  update_resp(s, problem, e);
  return s;
}

namespace {

// Applies old + t (proposal - old) for t = 1, 1/2, 1/4, 1/8 and keeps the first step that does not lower the RELBO.
template <typename Apply>
void guarded(bool safeguard, double& current, Apply apply, const std::function<double()>& evaluate) {
  if (!safeguard) {
    apply(1.0);
    return;
  }
  for (double t = 1.0; t >= 0.125; t *= 0.5) {
    apply(t);
    const double v = evaluate();
    if (v >= current) {
      current = v;
      return;
    }
  }
  apply(0.0);
}

}  // namespace

void vi_cycle(ViState& state, const ViProblem& problem, const ViOptions& options) {
  const auto& sk = problem.skeleton();
  ViExpectations e = expectations(state, problem);
  update_paths(state, problem, e);
  update_resp(state, problem, e);
  update_sticks(state, problem);
  fill_weight_expectations(e, state, problem);

  double current = relbo(state, problem, e);
  auto evaluate_weights = [&]() {
    fill_weight_expectations(e, state, problem);
    return relbo(state, problem, e);
  };

  std::vector<int> order(sk.size() - 1);
  std::iota(order.begin(), order.end(), 1);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return sk.level[static_cast<std::size_t>(a)] > sk.level[static_cast<std::size_t>(b)];
  });
  for (int z : order) {
    const auto zi = static_cast<std::size_t>(z);
    const Vec old = state.node_conc[zi];
    const Vec proposal = node_conc_update(z, state, problem, e, options.omega_min);
    guarded(
        options.safeguard, current, [&](double t) { state.node_conc[zi] = old + t * (proposal - old); },
        evaluate_weights);
    fill_weight_expectations(e, state, problem);
  }

  {
    const auto old = state.root_sticks;
    const auto proposal = root_sticks_update(state, problem);
    guarded(
        options.safeguard, current,
        [&](double t) {
          for (std::size_t k = 0; k < old.size(); ++k)
            for (std::size_t j = 0; j < 2; ++j) state.root_sticks[k][j] = old[k][j] + t * (proposal[k][j] - old[k][j]);
        },
        evaluate_weights);
    fill_weight_expectations(e, state, problem);
  }

  auto evaluate_kernels = [&]() {
    fill_kernel_expectations(e, state, problem);
    return relbo(state, problem, e);
  };
  for (std::size_t k = 0; k < problem.trunc(); ++k) {
    const Vec old_m = state.kernel_mean[k];
    const Mat old_c = state.kernel_cov[k];
    const auto upd = update_kernel_mean(k, state, problem, e);
    guarded(
        options.safeguard, current,
        [&](double t) {
          state.kernel_mean[k] = old_m + t * (upd.mean - old_m);
          state.kernel_cov[k] = old_c + t * (upd.cov - old_c);
        },
        evaluate_kernels);
    fill_kernel_expectations(e, state, problem);
  }
}

ViResult fit_vi_from(ViState state, const ViProblem& problem, const ViOptions& options) {
  if (options.max_cycles < 1) fail(ErrorKind::Parameter, "vi_max_cycles must be at least 1");
  if (!(options.tol > 0.0)) fail(ErrorKind::Parameter, "vi_tol must be positive");
  if (!(options.omega_min > 0.0)) fail(ErrorKind::Parameter, "omega_min must be positive");
  ViResult out;
  double previous = relbo(state, problem);
  if (!std::isfinite(previous)) fail(ErrorKind::Numerical, "initial RELBO is not finite");
  for (std::size_t cycle = 1; cycle <= options.max_cycles; ++cycle) {
    const bool ramping = cycle < options.weight_ramp;
    std::optional<ViProblem> scaled;
    if (options.weight_ramp > 0 && cycle <= options.weight_ramp) {
      Hyperparams h = problem.hyper();
      h.vi_weight *= static_cast<double>(cycle) / static_cast<double>(options.weight_ramp);
      scaled.emplace(problem.x(), h, problem.skeleton());
      previous = relbo(state, *scaled);
    }
    const ViProblem& current = scaled ? *scaled : problem;
    ViState trial = state;
    double value = 0.0;
    try {
      vi_cycle(trial, current, options);
      value = relbo(trial, current);
    } catch (const Error& err) {
      if (err.kind() != ErrorKind::Numerical) throw;
      value = std::numeric_limits<double>::quiet_NaN();
    }
    if (!std::isfinite(value)) {
      out.diverged = true;
      break;
    }
    state = std::move(trial);
    out.trace.push_back({cycle, value, value - previous});
    const double delta = value - previous;
    previous = value;
    if (!ramping && std::abs(delta) < options.tol) {
      out.converged = true;
      break;
    }
  }
  out.state = std::move(state);
  return out;
}

ViResult fit_vi(const ViProblem& problem, const ViOptions& options, Rng& rng) {
  return fit_vi_from(init_vi(problem, rng), problem, options);
}

}  // namespace rbhmc
