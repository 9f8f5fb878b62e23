#include "rbhmc/mcmc.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "rbhmc/error.hpp"

namespace rbhmc {

Sampler::Sampler(Hyperparams hyper, const DataMatrix& x, McmcOptions options)
    : hyper_(std::move(hyper)),
      x_(x),
      options_(options),
      ctx_{hyper_.margin_cost, hyper_.margin_eps},
      kernel_((hyper_.validate(), hyper_.kernel_cov)),
      kappa_(options.kappa) {
  if (x_.rows() < 1) fail(ErrorKind::Data, "no data");
  if (static_cast<std::size_t>(x_.cols()) != hyper_.dim())
    fail(ErrorKind::Parameter, "data has " + std::to_string(x_.cols()) + " columns but the model expects " +
                                   std::to_string(hyper_.dim()));
  if (!(options_.kappa > 0.0)) fail(ErrorKind::Parameter, "kappa must be positive");
  if (!(options_.zeta_clamp > 0.0)) fail(ErrorKind::Parameter, "zeta_clamp must be positive");
  prior_precision_ = hyper_.prior_cov.llt().solve(Mat::Identity(hyper_.prior_cov.rows(), hyper_.prior_cov.cols()));
  state_.hyper = hyper_;
}

VecRef Sampler::row(std::size_t n) const { return x_.row(static_cast<Eigen::Index>(n)).transpose(); }

void Sampler::initialise(Rng& rng) {
  const std::size_t n_data = static_cast<std::size_t>(x_.rows());
  state_.tree = Tree(truncated_gem_log(hyper_.gamma0, hyper_.trunc, rng), hyper_.dim());
  state_.kernels.clear();
  for (std::size_t k = 0; k < hyper_.trunc; ++k)
    state_.kernels.push_back(sample_gaussian(hyper_.prior_mean, hyper_.prior_cov, rng));
  state_.assignments.assign(n_data, PathAssignment{});
  for (std::size_t n = 0; n < n_data; ++n) {
    state_.assignments[n].path = ncrp_extend(state_.tree, hyper_, rng);
    state_.tree.add_path(state_.assignments[n].path);
  }
  for (std::size_t n = 0; n < n_data; ++n) resample_component(n, rng);
  refresh_violations();
  for (std::size_t n = 0; n < n_data; ++n) resample_lambda(n, rng);
  state_.iter = 0;
}

void Sampler::set_state(ChainState state) {
  state_ = std::move(state);
  state_.hyper = hyper_;
  std::vector<NodeId> ids;
  for (const auto& [id, node] : state_.tree.nodes()) ids.push_back(id);
  for (NodeId id : ids) state_.tree.node(id).count = 0;
  for (const auto& a : state_.assignments) {
    if (a.path.size() != static_cast<std::size_t>(hyper_.depth) + 1) fail(ErrorKind::State, "path length does not match depth");
    if (!(a.aug > 0.0)) fail(ErrorKind::State, "augmentation variable must be positive");
    if (a.component >= hyper_.trunc) fail(ErrorKind::State, "component index out of range");
    state_.tree.add_path(a.path);
  }
  refresh_violations();
}

void Sampler::set_violation(std::size_t n, const WorstViolation& w) {
  state_.assignments[n].violation = w.s;
  state_.assignments[n].zeta = w.zeta;
}

void Sampler::refresh_violations() {
  for (std::size_t n = 0; n < state_.assignments.size(); ++n)
    set_violation(n, worst_violation(row(n), state_.assignments[n].path, state_.tree, ctx_));
}

double Sampler::log_g(std::size_t n, const Path& path, double zeta) const {
  return log_mixture(row(n), state_.tree.node(path.back()).log_weights, state_.kernels, kernel_) +
         log_augmentation(state_.assignments[n].aug, ctx_.cost, zeta);
}

bool Sampler::mh_step_path(std::size_t n, Rng& rng) {
  Tree& tree = state_.tree;
  PathAssignment& a = state_.assignments[n];
  const Path old_path = a.path;
  const double log_old = log_g(n, old_path, a.zeta);
  const std::uint32_t mark = tree.next_id();

  tree.remove_path(old_path);
  const Path proposal = ncrp_extend(tree, hyper_, rng);
  tree.add_path(proposal);
  ++path_proposed_;
  if (proposal == old_path) {
    ++path_accepted_;
    return true;
  }

  const auto s_new = worst_violation(row(n), proposal, tree, ctx_);
  double log_ratio = log_g(n, proposal, s_new.zeta) - log_old;

  // Parents whose set of occupied children changed.
  std::vector<NodeId> changed;
  for (NodeId z : proposal)
    if (z.value >= mark) changed.push_back(*tree.node(z).parent);
  for (NodeId z : old_path)
    if (z != tree.root() && tree.node(z).count == 0) changed.push_back(*tree.node(z).parent);

  std::vector<std::pair<std::size_t, WorstViolation>> refreshed;
  if (!changed.empty()) {
    for (std::size_t m = 0; m < state_.assignments.size(); ++m) {
      if (m == n) continue;
      const Path& pm = state_.assignments[m].path;
      bool hit = false;
      for (std::size_t l = 0; l + 1 < pm.size() && !hit; ++l)
        hit = std::find(changed.begin(), changed.end(), pm[l]) != changed.end();
      if (!hit) continue;
      const auto w = worst_violation(row(m), pm, tree, ctx_);
      if (options_.exact_joint) {
        const double lam = state_.assignments[m].aug;
        log_ratio += log_augmentation(lam, ctx_.cost, w.zeta) -
                     log_augmentation(lam, ctx_.cost, state_.assignments[m].zeta);
      }
      refreshed.emplace_back(m, w);
    }
  }

  if (std::log(sample_uniform(rng)) < log_ratio) {
    a.path = proposal;
    set_violation(n, s_new);
    for (const auto& [m, w] : refreshed) set_violation(m, w);
    tree.prune_empty();
    ++path_accepted_;
    return true;
  }
  tree.remove_path(proposal);
  tree.add_path(old_path);
  tree.prune_empty();
  tree.restore_next_id(mark);
  return false;
}

double Sampler::resample_lambda(std::size_t n, Rng& rng) {
  auto& a = state_.assignments[n];
  a.aug = sample_lambda(ctx_.cost, a.zeta, rng, options_.zeta_clamp);
  return a.aug;
}

std::size_t Sampler::resample_component(std::size_t n, Rng& rng) {
  auto& a = state_.assignments[n];
  const Vec& logw = state_.tree.node(a.path.back()).log_weights;
  Vec logp(static_cast<Eigen::Index>(hyper_.trunc));
  for (std::size_t k = 0; k < hyper_.trunc; ++k) {
    const auto i = static_cast<Eigen::Index>(k);
    logp[i] = logw[i] + kernel_.log_density(row(n), state_.kernels[k]);
  }
  a.component = sample_categorical_log(logp, rng);
  return a.component;
}

void Sampler::resample_kernels(Rng& rng) {
  const auto d = static_cast<Eigen::Index>(hyper_.dim());
  std::vector<Vec> sums(hyper_.trunc, Vec::Zero(d));
  std::vector<double> counts(hyper_.trunc, 0.0);
  for (std::size_t n = 0; n < state_.assignments.size(); ++n) {
    const std::size_t c = state_.assignments[n].component;
    sums[c] += row(n);
    counts[c] += 1.0;
  }
  const Vec prior_pot = prior_precision_ * hyper_.prior_mean;
  for (std::size_t k = 0; k < hyper_.trunc; ++k) {
    CanonicalGaussian g{prior_pot + kernel_.precision() * sums[k], prior_precision_ + counts[k] * kernel_.precision()};
    state_.kernels[k] = sample_canonical_gaussian(g, rng);
  }
}

double Sampler::log_weight_target(NodeId z, const Vec& log_beta) const {
  const Tree& tree = state_.tree;
  const Node& node = tree.node(z);
  double t = 0.0;
  if (z == tree.root()) {
    // Stick prior on o_k = beta_k / rem_k plus the Jacobian of the map to beta.
    const auto k_free = static_cast<Eigen::Index>(hyper_.trunc) - 1;
    for (Eigen::Index k = 0; k < k_free; ++k) {
      const double log_rem = log_sum_exp(log_beta.segment(k, k_free + 1 - k));
      const double log_after = log_sum_exp(log_beta.segment(k + 1, k_free - k));
      t += std::log(hyper_.gamma0) + (hyper_.gamma0 - 1.0) * (log_after - log_rem) - log_rem;
    }
  } else {
    t += log_dirichlet_density(log_beta, hyper_.gamma * tree.node(*node.parent).weights);
  }
  const Vec conc = hyper_.gamma * exp_exact(log_beta);
  for (NodeId c : node.children) t += log_dirichlet_density(tree.node(c).log_weights, conc);
  return t;
}

void Sampler::resample_node_weights(NodeId z, Rng& rng) {
  Tree& tree = state_.tree;
  const Vec current = tree.node(z).log_weights;
  const auto size = current.size();
  std::vector<bool> support(static_cast<std::size_t>(size), false);
  if (z == tree.root()) {
    for (Eigen::Index k = 0; k + 1 < size; ++k) support[static_cast<std::size_t>(k)] = true;
  } else {
    const Vec& parent = tree.node(*tree.node(z).parent).weights;
    for (Eigen::Index k = 0; k < size; ++k) support[static_cast<std::size_t>(k)] = parent[k] > 0.0;
  }
  auto proposal_conc = [&](const Vec& log_centre) {
    Vec c = Vec::Zero(size);
    for (Eigen::Index k = 0; k < size; ++k)
      if (support[static_cast<std::size_t>(k)]) c[k] = kappa_ * std::max(std::exp(log_centre[k]), kWeightFloor);
    return c;
  };
  const Vec fwd = proposal_conc(current);
  const Vec proposal = sample_log_dirichlet(fwd, rng);
  const Vec rev = proposal_conc(proposal);
  ++weight_proposed_;
  const double log_a = log_weight_target(z, proposal) - log_weight_target(z, current) +
                       log_dirichlet_density(current, rev) - log_dirichlet_density(proposal, fwd);
  if (std::isnan(log_a)) return;
  if (std::log(sample_uniform(rng)) < log_a) {
    tree.set_log_weights(z, proposal);
    ++weight_accepted_;
  }
}

void Sampler::resample_weights(Rng& rng) {
  Tree& tree = state_.tree;
  std::map<NodeId, Vec> counts;
  for (const auto& a : state_.assignments) {
    auto [it, fresh] = counts.try_emplace(a.path.back(), Vec::Zero(static_cast<Eigen::Index>(hyper_.trunc) + 1));
    it->second[static_cast<Eigen::Index>(a.component)] += 1.0;
  }
  std::vector<NodeId> internal;
  for (auto& [id, node] : tree.nodes()) {
    if (id == tree.root()) continue;
    if (node.level == hyper_.depth) {
      Vec conc = hyper_.gamma * tree.node(*node.parent).weights;
      if (auto it = counts.find(id); it != counts.end()) conc += it->second;
      tree.set_log_weights(id, sample_log_dirichlet(conc, rng));
    } else {
      internal.push_back(id);
    }
  }
  for (NodeId z : internal) resample_node_weights(z, rng);
  if (hyper_.trunc >= 2) resample_node_weights(tree.root(), rng);
}

CanonicalGaussian Sampler::eta_conditional(NodeId z) const {
  const Node& node = state_.tree.node(z);
  const auto d = static_cast<Eigen::Index>(hyper_.dim());
  const double nu0 = hyper_.eta_prior_scale;
  CanonicalGaussian g{Vec::Zero(d), Mat::Identity(d, d) / (nu0 * nu0)};
  const double c = ctx_.cost;
  for (std::size_t n = 0; n < state_.assignments.size(); ++n) {
    const auto& a = state_.assignments[n];
    if (a.violation.level != node.level) continue;
    const NodeId v = a.path[static_cast<std::size_t>(node.level)];
    const NodeId j = a.violation.node;
    if (j == v) continue;  // sentinel, zeta does not depend on eta
    if (v != z && j != z) continue;
    const auto x = row(n);
    const double coef = c * c / a.aug;
    const double base = a.aug / c + ctx_.eps0;
    if (v == z)
      g.potential += coef * (base + state_.tree.node(j).margin.dot(x)) * x;
    else
      g.potential -= coef * (base - state_.tree.node(v).margin.dot(x)) * x;
    g.precision.noalias() += coef * x * x.transpose();
  }
  return g;
}

Vec Sampler::gibbs_eta(NodeId z, Rng& rng) {
  try {
    return sample_canonical_gaussian(eta_conditional(z), rng);
  } catch (const Error& e) {
    fail(e.kind(), std::string(e.what()) + " (node " + std::to_string(z.value) + ")");
  }
}

bool Sampler::update_eta(NodeId z, Rng& rng) {
  Tree& tree = state_.tree;
  if (z == tree.root()) return true;
  const NodeId parent = *tree.node(z).parent;
  const auto level = static_cast<std::size_t>(tree.node(z).level);
  const CanonicalGaussian fwd = eta_conditional(z);
  Vec proposal;
  try {
    proposal = sample_canonical_gaussian(fwd, rng);
  } catch (const Error& e) {
    fail(e.kind(), std::string(e.what()) + " (node " + std::to_string(z.value) + ")");
  }
  const Vec old = tree.node(z).margin;

  std::vector<std::size_t> affected;
  for (std::size_t m = 0; m < state_.assignments.size(); ++m)
    if (state_.assignments[m].path[level - 1] == parent) affected.push_back(m);

  tree.node(z).margin = proposal;
  std::vector<WorstViolation> fresh;
  fresh.reserve(affected.size());
  bool same = true;
  for (std::size_t m : affected) {
    fresh.push_back(worst_violation(row(m), state_.assignments[m].path, tree, ctx_));
    same = same && fresh.back().s == state_.assignments[m].violation;
  }
  if (!options_.exact_joint || same) {
    for (std::size_t i = 0; i < affected.size(); ++i) set_violation(affected[i], fresh[i]);
    return true;
  }

  std::vector<WorstViolation> previous;
  double log_a = 0.0;
  for (std::size_t i = 0; i < affected.size(); ++i) {
    auto& a = state_.assignments[affected[i]];
    previous.push_back({a.violation, a.zeta});
    log_a += log_augmentation(a.aug, ctx_.cost, fresh[i].zeta) - log_augmentation(a.aug, ctx_.cost, a.zeta);
    set_violation(affected[i], fresh[i]);
  }
  const double nu2 = hyper_.eta_prior_scale * hyper_.eta_prior_scale;
  log_a += -0.5 * (proposal.squaredNorm() - old.squaredNorm()) / nu2;
  const CanonicalGaussian rev = eta_conditional(z);
  log_a += canonical_log_density(old, rev) - canonical_log_density(proposal, fwd);
  if (std::log(sample_uniform(rng)) < log_a) return true;
  tree.node(z).margin = old;
  for (std::size_t i = 0; i < affected.size(); ++i) set_violation(affected[i], previous[i]);
  return false;
}

void Sampler::sweep(Rng& rng) {
  const std::size_t n_data = state_.assignments.size();
  std::vector<std::size_t> order(n_data);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  for (std::size_t n : order) {
    mh_step_path(n, rng);
    resample_lambda(n, rng);
  }
  for (std::size_t n = 0; n < n_data; ++n) resample_component(n, rng);
  resample_weights(rng);
  resample_kernels(rng);
  std::vector<NodeId> ids;
  for (const auto& [id, node] : state_.tree.nodes())
    if (id != state_.tree.root()) ids.push_back(id);
  for (NodeId z : ids) update_eta(z, rng);
  ++state_.iter;
}

void Sampler::adapt(std::size_t iteration) {
  if (!options_.adapt_kappa || iteration >= options_.burnin || (iteration + 1) % 50 != 0) return;
  if (weight_proposed_ > 0) {
    const double rate = static_cast<double>(weight_accepted_) / static_cast<double>(weight_proposed_);
    if (rate < 0.2) kappa_ *= 1.5;
    else if (rate > 0.4) kappa_ /= 1.5;
  }
  weight_proposed_ = 0;
  weight_accepted_ = 0;
}

void Sampler::step(std::size_t iteration, Rng& rng) {
  sweep(rng);
  adapt(iteration);
}

double Sampler::log_crp_prior() const {
  const double a = hyper_.alpha;
  double t = 0.0;
  for (const auto& [id, node] : state_.tree.nodes()) {
    if (id != state_.tree.root()) t += std::lgamma(static_cast<double>(node.count));
    if (node.children.empty()) continue;
    const auto m = static_cast<double>(node.children.size());
    t += std::lgamma(a) + m * std::log(a) - std::lgamma(static_cast<double>(node.count) + a);
  }
  return t;
}

double Sampler::cdl() const {
  double t = log_crp_prior();
  for (std::size_t n = 0; n < state_.assignments.size(); ++n) {
    const auto& a = state_.assignments[n];
    const double logw = state_.tree.node(a.path.back()).log_weights[static_cast<Eigen::Index>(a.component)];
    t += std::max(logw, std::log(kWeightFloor)) + kernel_.log_density(row(n), state_.kernels[a.component]);
  }
  return t;
}

double Sampler::rcdl() const {
  double hinge = 0.0;
  for (const auto& a : state_.assignments) hinge += std::max(0.0, a.zeta);
  return cdl() - 2.0 * ctx_.cost * hinge;
}

double Sampler::path_accept_rate() const {
  return path_proposed_ == 0 ? 0.0 : static_cast<double>(path_accepted_) / static_cast<double>(path_proposed_);
}

Trace run_chain(const Hyperparams& hyper, const DataMatrix& x, const McmcOptions& options, Rng& rng) {
  if (options.draws == 0) fail(ErrorKind::Parameter, "draws must be at least 1");
  Sampler sampler(hyper, x, options);
  sampler.initialise(rng);
  Trace trace;
  const std::size_t total = options.burnin + options.draws;
  trace.cdl.reserve(total);
  trace.rcdl.reserve(total);
  trace.accept_rate.reserve(total);
  for (std::size_t it = 0; it < total; ++it) {
    sampler.step(it, rng);
    const double c = sampler.cdl();
    const double r = sampler.rcdl();
    trace.cdl.push_back(c);
    trace.rcdl.push_back(r);
    trace.accept_rate.push_back(sampler.path_accept_rate());
    if (it >= options.burnin && (it == options.burnin || r > trace.best_rcdl)) {
      trace.best_rcdl = r;
      trace.best_iter = it;
      trace.best = sampler.state();
    }
  }
  return trace;
}

}  // namespace rbhmc
