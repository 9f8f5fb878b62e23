#pragma once

#include "rbhmc/regularizer.hpp"

namespace rbhmc {

struct McmcOptions {
  std::size_t burnin = 5000;
  std::size_t draws = 10000;
  double kappa = 100.0;  // Dirichlet proposal concentration for internal weights
  bool adapt_kappa = true;
  double zeta_clamp = kDefaultZetaClamp;
  // Include the other data's augmentation terms in path moves and correct eta draws with MH.
  bool exact_joint = true;
};

struct ChainState {
  Tree tree;
  std::vector<PathAssignment> assignments;
  std::vector<Vec> kernels;
  Hyperparams hyper;
  std::size_t iter = 0;
};

struct Trace {
  std::vector<double> cdl;
  std::vector<double> rcdl;
  std::vector<double> accept_rate;
  double best_rcdl = 0.0;
  std::size_t best_iter = 0;
  ChainState best;
};

class Sampler {
 public:
  Sampler(Hyperparams hyper, const DataMatrix& x, McmcOptions options);

  // Seats every datum through the prior and draws the remaining variables.
  void initialise(Rng& rng);
  void set_state(ChainState state);

  bool mh_step_path(std::size_t n, Rng& rng);
  double resample_lambda(std::size_t n, Rng& rng);
  std::size_t resample_component(std::size_t n, Rng& rng);
  void resample_kernels(Rng& rng);
  void resample_weights(Rng& rng);
  CanonicalGaussian eta_conditional(NodeId z) const;
  Vec gibbs_eta(NodeId z, Rng& rng);
  // Updates eta_z in place (MH-corrected when exact_joint). Returns true if the draw was kept.
  bool update_eta(NodeId z, Rng& rng);
  void sweep(Rng& rng);
  // Sweep plus burn-in adaptation of the weight proposal.
  void step(std::size_t iteration, Rng& rng);

  double cdl() const;
  double rcdl() const;
  double log_crp_prior() const;
  // Recomputes s_n and zeta_n for every datum from the current tree.
  void refresh_violations();

  const ChainState& state() const { return state_; }
  ChainState& mutable_state() { return state_; }
  const McmcOptions& options() const { return options_; }
  double kappa() const { return kappa_; }
  double path_accept_rate() const;
  const MarginContext& margin_context() const { return ctx_; }
  const GaussianKernel& kernel() const { return kernel_; }

 private:
  double log_g(std::size_t n, const Path& path, double zeta) const;
  double log_weight_target(NodeId z, const Vec& log_beta) const;
  void resample_node_weights(NodeId z, Rng& rng);
  void adapt(std::size_t iteration);
  void set_violation(std::size_t n, const WorstViolation& w);
  VecRef row(std::size_t n) const;

  Hyperparams hyper_;
  const DataMatrix& x_;
  McmcOptions options_;
  MarginContext ctx_;
  GaussianKernel kernel_;
  Mat prior_precision_;
  ChainState state_;
  double kappa_;
  std::size_t path_proposed_ = 0;
  std::size_t path_accepted_ = 0;
  std::size_t weight_proposed_ = 0;
  std::size_t weight_accepted_ = 0;
};

// Runs burn-in plus draws and keeps the post-burn-in snapshot with the largest RCDL.
Trace run_chain(const Hyperparams& hyper, const DataMatrix& x, const McmcOptions& options,
                      Rng& rng);

}  // namespace rbhmc
