#pragma once

#include <array>

#include "rbhmc/random.hpp"
#include "rbhmc/tree.hpp"

namespace rbhmc {

// Fixed truncated tree used by variational inference. Nodes are dense indices, root = 0.
struct ViSkeleton {
  std::vector<int> parent;
  std::vector<std::vector<int>> children;
  std::vector<int> level;
  std::vector<std::vector<int>> paths;  // root..leaf, in creation order
  int depth = 0;

  std::size_t size() const { return parent.size(); }
  static ViSkeleton complete(int depth, std::size_t branching);
  static ViSkeleton from_tree(const Tree& tree);
};

struct ViOptions {
  std::size_t branching = 2;
  double tol = 1e-6;
  std::size_t max_cycles = 200;
  double omega_min = 1e-3;
  // Guard non-conjugate coordinates with a RELBO check and step halving.
  bool safeguard = true;
  // Cycles over which the regulariser weight grows linearly from weight/ramp to its full value.
  // Zero keeps it constant.
  std::size_t weight_ramp = 0;
};

class ViProblem {
 public:
  ViProblem(const DataMatrix& x, Hyperparams hyper, ViSkeleton skeleton);

  const DataMatrix& x() const { return x_; }
  const Hyperparams& hyper() const { return hyper_; }
  const ViSkeleton& skeleton() const { return skeleton_; }
  const GaussianKernel& kernel() const { return kernel_; }
  const Mat& prior_precision() const { return prior_precision_; }
  double prior_logdet() const { return prior_logdet_; }
  std::size_t size() const { return static_cast<std::size_t>(x_.rows()); }
  std::size_t trunc() const { return hyper_.trunc; }

 private:
  const DataMatrix& x_;
  Hyperparams hyper_;
  ViSkeleton skeleton_;
  GaussianKernel kernel_;
  Mat prior_precision_;
  double prior_logdet_ = 0.0;
};

struct ViState {
  std::vector<std::size_t> path_ind;  // selected path per datum
  std::vector<Mat> resp;              // per datum: paths x K
  std::vector<std::array<double, 2>> sticks;  // per node, root unused
  std::vector<Vec> node_conc;                  // per node (K+1), root unused
  std::vector<std::array<double, 2>> root_sticks;  // K pairs
  std::vector<Vec> kernel_mean;
  std::vector<Mat> kernel_cov;
};

struct ViExpectations {
  Vec elog_o, elog_1mo;
  std::vector<Vec> elog_beta;  // per node, K+1
  std::vector<Vec> e_beta;     // per node, K+1
  std::vector<double> elog_u, elog_1mu;  // per node
  Mat elog_f;   // N x K, E log p(x_n | phi_k)
  Mat log_e_f;  // N x K, log E f(x_n; phi_k)
};

struct RelboTerms {
  double data = 0.0;         // E log p(X | C, phi)
  double kernel_prior = 0.0; // E log p(phi | H)
  double components = 0.0;   // E log p(C | B, V)
  double paths = 0.0;        // E log p(V | U)
  double sticks = 0.0;       // E log p(U | alpha)
  double root = 0.0;         // E log p(o | gamma0)
  double weights = 0.0;      // bound on E log p(B- | gamma)
  double entropy = 0.0;      // -E log q
  double regulariser = 0.0;  // R(q), enters with weight -varrho

  double elbo() const { return data + kernel_prior + components + paths + sticks + root + weights + entropy; }
};

// First-order surrogate of the regulariser in m_k around an anchor state.
struct FrozenQ {
  std::size_t component = 0;
  Vec anchor_mean;
  double anchor_reg = 0.0;
  Vec weight;  // per datum: sum of Q over path siblings
};

ViExpectations expectations(const ViState& state, const ViProblem& problem);

void update_paths(ViState& state, const ViProblem& problem, const ViExpectations& e);
double path_score(std::size_t n, std::size_t p, const ViState& state, const ViProblem& problem,
                  const ViExpectations& e);
void update_resp(ViState& state, const ViProblem& problem, const ViExpectations& e);
void update_sticks(ViState& state, const ViProblem& problem);
Vec node_conc_update(int z, const ViState& state, const ViProblem& problem,
                     const ViExpectations& e, double omega_min);
std::vector<std::array<double, 2>> root_sticks_update(const ViState& state, const ViProblem& problem);

struct KernelUpdate {
  Vec mean;
  Mat cov;
};
KernelUpdate update_kernel_mean(std::size_t k, const ViState& state, const ViProblem& problem,
                                const ViExpectations& e);
// Per datum weights R_nk used by the kernel update and gradient.
Vec kernel_weights(std::size_t k, const ViState& state, const ViProblem& problem,
                   const ViExpectations& e);

RelboTerms relbo_terms(const ViState& state, const ViProblem& problem, const ViExpectations& e);
double relbo(const ViState& state, const ViProblem& problem);
double relbo(const ViState& state, const ViProblem& problem, const ViExpectations& e);

FrozenQ freeze_q(std::size_t k, const ViState& state, const ViProblem& problem);
double relbo_frozen(const ViState& state, const ViProblem& problem, const FrozenQ& frozen);
Vec grad_relbo_mean(std::size_t k, const ViState& state, const ViProblem& problem);

ViState init_vi(const ViProblem& problem, Rng& rng);

struct ViTraceRow {
  std::size_t cycle = 0;
  double relbo = 0.0;
  double delta = 0.0;
};

struct ViResult {
  ViState state;
  std::vector<ViTraceRow> trace;
  bool converged = false;
  bool diverged = false;
};

// One pass of paths, resp, sticks, node weights, root sticks and kernels.
void vi_cycle(ViState& state, const ViProblem& problem, const ViOptions& options);
ViResult fit_vi(const ViProblem& problem, const ViOptions& options, Rng& rng);
ViResult fit_vi_from(ViState state, const ViProblem& problem, const ViOptions& options);

}  // namespace rbhmc
