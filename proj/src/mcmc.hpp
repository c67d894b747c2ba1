#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "gp_prior.hpp"
#include "process_models.hpp"
#include "simulators.hpp"

namespace maxmix {

struct ChainConfig {
  ModelKind kind = ModelKind::Mm;
  int iterations = 10000;
  int burnin = 2500;
  int thinning = 5;
  int J = 0;         // stick-breaking truncation; 0 -> number of replicates
  double nu = 1.0;   // stick Beta(1, nu) concentration
  double target_accept = 0.4;
  double adapt_window = 50.0;  // Robbins-Monro gain horizon
  std::uint64_t seed = 0;
  bool prior_only = false;     // drop the data term (prior-recovery runs)
  SurfaceMode gev_mode = SurfaceMode::Constant;
  ConstantPriors priors;
  KnotSet knots;  // empty -> data sites

  // optional parameter pins (NaN = sampled)
  double fix_alpha = NAN;
  double fix_tau = NAN;
  double fix_q = NAN;
  bool fix_gev = false;

  // GP-surface mode settings
  double gp_smoothness = 0.5;
  double gp_variance_shape = 2.0;
  double gp_variance_rate = 1.0;
  double gp_range_scale = 0.0;  // half-normal scale; 0 -> half domain diameter
  double gp_beta_sd = 10.0;

  int checkpoint_every = 0;  // sweeps between checkpoint rewrites; 0 = at end only
  std::string checkpoint_path;
  bool validate = false;  // per-iteration state validator (tests)
  // draw the initial state from the prior instead of the moment-fit defaults
  // (successive-conditional correctness tests)
  bool init_from_prior = false;
  double init_q = NAN;  // starting point override for q (default 0.5)
  // MM fits: choose the starting basin by two short pinned-q burn-in
  // excursions and keep the higher-posterior state (the q direction is
  // bimodal at small n/T and a mid start can commit to the wrong mode)
  bool explore_init = true;
  bool quiet = true;
};

// Full latent state of one MCMC iteration.
struct ModelState {
  GevSurface gev;
  GpHyper hyper_mu, hyper_logsigma, hyper_xi;  // gp mode only
  double tau = 1.0;
  double alpha = 0.5;
  double q = 0.5;                      // MM only
  std::vector<double> A, B;            // T x L latents (HEVP component)
  std::vector<double> gamma, lambda;   // J x L atoms (SB component)
  std::vector<int> labels;             // length T, values in [0, J)
  std::vector<double> v, pi;           // stick variables / weights, length J
};

struct PosteriorDraw {
  int iteration = 0;
  double loglik = 0.0;
  double alpha = 0.0;
  double tau = 0.0;
  double q = NAN;
  int delta = -1;
  std::vector<double> mu, log_sigma, xi;  // length 1 (constant) or n (gp)
  std::vector<double> pi;                 // J (SB/MM)
  std::vector<double> gamma;              // J x L (SB/MM)
  std::vector<double> gp_hyper;           // 15 values in gp mode
};

struct AcceptanceRecord {
  std::string block;
  long proposals = 0;
  long accepted = 0;
  double mean_step = 0.0;
};

struct PosteriorSamples {
  ModelKind kind = ModelKind::Mm;
  SurfaceMode gev_mode = SurfaceMode::Constant;
  int n = 0, T = 0, J = 0, L = 0;
  std::vector<Site> sites;
  KnotSet knots;
  int iterations = 0, burnin = 0, thinning = 0;
  std::uint64_t seed = 0;
  double gp_smoothness = 0.5;
  std::vector<PosteriorDraw> draws;
  std::vector<AcceptanceRecord> acceptance;
};

class Chain {
 public:
  Chain(const ChainConfig& cfg, const Dataset& data);
  ~Chain();
  Chain(Chain&&) noexcept;
  Chain& operator=(Chain&&) noexcept;

  void run();         // all remaining iterations per the config
  void run_until(int iteration);  // partial run (checkpointable interruption)
  void sweep_once();  // a single full Metropolis-within-Gibbs sweep

  const PosteriorSamples& samples() const;
  const ModelState& state() const;
  int iteration_done() const;

  double loglik() const;        // cached value
  double loglik_recomputed();   // full recomputation, bypassing caches

  // Geweke-style successive-conditional support
  std::vector<double> simulate_data_given_state(RngStream& rng) const;
  void set_data(const std::vector<double>& y);

  void save_checkpoint(const std::string& path) const;
  void load_checkpoint(const std::string& path);

  // replace the latent state wholesale (dimensions must match) and rebuild
  // every cache; used by the exploratory initializer and tests
  void set_state(const ModelState& state);
  // conditional label log-weights (up to a constant) for one replicate
  std::vector<double> label_logweights(int t) const;
  // unnormalized joint log density of the current state (likelihood + priors)
  double joint_log_density() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

PosteriorSamples run_chain(const ChainConfig& cfg, const Dataset& data);

// resumes from a checkpoint and runs to completion; optionally rewrites the
// final checkpoint to save_checkpoint_to
PosteriorSamples resume_chain(const std::string& checkpoint_path,
                              const Dataset& data,
                              const std::string& save_checkpoint_to = "");

// fraction of stored draws with q >= alpha/(1+alpha); MM samples only
double posterior_prob_delta(const PosteriorSamples& samples);

// slow-path joint data log-likelihood of a state (shared by tests and the
// chain's own cache validator)
double loglik(const ModelState& state, const Dataset& data, const ChainConfig& cfg);

// throws DomainError when a state invariant is violated
void validate_state(const ModelState& state, const ChainConfig& cfg, int T, int n);

// pooled L-moment GEV fit used for chain initialization
GevParams gev_moment_fit(std::span<const double> values);

}  // namespace maxmix
