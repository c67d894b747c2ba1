#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <map>
#include <vector>

#include "errors.hpp"
#include "mcmc.hpp"
#include "simulators.hpp"
#include "testsupport.hpp"

using namespace maxmix;
namespace ts = testsupport;

namespace {

Dataset toy_dataset(int grid, int T, std::uint64_t seed,
                    SimSetting setting = SimSetting::MS) {
  SimConfig sim;
  sim.setting = setting;
  sim.sites = grid_sites(grid, grid, 1, grid, 1, grid);
  sim.T = T;
  sim.seed = seed;
  return simulate(sim);
}

ChainConfig toy_config(ModelKind kind, int iters, int burnin, std::uint64_t seed) {
  ChainConfig cfg;
  cfg.kind = kind;
  cfg.iterations = iters;
  cfg.burnin = burnin;
  cfg.thinning = 1;
  cfg.seed = seed;
  cfg.explore_init = false;
  return cfg;
}

}  // namespace

TEST_CASE("chain determinism and checkpoint resume") {
  const Dataset ds = toy_dataset(3, 6, 11);
  ChainConfig cfg = toy_config(ModelKind::Mm, 120, 40, 77);
  cfg.thinning = 2;
  const PosteriorSamples a = run_chain(cfg, ds);
  const PosteriorSamples b = run_chain(cfg, ds);
  REQUIRE(a.draws.size() == b.draws.size());
  CHECK(a.draws.size() == 40);  // (120 - 40) / 2
  for (std::size_t k = 0; k < a.draws.size(); ++k) {
    CHECK(a.draws[k].alpha == b.draws[k].alpha);
    CHECK(a.draws[k].q == b.draws[k].q);
    CHECK(a.draws[k].loglik == b.draws[k].loglik);
  }

  // interrupted-and-resumed chain reproduces the uninterrupted one exactly
  ChainConfig half = cfg;
  Chain chain(half, ds);
  for (int k = 0; k < 60; ++k) chain.sweep_once();
  // storage bookkeeping is handled by run(); drive the second half through it
  const std::string ck = "/tmp/maxmix_test_ck.bin";
  {
    Chain full(cfg, ds);
    full.run();
    full.save_checkpoint(ck);
    PosteriorSamples resumed = resume_chain(ck, ds);  // already complete: no-op run
    CHECK(resumed.draws.size() == full.samples().draws.size());
  }
  {
    // stop at iteration 60, checkpoint, resume fresh
    Chain first(cfg, ds);
    first.run_until(60);
    first.save_checkpoint(ck);
    const PosteriorSamples resumed = resume_chain(ck, ds);
    CHECK(resumed.draws.size() == 40);
    const PosteriorSamples whole = run_chain(cfg, ds);
    REQUIRE(resumed.draws.size() == whole.draws.size());
    for (std::size_t k = 0; k < whole.draws.size(); ++k) {
      CHECK(resumed.draws[k].loglik == whole.draws[k].loglik);
      CHECK(resumed.draws[k].alpha == whole.draws[k].alpha);
      CHECK(resumed.draws[k].tau == whole.draws[k].tau);
    }
  }

  // wrong dataset is rejected on resume
  const Dataset other = toy_dataset(3, 6, 12);
  CHECK_THROWS_AS(resume_chain(ck, other), DataError);
}

TEST_CASE("resumed chain config/iteration guards") {
  const Dataset ds = toy_dataset(2, 4, 1);
  ChainConfig cfg = toy_config(ModelKind::Hevp, 10, 5, 3);
  CHECK_THROWS_AS(run_chain(toy_config(ModelKind::Hevp, 10, 10, 3), ds), ConfigError);
  CHECK_NOTHROW(run_chain(cfg, ds));
}

TEST_CASE("MM loglik: finite-difference CDF oracle and boundary identities") {
  Dataset ds;
  ds.T = 2;
  ds.n = 2;
  ds.sites = {{0, 0}, {1, 0}};
  ds.y = {0.9, 1.4, 2.1, 0.3};
  ChainConfig cfg = toy_config(ModelKind::Mm, 4, 2, 5);
  cfg.J = 2;
  ModelState st;
  st.gev.mu = {0.1, 0.1};
  st.gev.log_sigma = {0.0, 0.0};
  st.gev.xi = {0.12, 0.12};
  st.tau = 0.8;
  st.alpha = 0.35;
  st.q = 0.6;
  st.A = {1.2, 0.5, 2.0, 0.7};
  st.B = {0.5, 0.5, 0.5, 0.5};
  st.gamma = {0.9, 1.8, 0.4, 1.1};
  st.lambda = {0.5, 0.5, 0.5, 0.5};
  st.labels = {1, 0};
  st.v = {0.4, 1.0};
  st.pi = {0.4, 0.6};

  const WeightMatrix wm = kernel_weights(ds.sites, make_knot_set(ds.sites), st.tau);
  auto mm_cdf_obs = [&](double y, int t, int i) {
    double s_til = 0.0, s_hat = 0.0;
    for (int l = 0; l < 2; ++l) {
      const double wa = std::pow(wm(i, l), 1.0 / st.alpha);
      s_til += st.A[t * 2 + l] * wa;
      s_hat += st.gamma[st.labels[t] * 2 + l] * wa;
    }
    const GevParams p{st.gev.mu[i], std::exp(st.gev.log_sigma[i]), st.gev.xi[i]};
    const double lx = gev_log_residual(y, p);
    const double k1 = 1.0 / (st.alpha * st.q);
    const double k2 = 1.0 / (st.alpha * (1.0 - st.q));
    const double Ht = s_til * std::exp(k1 * (std::log(st.q) - lx));
    const double Hh = s_hat * std::exp(k2 * (std::log1p(-st.q) - lx));
    return std::exp(-Ht - Hh);
  };

  // per-observation density equals the derivative of the conditional CDF
  double ll = loglik(st, ds, cfg);
  double fd_sum = 0.0;
  const double h = 2e-6;
  for (int t = 0; t < 2; ++t) {
    for (int i = 0; i < 2; ++i) {
      const double y = ds.at(t, i);
      fd_sum += std::log((mm_cdf_obs(y + h, t, i) - mm_cdf_obs(y - h, t, i)) /
                         (2.0 * h));
    }
  }
  CHECK(ll == doctest::Approx(fd_sum).epsilon(1e-4));

  // boundary reductions are exact with matched latents
  st.q = 1.0;
  ChainConfig hevp_cfg = cfg;
  hevp_cfg.kind = ModelKind::Hevp;
  CHECK(loglik(st, ds, cfg) == loglik(st, ds, hevp_cfg));
  st.q = 0.0;
  ChainConfig sb_cfg = cfg;
  sb_cfg.kind = ModelKind::Sb;
  CHECK(loglik(st, ds, cfg) == loglik(st, ds, sb_cfg));

  // support contract: observation below the conditional lower endpoint
  Dataset off = ds;
  off.y[0] = 0.1 - 1.0 / 0.12 - 1e-9;  // just below mu - sigma/xi
  st.q = 0.6;
  CHECK(loglik(st, off, cfg) == -std::numeric_limits<double>::infinity());
  // slightly inside: finite (close enough to the endpoint the density itself
  // underflows, so step in far enough to stay representable)
  off.y[0] = 0.1 - 1.0 / 0.12 + 1e-2;
  CHECK(std::isfinite(loglik(st, off, cfg)));
}

TEST_CASE("cached loglik agrees with full recomputation after sweeps") {
  for (ModelKind kind : {ModelKind::Hevp, ModelKind::Sb, ModelKind::Mm}) {
    const Dataset ds = toy_dataset(3, 8, 21);
    ChainConfig cfg = toy_config(kind, 60, 30, 31);
    cfg.validate = true;  // per-sweep validator compares caches internally
    Chain chain(cfg, ds);
    chain.run();
    CHECK(chain.loglik() ==
          doctest::Approx(chain.loglik_recomputed()).epsilon(1e-10));
  }
}

TEST_CASE("prior-recovery: no-data chains reproduce the priors") {
  // tau and q move essentially independently in a prior-only chain of any
  // size; alpha couples to every latent pair, so its marginal is checked on a
  // minimal-latent toy where the joint chain genuinely mixes
  {
    Dataset ds = toy_dataset(3, 6, 41);
    ChainConfig cfg = toy_config(ModelKind::Mm, 60000, 10, 43);
    cfg.prior_only = true;
    cfg.thinning = 25;
    Chain chain(cfg, ds);
    chain.run();
    std::vector<double> qs, taus;
    for (const auto& d : chain.samples().draws) {
      qs.push_back(d.q);
      taus.push_back(d.tau);
    }
    const double ks_q = ts::ks_statistic(qs, [](double x) { return x; });
    const double ks_t = ts::ks_statistic(
        taus, [](double x) { return ts::inverse_gamma_cdf(x, 0.1, 0.1); });
    CHECK(ts::ks_pvalue(ks_q, qs.size()) > 0.01);
    CHECK(ts::ks_pvalue(ks_t, taus.size()) > 0.01);
  }
  {
    Dataset tiny;
    tiny.T = 2;
    tiny.sites = {{0.0, 0.0}};
    tiny.n = 1;
    tiny.y = {1.0, 1.0};
    ChainConfig cfg = toy_config(ModelKind::Hevp, 120000, 10, 47);
    cfg.prior_only = true;
    cfg.thinning = 40;
    Chain chain(cfg, tiny);
    chain.run();
    std::vector<double> alphas;
    for (const auto& d : chain.samples().draws) alphas.push_back(d.alpha);
    const double ks_a = ts::ks_statistic(alphas, [](double x) { return x; });
    CHECK(ts::ks_pvalue(ks_a, alphas.size()) > 0.01);
  }
}

TEST_CASE("prior-recovery: latent positive-stable marginal at fixed alpha") {
  Dataset ds = toy_dataset(2, 3, 47);
  ChainConfig cfg = toy_config(ModelKind::Hevp, 30000, 10, 53);
  cfg.prior_only = true;
  cfg.fix_alpha = 0.5;
  cfg.fix_tau = 1.0;
  cfg.fix_gev = true;
  cfg.thinning = 20;
  Chain chain(cfg, ds);
  chain.run();
  // pool the latent A values across stored sweeps via repeated short runs is
  // costly; instead pool the terminal state across thinned sweeps recorded in
  // the chain itself
  std::vector<double> pool;
  {
    Chain c2(cfg, ds);
    for (int k = 0; k < 20000; ++k) {
      c2.sweep_once();
      if (k % 40 == 0) {
        for (double a : c2.state().A) pool.push_back(a);
      }
    }
  }
  const double ks = ts::ks_statistic(pool, ts::levy_half_cdf);
  CHECK(ts::ks_pvalue(ks, pool.size()) > 0.01);
  // the Laplace-transform functional as an extra guard
  double lap = 0.0;
  for (double a : pool) lap += std::exp(-a);
  lap /= static_cast<double>(pool.size());
  CHECK(lap == doctest::Approx(std::exp(-1.0)).epsilon(0.02));
}

TEST_CASE("stick update conjugacy with frozen labels") {
  // a one-sweep chain exposes update_sticks through the state after labels
  // are pinned by construction: with J=2 atoms identical and a single time,
  // v_1 | labels ~ Beta(1 + n_1, 1 + n_{>1})
  Dataset ds = toy_dataset(2, 9, 59);
  ChainConfig cfg = toy_config(ModelKind::Sb, 20000, 10, 61);
  cfg.prior_only = true;  // labels then follow pi alone; sticks stay conjugate
  cfg.J = 3;
  cfg.thinning = 10;
  Chain chain(cfg, ds);
  // drive sweeps and check against the analytic posterior by simulation:
  // under prior-only the (labels, sticks) pair is a Gibbs chain on its exact
  // joint; the stationary marginal of v_1 is Beta(1,1) marginalized over
  // labels - equivalently uniform
  std::vector<double> v1;
  for (int k = 0; k < 20000; ++k) {
    chain.sweep_once();
    if (k % 10 == 0) v1.push_back(chain.state().v[0]);
  }
  const double ks = ts::ks_statistic(v1, [](double x) { return x; });
  CHECK(ts::ks_pvalue(ks, v1.size()) > 0.01);
}

TEST_CASE("label update degeneracies") {
  SUBCASE("J = 1 pins every label") {
    const Dataset ds = toy_dataset(2, 5, 67);
    ChainConfig cfg = toy_config(ModelKind::Sb, 30, 10, 71);
    cfg.J = 1;
    Chain chain(cfg, ds);
    chain.run();
    for (int t = 0; t < 5; ++t) CHECK(chain.state().labels[t] == 0);
  }
  SUBCASE("identical atoms give equal conditional weights") {
    const Dataset ds = toy_dataset(2, 4, 73);
    ChainConfig cfg = toy_config(ModelKind::Sb, 30, 10, 79);
    cfg.J = 2;
    Chain chain(cfg, ds);
    ModelState st = chain.state();
    std::fill(st.gamma.begin(), st.gamma.end(), 1.3);
    std::fill(st.lambda.begin(), st.lambda.end(), 0.5);
    st.v = {0.5, 1.0};
    st.pi = {0.5, 0.5};
    chain.set_state(st);
    for (int t = 0; t < 4; ++t) {
      const auto lw = chain.label_logweights(t);
      CHECK(lw[0] == doctest::Approx(lw[1]).epsilon(1e-12));
    }
  }
  SUBCASE("1-site 1-time conditional matches a hand computation") {
    Dataset ds;
    ds.T = 1;
    ds.n = 1;
    ds.sites = {{0, 0}};
    ds.y = {1.3};
    ChainConfig cfg = toy_config(ModelKind::Sb, 30, 10, 81);
    cfg.J = 2;
    Chain chain(cfg, ds);
    ModelState st = chain.state();
    st.gamma = {0.7, 2.4};
    st.lambda = {0.5, 0.5};
    st.v = {0.3, 1.0};
    st.pi = {0.3, 0.7};
    st.labels = {0};
    st.tau = 1.0;
    st.alpha = 0.45;
    st.gev.mu = {0.2};
    st.gev.log_sigma = {0.1};
    st.gev.xi = {0.1};
    chain.set_state(st);
    const auto lw = chain.label_logweights(0);
    // hand computation: single knot, w = 1 -> S_j = gamma_j
    const GevParams p{0.2, std::exp(0.1), 0.1};
    const double lx = gev_log_residual(1.3, p);
    auto obs_ll = [&](double S) {
      return -S * std::exp(-lx / 0.45) + std::log(S) - std::log(0.45) - 0.1 -
             (1.0 / 0.45 + 0.1) * lx;
    };
    const double w0 = std::log(0.3) + obs_ll(0.7);
    const double w1 = std::log(0.7) + obs_ll(2.4);
    // weights agree up to a shared constant
    CHECK(lw[0] - lw[1] == doctest::Approx(w0 - w1).epsilon(1e-10));
  }
}

TEST_CASE("posterior_prob_delta") {
  const Dataset ds = toy_dataset(2, 5, 83);
  ChainConfig cfg = toy_config(ModelKind::Mm, 40, 20, 89);
  const PosteriorSamples mm = run_chain(cfg, ds);
  const double p = posterior_prob_delta(mm);
  CHECK(p >= 0.0);
  CHECK(p <= 1.0);
  cfg.kind = ModelKind::Hevp;
  const PosteriorSamples hevp = run_chain(cfg, ds);
  CHECK_THROWS_AS(posterior_prob_delta(hevp), DomainError);
  // all q = 1 means probability 1
  ChainConfig pinned = toy_config(ModelKind::Mm, 30, 10, 91);
  pinned.fix_q = 1.0;
  const PosteriorSamples ones = run_chain(pinned, ds);
  CHECK(posterior_prob_delta(ones) == 1.0);
}

TEST_CASE("replicated successive-conditional (Geweke) run stays on the prior") {
  // compact version of the acceptance-scale test
  const int M = 220, K = 10;
  Dataset ds;
  ds.T = 6;
  ds.sites = grid_sites(2, 2, 1, 2, 1, 2);
  ds.n = 4;
  ds.y.assign(24, 1.0);
  std::vector<double> alphas, qs;
  for (int m = 0; m < M; ++m) {
    ChainConfig cfg = toy_config(ModelKind::Mm, K + 1, K, 7000 + m);
    cfg.J = 3;
    cfg.init_from_prior = true;
    Chain chain(cfg, ds);
    RngStream resim(31337, m);
    chain.set_data(chain.simulate_data_given_state(resim));
    for (int k = 0; k < K; ++k) {
      chain.sweep_once();
      chain.set_data(chain.simulate_data_given_state(resim));
    }
    alphas.push_back(chain.state().alpha);
    qs.push_back(chain.state().q);
  }
  const auto am = ts::mean_se(alphas);
  const auto qm = ts::mean_se(qs);
  CHECK(std::fabs(am.mean - 0.5) < 3.5 * am.se);
  CHECK(std::fabs(qm.mean - 0.5) < 3.5 * qm.se);
}

TEST_CASE("moment-based GEV initializer") {
  RngStream rng(97, 0);
  const GevParams truth{0.4, 1.3, 0.15};
  std::vector<double> y(4000);
  for (double& v : y) v = gev_sample(truth, rng);
  const GevParams fit = gev_moment_fit(y);
  CHECK(fit.mu == doctest::Approx(truth.mu).epsilon(0.15));
  CHECK(fit.sigma == doctest::Approx(truth.sigma).epsilon(0.15));
  CHECK(std::fabs(fit.xi - truth.xi) < 0.1);
}

TEST_CASE("dataset validation") {
  Dataset bad;
  bad.T = 2;
  bad.n = 1;
  bad.sites = {{0, 0}};
  bad.y = {1.0, std::nan("")};
  CHECK_THROWS_AS(run_chain(toy_config(ModelKind::Hevp, 10, 5, 1), bad), DataError);
}
