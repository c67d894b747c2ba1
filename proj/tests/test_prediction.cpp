#include <doctest.h>

#include <cmath>
#include <vector>

#include "errors.hpp"
#include "mcmc.hpp"
#include "prediction.hpp"
#include "simulators.hpp"
#include "testsupport.hpp"

using namespace maxmix;
namespace ts = testsupport;

namespace {

// handcrafted constant-surface posterior with R identical-ish draws
PosteriorSamples synthetic_samples(ModelKind kind, int R, std::uint64_t seed) {
  PosteriorSamples s;
  s.kind = kind;
  s.gev_mode = SurfaceMode::Constant;
  s.n = 2;
  s.T = 30;
  s.J = kind == ModelKind::Hevp ? 0 : 3;
  s.sites = {{1, 1}, {2, 1}};
  s.knots = make_knot_set({{1, 1}, {2, 1}, {1.5, 2.0}});
  s.L = 3;
  s.seed = seed;
  RngStream rng(seed, 1);
  for (int r = 0; r < R; ++r) {
    PosteriorDraw d;
    d.iteration = r;
    d.alpha = 0.3 + 0.02 * normal_sample(rng);
    d.alpha = std::clamp(d.alpha, 0.05, 0.95);
    d.tau = std::exp(0.0 + 0.05 * normal_sample(rng));
    d.mu = {0.1};
    d.log_sigma = {0.0};
    d.xi = {0.1};
    if (kind != ModelKind::Hevp) {
      d.pi = {0.5, 0.3, 0.2};
      d.gamma.resize(9);
      for (double& g : d.gamma) g = ps_sample(0.3, rng);
    }
    if (kind == ModelKind::Mm) {
      d.q = 0.5;
      d.delta = 1;
    }
    s.draws.push_back(std::move(d));
  }
  return s;
}

}  // namespace

TEST_CASE("predict_quantiles: HEVP closed form and monotonicity") {
  const PosteriorSamples s = synthetic_samples(ModelKind::Hevp, 40, 3);
  const std::vector<Site> new_sites = {{1.2, 1.1}, {4.0, 4.0}};
  const std::vector<double> levels = {0.5, 0.9, 0.95, 0.99};
  const QuantileGrid grid = predict_quantiles(s, new_sites, levels, 7);
  // HEVP marginal is exactly GEV(mu, sigma, xi): every draw shares the same
  // constants, so the posterior mean equals the closed-form quantile
  for (std::size_t k = 0; k < levels.size(); ++k) {
    const double expect = gev_quantile(levels[k], {0.1, 1.0, 0.1});
    CHECK(grid.mean_at(0, k) == doctest::Approx(expect).epsilon(1e-8));
    CHECK(grid.sd_at(0, k) < 1e-8);
  }
  for (std::size_t site = 0; site < new_sites.size(); ++site) {
    for (std::size_t k = 1; k < levels.size(); ++k) {
      CHECK(grid.mean_at(site, k) >= grid.mean_at(site, k - 1));
    }
  }
  CHECK_THROWS_AS(predict_quantiles(s, new_sites, std::vector<double>{0.5, 1.5}, 7),
                  DomainError);
}

TEST_CASE("predict_quantiles: SB numeric inversion is exact on the marginal") {
  const PosteriorSamples s = synthetic_samples(ModelKind::Sb, 25, 5);
  const std::vector<double> levels = {0.25, 0.8, 0.99};
  const QuantileGrid grid = predict_quantiles(s, {s.sites[0]}, levels, 9);
  // invert the posterior-mean quantile back through a single-draw marginal:
  // with one draw the mean quantile must satisfy F(residual) = level exactly
  PosteriorSamples one = s;
  one.draws.resize(1);
  const QuantileGrid g1 = predict_quantiles(one, {s.sites[0]}, levels, 9);
  const PosteriorDraw& d = one.draws[0];
  const WeightMatrix wm = kernel_weights(one.sites, one.knots, d.tau);
  const SbAtoms atoms = make_sb_atoms(3, 3, d.gamma, d.pi);
  for (std::size_t k = 0; k < levels.size(); ++k) {
    const double y = g1.mean_at(0, k);
    // back out the residual and check the conditional marginal CDF
    const GevParams p{d.mu[0], std::exp(d.log_sigma[0]), d.xi[0]};
    const double c = std::exp(gev_log_residual(y, p));
    CHECK(f_sb_marginal(c, 0, atoms, wm, d.alpha) ==
          doctest::Approx(levels[k]).epsilon(1e-7));
  }
  (void)grid;
}

TEST_CASE("empirical chi") {
  SUBCASE("comonotone columns") {
    Dataset ds;
    ds.T = 50;
    ds.n = 2;
    ds.sites = {{0, 0}, {1, 0}};
    ds.y.resize(100);
    RngStream rng(11, 0);
    for (int t = 0; t < 50; ++t) {
      const double v = rng.uniform();
      ds.y[t * 2] = v;
      ds.y[t * 2 + 1] = 2.0 * v + 1.0;
    }
    for (double u : {0.5, 0.8, 0.9}) {
      CHECK(empirical_chi(ds, 0, 1, u).value == 1.0);
    }
  }
  SUBCASE("independent columns approach 1 - u") {
    Dataset ds;
    ds.T = 10000;
    ds.n = 2;
    ds.sites = {{0, 0}, {1, 0}};
    ds.y.resize(20000);
    RngStream rng(13, 0);
    for (double& v : ds.y) v = rng.uniform();
    for (double u : {0.5, 0.9}) {
      const ChiEstimate est = empirical_chi(ds, 0, 1, u);
      const double se = std::sqrt(u * (1 - u) / (ds.T * (1 - u)));
      CHECK(std::fabs(est.value - (1.0 - u)) < 3.0 * se);
    }
  }
  SUBCASE("HEVP simulation vs the closed form") {
    SimConfig cfg;
    cfg.setting = SimSetting::MS;
    cfg.sites = {{4, 4}, {5, 4}};
    cfg.knots = make_knot_set(grid_sites(7, 7, 1, 7, 1, 7));
    cfg.T = 10000;
    cfg.seed = 15;
    const Dataset ds = simulate(cfg);
    const WeightMatrix wm = kernel_weights(cfg.sites, cfg.knots, cfg.tau);
    const ChiEstimate est = empirical_chi(ds, 0, 1, 0.99);
    CHECK(std::fabs(est.value - chi_hevp(0, 1, wm, cfg.alpha)) < 0.05);
  }
  SUBCASE("preconditions and flags") {
    Dataset ds;
    ds.T = 10;
    ds.n = 2;
    ds.sites = {{0, 0}, {1, 0}};
    ds.y.assign(20, 1.0);
    CHECK_THROWS_AS(empirical_chi(ds, 0, 1, 0.5), DomainError);
    ds.T = 25;
    ds.y.resize(50);
    RngStream rng(17, 0);
    for (double& v : ds.y) v = rng.uniform();
    CHECK(empirical_chi(ds, 0, 1, 0.95).low_count);
  }
}

TEST_CASE("model chi") {
  SUBCASE("HEVP finite-u converges to the closed-form limit") {
    const PosteriorSamples s = synthetic_samples(ModelKind::Hevp, 10, 21);
    PosteriorSamples one = s;
    one.draws.resize(1);
    const double u = 1.0 - 1e-6;
    const double got = model_chi(one, 0, 1, u);
    const WeightMatrix wm = kernel_weights(one.sites, one.knots, one.draws[0].tau);
    CHECK(got == doctest::Approx(chi_hevp(0, 1, wm, one.draws[0].alpha)).epsilon(1e-3));
  }
  SUBCASE("MM collapsed onto SB is asymptotically independent") {
    PosteriorSamples s = synthetic_samples(ModelKind::Mm, 10, 23);
    for (auto& d : s.draws) d.q = 0.0;
    CHECK(model_chi(s, 0, 1, 1.0 - 1e-6) < 0.02);
  }
  SUBCASE("SB chi is in range and thins toward the tail") {
    const PosteriorSamples s = synthetic_samples(ModelKind::Sb, 15, 25);
    const double mid = model_chi(s, 0, 1, 0.5);
    const double high = model_chi(s, 0, 1, 0.999);
    CHECK(mid >= 0.0);
    CHECK(mid <= 1.0);
    CHECK(high < mid);
  }
}

TEST_CASE("mmse") {
  const std::vector<double> est = {1.0, 2.0, 3.0};
  CHECK(mmse(est, est) == 0.0);
  const double single_e[1] = {3.0};
  const double single_t[1] = {1.0};
  CHECK(mmse({single_e, 1}, {single_t, 1}) == 4.0);
  const std::vector<double> bad = {1.0};
  CHECK_THROWS_AS(mmse(est, bad), DomainError);
}

TEST_CASE("fold construction") {
  const auto folds = make_folds(9, 3, 5);
  CHECK(folds.size() == 3);
  std::vector<int> seen;
  for (const auto& f : folds) {
    CHECK(f.size() == 3);
    seen.insert(seen.end(), f.begin(), f.end());
  }
  std::sort(seen.begin(), seen.end());
  for (int i = 0; i < 9; ++i) CHECK(seen[i] == i);
  // deterministic under the same seed
  CHECK(make_folds(9, 3, 5) == folds);
  CHECK(make_folds(9, 3, 6) != folds);
  CHECK_THROWS_AS(make_folds(9, 1, 5), ConfigError);
  CHECK_THROWS_AS(make_folds(3, 4, 5), ConfigError);
  // leave-one-site-out degenerates chi scoring
  CHECK_THROWS_AS(make_folds(9, 9, 5), ConfigError);
}

TEST_CASE("subset_sites") {
  Dataset ds;
  ds.T = 2;
  ds.n = 3;
  ds.sites = {{0, 0}, {1, 0}, {2, 0}};
  ds.y = {1, 2, 3, 4, 5, 6};
  const Dataset sub = subset_sites(ds, {2, 0});
  CHECK(sub.n == 2);
  CHECK(sub.at(0, 0) == 3);
  CHECK(sub.at(0, 1) == 1);
  CHECK(sub.at(1, 0) == 6);
  CHECK(sub.sites[0].x == 2);
}

TEST_CASE("empirical quantile") {
  std::vector<double> v = {3.0, 1.0, 2.0};
  CHECK(empirical_quantile(v, 0.5) == 2.0);
  CHECK(empirical_quantile(v, 0.25) == doctest::Approx(1.5));
  CHECK_THROWS_AS(empirical_quantile(v, 0.0), DomainError);
}

TEST_CASE("cross validation smoke: deterministic and sane") {
  SimConfig sim;
  sim.setting = SimSetting::MS;
  sim.sites = grid_sites(3, 3, 1, 3, 1, 3);
  sim.T = 25;
  sim.seed = 31;
  const Dataset ds = simulate(sim);
  ChainConfig cfg;
  cfg.kind = ModelKind::Hevp;
  cfg.iterations = 200;
  cfg.burnin = 100;
  cfg.thinning = 5;
  cfg.explore_init = false;
  const std::vector<double> q_levels = {0.5, 0.9};
  const std::vector<double> u_levels = {0.8};
  const CvScores a = cross_validate(ds, {ModelKind::Hevp}, 3, cfg, q_levels,
                                    u_levels, 77, 1);
  const CvScores b = cross_validate(ds, {ModelKind::Hevp}, 3, cfg, q_levels,
                                    u_levels, 77, 2);
  REQUIRE(a.mmse_q.size() == 2);
  for (std::size_t k = 0; k < a.mmse_q.size(); ++k) {
    CHECK(a.mmse_q[k] >= 0.0);
    CHECK(a.mmse_q[k] == b.mmse_q[k]);  // thread cap cannot change results
  }
  for (std::size_t k = 0; k < a.mmse_chi.size(); ++k) {
    CHECK(a.mmse_chi[k] == b.mmse_chi[k]);
  }
}

TEST_CASE("posterior predictive quantiles are thinning-stable") {
  // doubling the thinning moves posterior means by less than 2 MC SEs
  SimConfig sim;
  sim.setting = SimSetting::MS;
  sim.sites = grid_sites(3, 3, 1, 3, 1, 3);
  sim.T = 20;
  sim.seed = 37;
  const Dataset ds = simulate(sim);
  ChainConfig cfg;
  cfg.kind = ModelKind::Hevp;
  cfg.iterations = 1500;
  cfg.burnin = 500;
  cfg.thinning = 2;
  cfg.seed = 41;
  const PosteriorSamples dense = run_chain(cfg, ds);
  PosteriorSamples thin = dense;
  thin.draws.clear();
  for (std::size_t k = 0; k < dense.draws.size(); k += 2) {
    thin.draws.push_back(dense.draws[k]);
  }
  const std::vector<double> levels = {0.9};
  const QuantileGrid gd = predict_quantiles(dense, {ds.sites[4]}, levels, 3);
  const QuantileGrid gt = predict_quantiles(thin, {ds.sites[4]}, levels, 3);
  const double se = gd.sd_at(0, 0) / std::sqrt(static_cast<double>(thin.draws.size()));
  CHECK(std::fabs(gd.mean_at(0, 0) - gt.mean_at(0, 0)) < 2.0 * se + 1e-12);
}
