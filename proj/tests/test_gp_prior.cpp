#include <doctest.h>

#include <cmath>
#include <vector>

#include "errors.hpp"
#include "gp_prior.hpp"
#include "rng.hpp"
#include "testsupport.hpp"

using namespace maxmix;
namespace ts = testsupport;

TEST_CASE("matern covariance closed forms") {
  GpHyper h;
  h.variance = 2.0;
  h.range = 1.5;
  h.smoothness = 0.5;
  CHECK(matern_cov(0.0, h) == doctest::Approx(2.0));
  CHECK(matern_cov(1.5, h) == doctest::Approx(2.0 * std::exp(-1.0)).epsilon(1e-14));
  h.variance = 1.0;
  h.range = 1.0;
  CHECK(matern_cov(1.0, h) == doctest::Approx(std::exp(-1.0)).epsilon(1e-14));
  h.smoothness = 1.5;
  CHECK(matern_cov(1.0, h) ==
        doctest::Approx((1.0 + std::sqrt(3.0)) * std::exp(-std::sqrt(3.0)))
            .epsilon(1e-12));
  CHECK(matern_cov(1.0, h) == doctest::Approx(0.48335).epsilon(1e-4));
  // nonincreasing in d for each smoothness
  for (double nu : {0.5, 1.5, 2.5}) {
    h.smoothness = nu;
    double prev = matern_cov(0.0, h);
    for (double d = 0.1; d < 8.0; d += 0.1) {
      const double c = matern_cov(d, h);
      CHECK(c <= prev + 1e-15);
      prev = c;
    }
  }
  CHECK_THROWS_AS(matern_cov(-1.0, h), DomainError);
  h.smoothness = 0.7;
  CHECK_THROWS_AS(matern_cov(1.0, h), DomainError);
}

TEST_CASE("gp_logprior") {
  GpHyper h;
  h.beta = {0.0, 0.0, 0.0};
  h.variance = 1.7;
  h.range = 1.0;
  SUBCASE("single site reduces to a scalar normal") {
    const double f[1] = {0.0};
    CHECK(gp_logprior({f, 1}, {{0, 0}}, h) ==
          doctest::Approx(-0.5 * std::log(2.0 * M_PI * 1.7)).epsilon(1e-12));
  }
  SUBCASE("coincident sites need the jitter, far apart do not") {
    const double f[2] = {0.3, 0.3};
    // duplicate sites give a singular covariance; the jitter fallback keeps it
    // finite rather than throwing
    const double lp = gp_logprior({f, 2}, {{0, 0}, {0, 0}}, h);
    CHECK(std::isfinite(lp));
  }
  SUBCASE("maximized at the prior mean") {
    h.beta = {0.4, -0.1, 0.2};
    const std::vector<Site> sites = {{0, 0}, {1, 0.5}, {0.2, 2.0}, {3, 1}};
    std::vector<double> mean(sites.size());
    for (std::size_t i = 0; i < sites.size(); ++i) mean[i] = gp_mean(sites[i], h);
    const double at_mean = gp_logprior(mean, sites, h);
    RngStream rng(3, 0);
    for (int k = 0; k < 5; ++k) {
      std::vector<double> f = mean;
      for (double& v : f) v += 0.3 * (rng.uniform() - 0.5);
      CHECK(gp_logprior(f, sites, h) < at_mean);
    }
    // finite-difference gradient at the mean is ~0
    for (std::size_t i = 0; i < sites.size(); ++i) {
      std::vector<double> f = mean;
      const double eps = 1e-5;
      f[i] = mean[i] + eps;
      const double up = gp_logprior(f, sites, h);
      f[i] = mean[i] - eps;
      const double dn = gp_logprior(f, sites, h);
      CHECK(std::fabs((up - dn) / (2.0 * eps)) < 1e-5);
    }
  }
  SUBCASE("normal density integrates to 1 on one site") {
    h.beta = {0.2, 0.0, 0.0};
    const double mass = ts::integrate(
        [&](double v) {
          const double f[1] = {v};
          return std::exp(gp_logprior({f, 1}, {{0, 0}}, h));
        },
        -15.0, 15.0, 1e-10);
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-8));
  }
}

TEST_CASE("gp_conditional") {
  GpHyper h;
  h.beta = {0.1, 0.05, 0.0};
  h.variance = 1.3;
  h.range = 2.0;
  const std::vector<Site> sites = {{0, 0}, {2, 0}, {0, 2}};
  const std::vector<double> obs = {0.5, -0.2, 0.9};

  SUBCASE("exact interpolation at an observed site") {
    const auto cond = gp_conditional({sites[1]}, obs, sites, h);
    CHECK(cond.mean[0] == doctest::Approx(obs[1]).epsilon(1e-7));
    CHECK(cond.cov[0] == doctest::Approx(0.0).epsilon(1e-7));
  }
  SUBCASE("decorrelation limit far away") {
    const Site far{400.0, 400.0};
    const auto cond = gp_conditional({far}, obs, sites, h);
    CHECK(cond.mean[0] == doctest::Approx(gp_mean(far, h)).epsilon(1e-10));
    CHECK(cond.cov[0] == doctest::Approx(h.variance).epsilon(1e-10));
  }
  SUBCASE("matches a hand-built 3x3 solve on a 1-D configuration") {
    GpHyper g;
    g.beta = {0.0, 0.0, 0.0};
    g.variance = 1.0;
    g.range = 1.0;
    const std::vector<Site> line = {{0, 0}, {1, 0}, {2, 0}};
    const std::vector<double> f = {1.0, -1.0, 0.5};
    const Site target{0.5, 0.0};
    const auto cond = gp_conditional({target}, f, line, g);
    // dense solve by hand: C w = k, mean = w . f
    const double c01 = std::exp(-1.0), c02 = std::exp(-2.0);
    double C[3][3] = {{1, c01, c02}, {c01, 1, c01}, {c02, c01, 1}};
    double kv[3] = {std::exp(-0.5), std::exp(-0.5), std::exp(-1.5)};
    // Gaussian elimination
    double w[3];
    {
      double A[3][4];
      for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) A[r][c] = C[r][c];
        A[r][3] = kv[r];
      }
      for (int p = 0; p < 3; ++p) {
        for (int r = p + 1; r < 3; ++r) {
          const double m = A[r][p] / A[p][p];
          for (int c = p; c < 4; ++c) A[r][c] -= m * A[p][c];
        }
      }
      for (int r = 2; r >= 0; --r) {
        double s = A[r][3];
        for (int c = r + 1; c < 3; ++c) s -= A[r][c] * w[c];
        w[r] = s / A[r][r];
      }
    }
    const double mean = w[0] * f[0] + w[1] * f[1] + w[2] * f[2];
    const double var = 1.0 - (w[0] * kv[0] + w[1] * kv[1] + w[2] * kv[2]);
    CHECK(cond.mean[0] == doctest::Approx(mean).epsilon(1e-10));
    CHECK(cond.cov[0] == doctest::Approx(var).epsilon(1e-8));
  }
}

TEST_CASE("constant priors") {
  const ConstantPriors pri = constant_priors();
  CHECK(pri.logprior_mu(0.0) ==
        doctest::Approx(-std::log(10.0 * std::sqrt(2.0 * M_PI))).epsilon(1e-12));
  CHECK(pri.logprior_alpha(1.5) == -std::numeric_limits<double>::infinity());
  CHECK(pri.logprior_alpha(-0.1) == -std::numeric_limits<double>::infinity());
  CHECK(pri.logprior_alpha(0.5) == 0.0);
  // InvGamma(0.1, 0.1) density at 1
  CHECK(std::exp(pri.logprior_tau(1.0)) ==
        doctest::Approx(std::pow(0.1, 0.1) / std::tgamma(0.1) * std::exp(-0.1))
            .epsilon(1e-12));
  CHECK(std::exp(pri.logprior_tau(1.0)) == doctest::Approx(0.075549).epsilon(1e-4));
  CHECK(pri.logprior_tau(-1.0) == -std::numeric_limits<double>::infinity());
}
