#include <doctest.h>

#include <cmath>
#include <vector>

#include "distributions.hpp"
#include "errors.hpp"
#include "testsupport.hpp"

using namespace maxmix;
namespace ts = testsupport;

TEST_CASE("gev_cdf closed forms") {
  CHECK(gev_cdf(1.0, {1, 1, 1}) == doctest::Approx(std::exp(-1.0)).epsilon(1e-14));
  // y = mu maps to exp(-1) for any sigma, xi
  CHECK(gev_cdf(2.5, {2.5, 0.4, -0.2}) == doctest::Approx(std::exp(-1.0)).epsilon(1e-14));
  CHECK(gev_cdf(2.5, {2.5, 3.0, 0.0}) == doctest::Approx(std::exp(-1.0)).epsilon(1e-14));
  // exp(-1.2^{-10})
  CHECK(gev_cdf(2.0, {0, 1, 0.1}) ==
        doctest::Approx(std::exp(-std::pow(1.2, -10.0))).epsilon(1e-14));
  CHECK(gev_cdf(2.0, {0, 1, 0.1}) == doctest::Approx(0.850861).epsilon(1e-5));
  // support endpoints
  CHECK(gev_cdf(-10.1, {0, 1, 0.1}) == 0.0);   // below lower endpoint, xi > 0
  CHECK(gev_cdf(5.1, {0, 1, -0.2}) == 1.0);    // above upper endpoint, xi < 0
  CHECK_THROWS_AS(gev_cdf(0.0, {0, -1, 0}), DomainError);
}

TEST_CASE("gev_quantile inverts gev_cdf") {
  CHECK(gev_quantile(std::exp(-1.0), {1, 1, 1}) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(gev_quantile(std::exp(-1.0), {-3.2, 0.7, -0.3}) ==
        doctest::Approx(-3.2).epsilon(1e-12));
  CHECK_THROWS_AS(gev_quantile(0.0, {0, 1, 0}), DomainError);
  CHECK_THROWS_AS(gev_quantile(1.0, {0, 1, 0}), DomainError);

  RngStream rng(11, 0);
  for (int k = 0; k < 1000; ++k) {
    const GevParams p{rng.uniform(-5, 5), rng.uniform(0.1, 3.0), rng.uniform(-0.45, 0.95)};
    const double u = rng.uniform();
    CHECK(gev_cdf(gev_quantile(u, p), p) == doctest::Approx(u).epsilon(1e-10));
  }
  // tiny-xi band goes through the series branch
  for (double xi : {1e-9, 5e-5, -5e-5, 1e-6}) {
    const GevParams p{0.4, 1.3, xi};
    for (double u : {0.011, 0.39, 0.97}) {
      CHECK(gev_cdf(gev_quantile(u, p), p) == doctest::Approx(u).epsilon(1e-10));
    }
  }
}

TEST_CASE("gev_logpdf") {
  // unit Frechet density x^{-2} e^{-1/x} at 1
  CHECK(gev_logpdf(1.0, {1, 1, 1}) == doctest::Approx(-1.0).epsilon(1e-14));
  // off support
  CHECK(gev_logpdf(-3.0, {0, 1, 0.5}) == -std::numeric_limits<double>::infinity());
  // integrates to one by quadrature (segmented along quantiles so the
  // adaptive rule cannot miss the density bump)
  const GevParams p{0, 1, 0.1};
  double mass = 0.0;
  double lo = gev_quantile(1e-12, p);
  for (int k = 1; k <= 40; ++k) {
    const double u = k == 40 ? 1.0 - 1e-12 : static_cast<double>(k) / 40.0;
    const double hi = gev_quantile(u, p);
    mass += ts::integrate([&](double y) { return std::exp(gev_logpdf(y, p)); },
                          lo, hi, 1e-10);
    lo = hi;
  }
  CHECK(mass == doctest::Approx(1.0).epsilon(1e-6));
  // matches the numerical derivative of the CDF
  RngStream rng(13, 0);
  for (int k = 0; k < 100; ++k) {
    const GevParams pr{rng.uniform(-2, 2), rng.uniform(0.5, 2.0), rng.uniform(-0.3, 0.6)};
    const double u = rng.uniform(0.05, 0.95);
    const double y = gev_quantile(u, pr);
    const double h = 1e-5;
    const double fd = (gev_cdf(y + h, pr) - gev_cdf(y - h, pr)) / (2.0 * h);
    CHECK(std::exp(gev_logpdf(y, pr)) == doctest::Approx(fd).epsilon(1e-6));
  }
}

TEST_CASE("gev_sample: distribution and determinism") {
  RngStream rng(17, 0);
  const int N = 100000;
  std::vector<double> draws(N);
  for (double& d : draws) d = gev_sample({1, 1, 1}, rng);
  const double ks = ts::ks_statistic(
      draws, [](double y) { return y > 0 ? std::exp(-1.0 / y) : 0.0; });
  CHECK(ks < 0.01);

  RngStream r1(99, 4), r2(99, 4);
  for (int k = 0; k < 100; ++k) {
    CHECK(gev_sample({0, 1, 0.2}, r1) == gev_sample({0, 1, 0.2}, r2));
  }
}

TEST_CASE("max-stability of the unit Frechet sampler") {
  // max of n unit Frechet draws, divided by n, is unit Frechet again
  RngStream rng(19, 0);
  const int n = 10;
  const int reps = 100000;
  std::vector<double> draws(reps);
  for (int r = 0; r < reps; ++r) {
    double m = 0.0;
    for (int k = 0; k < n; ++k) m = std::max(m, gev_sample({1, 1, 1}, rng));
    draws[r] = m / n;
  }
  const double ks = ts::ks_statistic(
      draws, [](double y) { return y > 0 ? std::exp(-1.0 / y) : 0.0; });
  CHECK(ks < 0.01);
}

TEST_CASE("positive stable sampler: Laplace transform oracle") {
  RngStream rng(23, 0);
  const int N = 1000000;
  for (double alpha : {0.2, 0.5, 0.8}) {
    std::vector<double> e05(N), e1(N), e2(N);
    for (int r = 0; r < N; ++r) {
      const double a = ps_sample(alpha, rng);
      e05[r] = std::exp(-0.5 * a);
      e1[r] = std::exp(-a);
      e2[r] = std::exp(-2.0 * a);
    }
    const double t[3] = {0.5, 1.0, 2.0};
    const std::vector<double>* v[3] = {&e05, &e1, &e2};
    for (int k = 0; k < 3; ++k) {
      const auto ms = ts::mean_se(*v[k]);
      const double target = std::exp(-std::pow(t[k], alpha));
      INFO("alpha=", alpha, " t=", t[k], " mean=", ms.mean, " target=", target);
      CHECK(std::fabs(ms.mean - target) < 3.0 * ms.se);
    }
  }
  CHECK_THROWS_AS(ps_sample(0.0, rng), DomainError);
  CHECK_THROWS_AS(ps_sample(1.0, rng), DomainError);
}

TEST_CASE("positive stable alpha=1/2 matches the Levy closed form") {
  RngStream rng(29, 0);
  const int N = 1000000;
  std::vector<double> draws(N);
  for (double& d : draws) d = ps_sample(0.5, rng);
  // kernel-density estimate at x = 1 against (1/(2 sqrt(pi))) x^{-3/2} e^{-1/(4x)}
  const double h = 0.05;
  long count = 0;
  for (double d : draws) {
    if (std::fabs(d - 1.0) <= h) ++count;
  }
  const double dens = static_cast<double>(count) / (N * 2.0 * h);
  CHECK(dens == doctest::Approx(ts::levy_half_pdf(1.0)).epsilon(0.05));
  CHECK(ts::levy_half_pdf(1.0) == doctest::Approx(0.21970).epsilon(1e-4));
  // and the full CDF
  const double ks = ts::ks_statistic(draws, ts::levy_half_cdf);
  CHECK(ks < 0.005);
}

TEST_CASE("ps_aux_c values and limits") {
  // lambda -> 0 limit: alpha^{1/(1-alpha)} (1-alpha)/alpha
  CHECK(ps_aux_c(0.0, 0.5) == doctest::Approx(0.25).epsilon(1e-12));
  const double near0 = ps_aux_c(1e-9, 0.5);
  CHECK(near0 == doctest::Approx(0.25).epsilon(1e-6));
  // hand evaluation at lambda = 1/2, alpha = 1/2
  CHECK(ps_aux_c(0.5, 0.5) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(std::isinf(ps_aux_c(1.0, 0.5)));
  // positive and finite on a grid
  for (double alpha : {0.1, 0.35, 0.6, 0.9}) {
    for (double lam = 1e-3; lam < 0.999; lam += 1e-3) {
      const double c = ps_aux_c(lam, alpha);
      CHECK(c > 0.0);
      CHECK(std::isfinite(c));
    }
  }
}

TEST_CASE("ps_aux_joint_logdensity: quadrature oracles") {
  SUBCASE("normalizes to 1") {
    // gamma integrated on a log axis inside; lambda outside (at large gamma
    // the lambda direction develops a boundary layer near 1, so the reverse
    // order is numerically hopeless)
    for (double alpha : {0.3, 0.7}) {
      const double mass = ts::integrate(
          [&](double lam) {
            return ts::integrate_positive_axis(
                [&](double g) {
                  return std::exp(ps_aux_joint_logdensity({g, lam}, alpha));
                },
                1e-9);
          },
          1e-10, 1.0 - 1e-10, 1e-6);
      CHECK(mass == doctest::Approx(1.0).epsilon(1e-3));
    }
  }
  SUBCASE("lambda-marginalization recovers the Levy density at alpha = 1/2") {
    for (double x : {0.5, 1.0, 2.0}) {
      const double dens = ts::integrate(
          [&](double lam) {
            return std::exp(ps_aux_joint_logdensity({x, lam}, 0.5));
          },
          1e-10, 1.0 - 1e-10, 1e-9);
      CHECK(dens == doctest::Approx(ts::levy_half_pdf(x)).epsilon(1e-3));
    }
  }
  SUBCASE("vanishing at gamma -> 0 and bad inputs") {
    CHECK(ps_aux_joint_logdensity({1e-280, 0.4}, 0.6) ==
          -std::numeric_limits<double>::infinity());
    CHECK(ps_aux_joint_logdensity({-1.0, 0.4}, 0.6) ==
          -std::numeric_limits<double>::infinity());
    CHECK(ps_aux_joint_logdensity({1.0, 1.0}, 0.6) ==
          -std::numeric_limits<double>::infinity());
  }
  SUBCASE("pair sampler's auxiliary coordinate is uniform") {
    RngStream rng(31, 0);
    std::vector<double> lam(20000);
    for (double& l : lam) l = ps_sample_pair(0.3, rng).lambda;
    const double ks = ts::ks_statistic(lam, [](double x) {
      return std::clamp(x, 0.0, 1.0);
    });
    CHECK(ks < 0.015);
  }
}

TEST_CASE("truncated normal") {
  RngStream rng(37, 0);
  SUBCASE("degenerate sd concentrates at the mean") {
    std::vector<double> draws(2000);
    for (double& d : draws) d = truncated_normal_sample(0.3, 1e-4, 0.0, 1.0, rng);
    const auto ms = ts::mean_se(draws);
    double sd = 0.0;
    for (double d : draws) sd += (d - ms.mean) * (d - ms.mean);
    sd = std::sqrt(sd / draws.size());
    CHECK(sd < 1e-3);
    CHECK(ms.mean == doctest::Approx(0.3).epsilon(1e-3));
  }
  SUBCASE("flat limit is uniform") {
    std::vector<double> draws(100000);
    for (double& d : draws) d = truncated_normal_sample(0.5, 10.0, 0.0, 1.0, rng);
    const double ks = ts::ks_statistic(draws, [](double x) {
      return std::clamp(x, 0.0, 1.0);
    });
    CHECK(ks < 0.01);
  }
  SUBCASE("logpdf integrates to 1") {
    const double mass = ts::integrate(
        [&](double x) { return std::exp(truncated_normal_logpdf(x, 0.2, 0.7, -1.0, 2.0)); },
        -1.0, 2.0, 1e-12);
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-8));
  }
  CHECK_THROWS_AS(truncated_normal_sample(0, 1, 2.0, 1.0, rng), DomainError);
  CHECK(truncated_normal_logpdf(5.0, 0, 1, 0, 1) ==
        -std::numeric_limits<double>::infinity());
}

TEST_CASE("categorical sampler") {
  RngStream rng(41, 0);
  SUBCASE("degenerate vector") {
    const double pi[3] = {1.0, 0.0, 0.0};
    for (int k = 0; k < 50; ++k) CHECK(categorical_sample({pi, 3}, rng) == 0);
  }
  SUBCASE("single category") {
    const double pi[1] = {1.0};
    CHECK(categorical_sample({pi, 1}, rng) == 0);
  }
  SUBCASE("frequencies match the setting-2 weights") {
    const double pi[3] = {0.5, 0.3, 0.2};
    const int N = 100000;
    int counts[3] = {0, 0, 0};
    for (int r = 0; r < N; ++r) counts[categorical_sample({pi, 3}, rng)]++;
    for (int j = 0; j < 3; ++j) {
      const double se = std::sqrt(pi[j] * (1 - pi[j]) / N);
      CHECK(std::fabs(static_cast<double>(counts[j]) / N - pi[j]) < 3.0 * se);
    }
  }
  SUBCASE("all-zero rejected") {
    const double pi[2] = {0.0, 0.0};
    CHECK_THROWS_AS(categorical_sample({pi, 2}, rng), DomainError);
  }
}

TEST_CASE("normal quantile / cdf round trip") {
  for (double u : {1e-10, 1e-4, 0.3, 0.5, 0.77, 1 - 1e-6}) {
    CHECK(normal_cdf(normal_quantile(u)) == doctest::Approx(u).epsilon(1e-12));
  }
}

TEST_CASE("gev cdf is monotone in y") {
  RngStream rng(43, 0);
  for (int k = 0; k < 20; ++k) {
    const GevParams p{rng.uniform(-2, 2), rng.uniform(0.2, 2.0), rng.uniform(-0.4, 0.9)};
    double prev = -0.1;
    for (double u = 0.02; u < 1.0; u += 0.02) {
      const double c = gev_cdf(gev_quantile(u, p) , p);
      CHECK(c >= prev);
      prev = c;
    }
  }
}
