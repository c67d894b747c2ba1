#include <doctest.h>

#include <cmath>

#include "geometry.hpp"
#include "errors.hpp"
#include "rng.hpp"

using namespace maxmix;

TEST_CASE("gaussian kernel closed forms") {
  const Site o{0.0, 0.0};
  CHECK(gaussian_kernel(o, o, 1.0) == doctest::Approx(1.0 / (2.0 * M_PI)));
  // one-bandwidth distance
  CHECK(gaussian_kernel(o, Site{2.0, 0.0}, 2.0) ==
        doctest::Approx(std::exp(-0.5) / (2.0 * M_PI * 4.0)));
  // 3-4-5 triangle, tau = 5
  CHECK(gaussian_kernel(o, Site{3.0, 4.0}, 5.0) ==
        doctest::Approx(std::exp(-0.5) / (50.0 * M_PI)).epsilon(1e-12));
  CHECK(gaussian_kernel(o, Site{3.0, 4.0}, 5.0) == doctest::Approx(0.003861).epsilon(1e-4));
  CHECK_THROWS_AS(gaussian_kernel(o, o, 0.0), DomainError);
  CHECK_THROWS_AS(gaussian_kernel(o, o, -1.0), DomainError);
}

TEST_CASE("kernel weights: simplex rows") {
  SUBCASE("single knot") {
    const auto wm = kernel_weights({{0, 0}, {5, 5}}, make_knot_set({{1, 1}}), 1.0);
    CHECK(wm(0, 0) == 1.0);
    CHECK(wm(1, 0) == 1.0);
  }
  SUBCASE("two equidistant knots") {
    const auto wm =
        kernel_weights({{0, 0}}, make_knot_set({{1, 0}, {-1, 0}}), 0.7);
    CHECK(wm(0, 0) == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(wm(0, 1) == doctest::Approx(0.5).epsilon(1e-14));
  }
  SUBCASE("7x7 grid, tau 1") {
    const auto sites = grid_sites(7, 7, 1, 7, 1, 7);
    const auto wm = kernel_weights(sites, make_knot_set(sites), 1.0);
    for (std::size_t i = 0; i < wm.n_sites(); ++i) {
      double row = 0.0;
      for (std::size_t l = 0; l < wm.n_knots(); ++l) {
        CHECK(wm(i, l) >= 0.0);
        row += wm(i, l);
      }
      CHECK(row == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("kernel weights survive underflow-scale distances") {
  // far site: every kernel underflows in linear scale but the log-space path
  // still yields a valid simplex row
  const auto wm = kernel_weights({{1000.0, 0.0}},
                                 make_knot_set({{0, 0}, {1, 0}}), 1.0);
  CHECK(wm(0, 0) + wm(0, 1) == doctest::Approx(1.0));
  CHECK(wm(0, 1) > wm(0, 0));  // nearer knot dominates

  // genuinely degenerate: the squared distance overflows
  CHECK_THROWS_AS(kernel_weights({{1e200, 0.0}}, make_knot_set({{0, 0}}), 1.0),
                  NumericError);
}

TEST_CASE("knot permutation permutes columns") {
  const std::vector<Site> sites = {{0.3, 1.2}, {4.0, 2.0}, {2.2, 5.1}};
  const std::vector<Site> knots = {{1, 1}, {2, 4}, {5, 3}};
  const auto w1 = kernel_weights(sites, make_knot_set(knots), 1.3);
  const auto w2 = kernel_weights(
      sites, make_knot_set({knots[2], knots[0], knots[1]}), 1.3);
  for (std::size_t i = 0; i < sites.size(); ++i) {
    CHECK(w1(i, 0) == doctest::Approx(w2(i, 1)).epsilon(1e-15));
    CHECK(w1(i, 1) == doctest::Approx(w2(i, 2)).epsilon(1e-15));
    CHECK(w1(i, 2) == doctest::Approx(w2(i, 0)).epsilon(1e-15));
  }
}

TEST_CASE("weights invariant to rigid translation") {
  RngStream rng(7, 0);
  std::vector<Site> sites, knots;
  for (int i = 0; i < 5; ++i) sites.push_back({rng.uniform(0, 10), rng.uniform(0, 10)});
  for (int l = 0; l < 4; ++l) knots.push_back({rng.uniform(0, 10), rng.uniform(0, 10)});
  const auto w1 = kernel_weights(sites, make_knot_set(knots), 2.0);
  const double dx = -3.7, dy = 11.9;
  for (auto& s : sites) {
    s.x += dx;
    s.y += dy;
  }
  for (auto& v : knots) {
    v.x += dx;
    v.y += dy;
  }
  const auto w2 = kernel_weights(sites, make_knot_set(knots), 2.0);
  for (std::size_t k = 0; k < w1.w.size(); ++k) {
    CHECK(w1.w[k] == doctest::Approx(w2.w[k]).epsilon(1e-12));
  }
}

TEST_CASE("knot set validation") {
  CHECK_THROWS_AS(make_knot_set({}), DomainError);
  CHECK_THROWS_AS(make_knot_set({{1, 1}, {1, 1}}), DomainError);
  CHECK_THROWS_AS(make_knot_set({{1, std::nan("")}}), DomainError);
}
