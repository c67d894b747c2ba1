#include "geometry.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "errors.hpp"

namespace maxmix {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

double distance(const Site& a, const Site& b) {
  return std::hypot(a.x - b.x, a.y - b.y);
}

KnotSet make_knot_set(std::vector<Site> knots) {
  if (knots.empty()) throw DomainError("knot set must contain at least one knot");
  for (const Site& v : knots) {
    if (!std::isfinite(v.x) || !std::isfinite(v.y)) {
      throw DomainError("knot coordinates must be finite");
    }
  }
  for (std::size_t a = 0; a < knots.size(); ++a) {
    for (std::size_t b = a + 1; b < knots.size(); ++b) {
      if (knots[a].x == knots[b].x && knots[a].y == knots[b].y) {
        throw DomainError("duplicate knot at index " + std::to_string(b));
      }
    }
  }
  return KnotSet{std::move(knots)};
}

std::vector<Site> grid_sites(int nx, int ny, double x0, double x1, double y0,
                             double y1) {
  if (nx < 1 || ny < 1) throw DomainError("grid dimensions must be positive");
  std::vector<Site> sites;
  sites.reserve(static_cast<std::size_t>(nx) * ny);
  for (int iy = 0; iy < ny; ++iy) {
    for (int ix = 0; ix < nx; ++ix) {
      const double gx = nx == 1 ? 0.5 * (x0 + x1) : x0 + (x1 - x0) * ix / (nx - 1);
      const double gy = ny == 1 ? 0.5 * (y0 + y1) : y0 + (y1 - y0) * iy / (ny - 1);
      sites.push_back(Site{gx, gy});
    }
  }
  return sites;
}

double gaussian_kernel(const Site& s, const Site& v, double tau) {
  if (!(tau > 0.0)) throw DomainError("kernel bandwidth tau must be > 0");
  const double d = distance(s, v);
  return std::exp(-0.5 * (d / tau) * (d / tau)) / (2.0 * kPi * tau * tau);
}

namespace {

// one log-space normalized row; scratch holds the log kernels
void fill_weight_row(const Site& s, const KnotSet& knots, double tau,
                     std::vector<double>& scratch, double* row) {
  const std::size_t L = knots.size();
  double lmax = -std::numeric_limits<double>::infinity();
  for (std::size_t l = 0; l < L; ++l) {
    const double d = distance(s, knots.knots[l]);
    const double lk = -0.5 * (d / tau) * (d / tau);
    scratch[l] = lk;
    lmax = std::max(lmax, lk);
  }
  if (!std::isfinite(lmax)) {
    throw NumericError("degenerate kernel row: site is infinitely far from every knot");
  }
  double total = 0.0;
  for (std::size_t l = 0; l < L; ++l) {
    row[l] = std::exp(scratch[l] - lmax);
    total += row[l];
  }
  for (std::size_t l = 0; l < L; ++l) row[l] /= total;
}

}  // namespace

WeightMatrix kernel_weights(const std::vector<Site>& sites, const KnotSet& knots,
                            double tau) {
  if (sites.empty()) throw DomainError("kernel_weights: empty site list");
  if (knots.size() == 0) throw DomainError("kernel_weights: empty knot set");
  if (!(tau > 0.0)) throw DomainError("kernel bandwidth tau must be > 0");
  WeightMatrix wm;
  wm.sites = sites;
  wm.knots = knots;
  wm.w.resize(sites.size() * knots.size());
  std::vector<double> scratch(knots.size());
  for (std::size_t i = 0; i < sites.size(); ++i) {
    fill_weight_row(sites[i], knots, tau, scratch, &wm.w[i * knots.size()]);
  }
  return wm;
}

std::vector<double> kernel_weights_row(const Site& s, const KnotSet& knots,
                                       double tau) {
  if (knots.size() == 0) throw DomainError("kernel_weights_row: empty knot set");
  if (!(tau > 0.0)) throw DomainError("kernel bandwidth tau must be > 0");
  std::vector<double> row(knots.size());
  std::vector<double> scratch(knots.size());
  fill_weight_row(s, knots, tau, scratch, row.data());
  return row;
}

}  // namespace maxmix
