#pragma once

#include <vector>

namespace maxmix {

struct Site {
  double x = 0.0;
  double y = 0.0;
};

double distance(const Site& a, const Site& b);

struct KnotSet {
  std::vector<Site> knots;
  std::size_t size() const { return knots.size(); }
};

// throws on empty set, non-finite coordinates or duplicate knots
KnotSet make_knot_set(std::vector<Site> knots);

// regular nx-by-ny grid covering [x0,x1] x [y0,y1], row-major in y
std::vector<Site> grid_sites(int nx, int ny, double x0, double x1, double y0,
                             double y1);

// Gaussian kernel (1/(2 pi tau^2)) exp(-||s-v||^2 / (2 tau^2))
double gaussian_kernel(const Site& s, const Site& v, double tau);

// Row-stochastic site-by-knot weight matrix omega_l(s_i).  Rows are computed
// in log space with a per-row max shift, so weights stay exact simplex rows
// even when every kernel value underflows in linear scale.
struct WeightMatrix {
  std::vector<double> w;  // n x L, row-major
  std::vector<Site> sites;
  KnotSet knots;

  std::size_t n_sites() const { return sites.size(); }
  std::size_t n_knots() const { return knots.size(); }
  double operator()(std::size_t i, std::size_t l) const {
    return w[i * knots.size() + l];
  }
};

WeightMatrix kernel_weights(const std::vector<Site>& sites, const KnotSet& knots,
                            double tau);

// single extra row of weights at s, for prediction sites
std::vector<double> kernel_weights_row(const Site& s, const KnotSet& knots,
                                       double tau);

}  // namespace maxmix
