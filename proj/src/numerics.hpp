#pragma once

#include <functional>

namespace maxmix {

// Solve f(x) = target for a nondecreasing f by bracket expansion around
// [lo, hi] followed by bisection; the result is accurate to rel_tol on x.
double invert_increasing(const std::function<double(double)>& f, double target,
                         double lo, double hi, double rel_tol = 1e-12);

// P(Z1 <= h, Z2 <= k) for standard bivariate normal with correlation rho
double bivariate_normal_cdf(double h, double k, double rho);

}  // namespace maxmix
