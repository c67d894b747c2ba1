#pragma once

// Shared oracle helpers for the test suites: quadrature, Kolmogorov-Smirnov
// machinery and special functions kept independent of the library's own
// implementation paths.

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

namespace testsupport {

// adaptive Simpson on [a,b]
inline double simpson_rec(const std::function<double(double)>& f, double a,
                          double b, double fa, double fm, double fb, double whole,
                          double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m);
  const double rm = 0.5 * (m + b);
  const double flm = f(lm);
  const double frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  if (depth <= 0 || std::fabs(left + right - whole) < 15.0 * tol) {
    return left + right + (left + right - whole) / 15.0;
  }
  return simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

inline double integrate(const std::function<double(double)>& f, double a, double b,
                        double tol = 1e-10) {
  const double fa = f(a);
  const double fb = f(b);
  const double fm = f(0.5 * (a + b));
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return simpson_rec(f, a, b, fa, fm, fb, whole, tol, 48);
}

// integral over (0, inf) via x = exp(s); heavy power-law tails become
// exponentially decaying and the endpoint singularity of the rational
// substitution is avoided
inline double integrate_positive_axis(const std::function<double(double)>& f,
                                      double tol = 1e-10, double s_lo = -40.0,
                                      double s_hi = 300.0) {
  double total = 0.0;
  double a = s_lo;
  const double panel = 10.0;  // keep each adaptive call on a modest range
  while (a < s_hi) {
    const double b = std::min(a + panel, s_hi);
    total += integrate(
        [&](double s) {
          const double x = std::exp(s);
          return f(x) * x;
        },
        a, b, tol);
    a = b;
  }
  return total;
}

// one-sample KS statistic against a CDF
inline double ks_statistic(std::vector<double> sample,
                           const std::function<double(double)>& cdf) {
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double u = cdf(sample[i]);
    d = std::max(d, std::fabs(u - (i + 1) / n));
    d = std::max(d, std::fabs(u - i / n));
  }
  return d;
}

// asymptotic KS p-value
inline double ks_pvalue(double d, std::size_t n) {
  const double lambda = (std::sqrt(static_cast<double>(n)) + 0.12 +
                         0.11 / std::sqrt(static_cast<double>(n))) *
                        d;
  double p = 0.0;
  double sign = 1.0;
  for (int k = 1; k <= 100; ++k) {
    p += sign * 2.0 * std::exp(-2.0 * k * k * lambda * lambda);
    sign = -sign;
  }
  return std::clamp(p, 0.0, 1.0);
}

// two-sample KS p-value
inline double ks2_pvalue(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    if (a[i] <= b[j]) {
      ++i;
    } else {
      ++j;
    }
    d = std::max(d, std::fabs(static_cast<double>(i) / a.size() -
                              static_cast<double>(j) / b.size()));
  }
  const double ne = static_cast<double>(a.size()) * b.size() / (a.size() + b.size());
  const double lambda = (std::sqrt(ne) + 0.12 + 0.11 / std::sqrt(ne)) * d;
  double p = 0.0;
  double sign = 1.0;
  for (int k = 1; k <= 100; ++k) {
    p += sign * 2.0 * std::exp(-2.0 * k * k * lambda * lambda);
    sign = -sign;
  }
  return std::clamp(p, 0.0, 1.0);
}

// regularized lower incomplete gamma P(a, x)
inline double gamma_p(double a, double x) {
  if (x < 0.0 || a <= 0.0) throw std::invalid_argument("gamma_p");
  if (x == 0.0) return 0.0;
  if (x < a + 1.0) {  // series
    double sum = 1.0 / a;
    double term = sum;
    double ap = a;
    for (int k = 0; k < 500; ++k) {
      ap += 1.0;
      term *= x / ap;
      sum += term;
      if (std::fabs(term) < std::fabs(sum) * 1e-15) break;
    }
    return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
  }
  // continued fraction for Q(a, x)
  double b = x + 1.0 - a;
  double c = 1e300;
  double d = 1.0 / b;
  double h = d;
  for (int k = 1; k < 500; ++k) {
    const double an = -k * (k - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < 1e-300) d = 1e-300;
    c = b + an / c;
    if (std::fabs(c) < 1e-300) c = 1e-300;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < 1e-15) break;
  }
  const double q = std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
  return 1.0 - q;
}

// CDF of tau ~ InvGamma(shape, rate): P(tau < x) = Q(shape, rate/x)
inline double inverse_gamma_cdf(double x, double shape, double rate) {
  if (x <= 0.0) return 0.0;
  return 1.0 - gamma_p(shape, rate / x);
}

// Levy(1/2) closed forms (the alpha = 1/2 positive stable law)
inline double levy_half_pdf(double x) {
  if (x <= 0.0) return 0.0;
  return 0.5 / std::sqrt(3.14159265358979323846) * std::pow(x, -1.5) *
         std::exp(-0.25 / x);
}
inline double levy_half_cdf(double x) {
  if (x <= 0.0) return 0.0;
  return std::erfc(0.5 / std::sqrt(x));
}

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};

inline MeanSe mean_se(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double s2 = 0.0;
  for (double x : v) s2 += (x - m) * (x - m);
  s2 /= static_cast<double>(v.size() - 1);
  return {m, std::sqrt(s2 / static_cast<double>(v.size()))};
}

// batch-means standard error for autocorrelated chains
inline MeanSe batch_mean_se(const std::vector<double>& v, int batches = 50) {
  const std::size_t bs = v.size() / batches;
  std::vector<double> means;
  means.reserve(batches);
  for (int b = 0; b < batches; ++b) {
    double m = 0.0;
    for (std::size_t i = 0; i < bs; ++i) m += v[b * bs + i];
    means.push_back(m / static_cast<double>(bs));
  }
  const MeanSe inner = mean_se(means);
  return {inner.mean, inner.se};
}

}  // namespace testsupport
