#include "distributions.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "errors.hpp"

namespace maxmix {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kPi = 3.14159265358979323846;
}  // namespace

void validate_gev(const GevParams& p) {
  if (!(p.sigma > 0.0) || !std::isfinite(p.mu) || !std::isfinite(p.sigma) ||
      !std::isfinite(p.xi)) {
    throw DomainError("invalid GEV parameters (need finite mu, xi and sigma > 0)");
  }
}

double gev_log_residual(double y, const GevParams& p) {
  const double s = (y - p.mu) / p.sigma;
  const double xi = p.xi;
  const double axi = std::fabs(xi);
  if (axi < kXiGumbelEps) return s;
  const double z = 1.0 + xi * s;
  if (z <= 0.0) return xi > 0.0 ? -kInf : kInf;
  if (axi < kXiSeriesEps) return s - 0.5 * xi * s * s + (xi * s) * (xi * s) * s / 3.0;
  return std::log1p(xi * s) / xi;
}

double gev_cdf(double y, const GevParams& p) {
  validate_gev(p);
  const double lx = gev_log_residual(y, p);
  if (lx == -kInf) return 0.0;  // below lower endpoint (xi > 0)
  if (lx == kInf) return 1.0;   // above upper endpoint (xi < 0)
  return std::exp(-std::exp(-lx));
}

double gev_logpdf(double y, const GevParams& p) {
  validate_gev(p);
  const double lx = gev_log_residual(y, p);
  if (!std::isfinite(lx)) return -kInf;
  // f = (1/sigma) * x^{-(1+xi)} * exp(-1/x)
  return -std::log(p.sigma) - (1.0 + p.xi) * lx - std::exp(-lx);
}

double gev_quantile(double u, const GevParams& p) {
  validate_gev(p);
  if (!(u > 0.0 && u < 1.0)) throw DomainError("gev_quantile: u must lie in (0,1)");
  const double lxu = -std::log(-std::log(u));  // log of the residual quantile
  if (std::fabs(p.xi) < kXiGumbelEps) return p.mu + p.sigma * lxu;
  return p.mu + p.sigma * std::expm1(p.xi * lxu) / p.xi;
}

double gev_sample(const GevParams& p, RngStream& rng) {
  return gev_quantile(rng.uniform(), p);
}

double gev_from_log_residual(double log_residual, const GevParams& p) {
  validate_gev(p);
  if (std::fabs(p.xi) < kXiGumbelEps) return p.mu + p.sigma * log_residual;
  return p.mu + p.sigma * std::expm1(p.xi * log_residual) / p.xi;
}

PsAuxPair ps_sample_pair(double alpha, RngStream& rng) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw DomainError("positive stable: alpha must lie in (0,1)");
  }
  // Chambers-Mallows-Stuck: conditionally on the auxiliary lambda ~ U(0,1),
  // gamma^{-alpha/(1-alpha)} is Exp(c(lambda)), so
  // gamma = [c(lambda)/E]^{(1-alpha)/alpha} with E ~ Exp(1).
  // Rejection keeps the draw inside the double-representable band e^{+-644};
  // for small alpha the true law carries mass beyond it (about 1e-14 already
  // at alpha = 0.05) and downstream arithmetic needs finite positives.
  for (int attempt = 0; attempt < 4096; ++attempt) {
    const double lambda = rng.uniform();
    const double e = exponential_sample(rng);
    const double lg =
        (1.0 - alpha) / alpha * (ps_aux_log_c(lambda, alpha) - std::log(e));
    if (std::fabs(lg) <= 644.0) return PsAuxPair{std::exp(lg), lambda};
  }
  throw NumericError("positive stable sampler: representable-range rejection failed");
}

double ps_sample(double alpha, RngStream& rng) {
  return ps_sample_pair(alpha, rng).gamma;
}

double ps_aux_log_c(double lambda, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw DomainError("ps_aux_c: alpha must lie in (0,1)");
  }
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw DomainError("ps_aux_c: lambda must lie in [0,1]");
  }
  if (lambda == 0.0) {
    // sin ratios tend to alpha and (1-alpha)/alpha
    return std::log(alpha) / (1.0 - alpha) + std::log1p(-alpha) - std::log(alpha);
  }
  if (lambda == 1.0) return kInf;
  const double psi = kPi * lambda;
  const double ls_a = std::log(std::sin(alpha * psi));
  const double ls_1 = std::log(std::sin(psi));
  const double ls_b = std::log(std::sin((1.0 - alpha) * psi));
  return (ls_a - ls_1) / (1.0 - alpha) + ls_b - ls_a;
}

double ps_aux_c(double lambda, double alpha) {
  return std::exp(ps_aux_log_c(lambda, alpha));
}

double ps_aux_joint_logdensity(const PsAuxPair& pair, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw DomainError("ps_aux_joint_logdensity: alpha must lie in (0,1)");
  }
  if (!(pair.gamma > 0.0) || !(pair.lambda >= 0.0 && pair.lambda <= 1.0)) {
    return -kInf;
  }
  const double logc = ps_aux_log_c(pair.lambda, alpha);
  if (logc == kInf) return -kInf;
  const double lg = std::log(pair.gamma);
  const double pen = std::exp(logc - alpha / (1.0 - alpha) * lg);
  return std::log(alpha) - std::log1p(-alpha) - lg / (1.0 - alpha) + logc - pen;
}

double normal_logpdf(double x, double mean, double sd) {
  const double z = (x - mean) / sd;
  return -0.5 * z * z - std::log(sd) - 0.5 * std::log(2.0 * kPi);
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

// Wichura's AS 241 (PPND16): double-precision normal quantile.
double normal_quantile(double u) {
  if (!(u > 0.0 && u < 1.0)) throw DomainError("normal_quantile: u must lie in (0,1)");
  const double q = u - 0.5;
  double r;
  if (std::fabs(q) <= 0.425) {
    r = 0.180625 - q * q;
    return q *
           (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r +
                 6.7265770927008700853e4) * r + 4.5921953931549871457e4) * r +
               1.3731693765509461125e4) * r + 1.9715909503065514427e3) * r +
             1.3314166789178437745e2) * r + 3.3871328727963666080e0) /
           (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r +
                 3.9307895800092710610e4) * r + 2.1213794301586595867e4) * r +
               5.3941960214247511077e3) * r + 6.8718700749205790830e2) * r +
             4.2313330701600911252e1) * r + 1.0);
  }
  r = q < 0.0 ? u : 1.0 - u;
  r = std::sqrt(-std::log(r));
  double val;
  if (r <= 5.0) {
    r -= 1.6;
    val = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
                2.41780725177450611770e-1) * r + 1.27045825245236838258e0) * r +
              3.64784832476320460504e0) * r + 5.76949722146069140550e0) * r +
            4.63033784615654529590e0) * r + 1.42343711074968357734e0) /
          (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
                1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r +
              6.89767334985100004550e-1) * r + 1.67638483018380384940e0) * r +
            2.05319162663775882187e0) * r + 1.0);
  } else {
    r -= 5.0;
    val = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
                1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r +
              2.96560571828504891230e-1) * r + 1.78482653991729133580e0) * r +
            5.46378491116411436990e0) * r + 6.65790464350110377720e0) /
          (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
                1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r +
              1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r +
            5.99832206555887937690e-1) * r + 1.0);
  }
  return q < 0.0 ? -val : val;
}

namespace {

// P(lo <= Z <= hi) for standard normal bounds, evaluated one-sided when both
// bounds share a tail so the difference does not cancel
double normal_interval_mass(double a, double b) {
  if (a >= 0.0) {
    return 0.5 * (std::erfc(a / std::sqrt(2.0)) - std::erfc(b / std::sqrt(2.0)));
  }
  if (b <= 0.0) {
    return 0.5 * (std::erfc(-b / std::sqrt(2.0)) - std::erfc(-a / std::sqrt(2.0)));
  }
  return normal_cdf(b) - normal_cdf(a);
}

}  // namespace

double truncated_normal_sample(double mean, double sd, double lo, double hi,
                               RngStream& rng) {
  if (!(lo < hi)) throw DomainError("truncated normal: need lo < hi");
  if (!(sd > 0.0)) throw DomainError("truncated normal: need sd > 0");
  const double a = (lo - mean) / sd;
  const double b = (hi - mean) / sd;
  const double pa = normal_cdf(a);
  const double mass = normal_interval_mass(a, b);
  if (!(mass > 1e-300)) {
    throw NumericError("truncated normal: interval mass underflows");
  }
  const double u = pa + rng.uniform() * mass;
  double x = mean + sd * normal_quantile(std::clamp(u, 1e-300, 1.0 - 1e-16));
  return std::clamp(x, lo, hi);
}

double truncated_normal_logpdf(double x, double mean, double sd, double lo,
                               double hi) {
  if (!(lo < hi)) throw DomainError("truncated normal: need lo < hi");
  if (!(sd > 0.0)) throw DomainError("truncated normal: need sd > 0");
  if (x < lo || x > hi) return -kInf;
  const double a = (lo - mean) / sd;
  const double b = (hi - mean) / sd;
  const double mass = normal_interval_mass(a, b);
  if (!(mass > 1e-300)) throw NumericError("truncated normal: interval mass underflows");
  return normal_logpdf(x, mean, sd) - std::log(mass);
}

int categorical_sample(std::span<const double> pi, RngStream& rng) {
  double total = 0.0;
  for (double p : pi) {
    if (!(p >= 0.0)) throw DomainError("categorical: negative probability");
    total += p;
  }
  if (!(total > 0.0)) throw DomainError("categorical: all-zero probability vector");
  double u = rng.uniform() * total;
  for (std::size_t j = 0; j + 1 < pi.size(); ++j) {
    u -= pi[j];
    if (u <= 0.0) return static_cast<int>(j);
  }
  return static_cast<int>(pi.size()) - 1;
}

int categorical_sample_log(std::span<const double> logw, RngStream& rng) {
  const double m = log_sum_exp(logw);
  if (!std::isfinite(m)) throw DomainError("categorical: no finite log-weight");
  double u = rng.uniform();
  double acc = 0.0;
  for (std::size_t j = 0; j + 1 < logw.size(); ++j) {
    acc += std::exp(logw[j] - m);
    if (u <= acc) return static_cast<int>(j);
  }
  return static_cast<int>(logw.size()) - 1;
}

double exponential_sample(RngStream& rng) { return -std::log(rng.uniform()); }

double normal_sample(RngStream& rng) {
  const double u1 = rng.uniform();
  const double u2 = rng.uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
}

// Marsaglia-Tsang, with the u^{1/shape} boost below shape 1
double gamma_sample(double shape, RngStream& rng) {
  if (!(shape > 0.0)) throw DomainError("gamma_sample: shape must be > 0");
  if (shape < 1.0) {
    const double u = rng.uniform();
    return gamma_sample(shape + 1.0, rng) * std::pow(u, 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = normal_sample(rng);
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = rng.uniform();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

double beta_sample(double a, double b, RngStream& rng) {
  const double x = gamma_sample(a, rng);
  const double y = gamma_sample(b, rng);
  return x / (x + y);
}

double inverse_gamma_sample(double shape, double scale, RngStream& rng) {
  if (!(scale > 0.0)) throw DomainError("inverse_gamma_sample: scale must be > 0");
  return scale / gamma_sample(shape, rng);
}

double log_sum_exp(double a, double b) {
  if (a == -kInf) return b;
  if (b == -kInf) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

double log_sum_exp(std::span<const double> v) {
  double m = -kInf;
  for (double x : v) m = std::max(m, x);
  if (m == -kInf || !std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

}  // namespace maxmix
