#include "gp_prior.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <cmath>
#include <limits>

#include "errors.hpp"

namespace maxmix {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kPi = 3.14159265358979323846;

double matern_corr(double u, double nu) {
  // u = d / range
  if (u <= 0.0) return 1.0;
  if (nu == 0.5) return std::exp(-u);
  if (nu == 1.5) {
    const double a = std::sqrt(3.0) * u;
    return (1.0 + a) * std::exp(-a);
  }
  if (nu == 2.5) {
    const double a = std::sqrt(5.0) * u;
    return (1.0 + a + a * a / 3.0) * std::exp(-a);
  }
  throw DomainError("matern_cov: smoothness must be one of 1/2, 3/2, 5/2");
}

Eigen::MatrixXd matern_matrix(const std::vector<Site>& sites, const GpHyper& h) {
  if (!(h.variance > 0.0) || !(h.range > 0.0)) {
    throw DomainError("GP hyperparameters: variance and range must be > 0");
  }
  const auto n = static_cast<Eigen::Index>(sites.size());
  Eigen::MatrixXd c(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    c(i, i) = h.variance;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double d = distance(sites[i], sites[j]);
      c(i, j) = c(j, i) = h.variance * matern_corr(d / h.range, h.smoothness);
    }
  }
  return c;
}

// LLT with one jitter retry
Eigen::LLT<Eigen::MatrixXd> factor(Eigen::MatrixXd c, double variance) {
  Eigen::LLT<Eigen::MatrixXd> llt(c);
  if (llt.info() == Eigen::Success) return llt;
  c.diagonal().array() += 1e-10 * variance;
  llt.compute(c);
  if (llt.info() != Eigen::Success) {
    throw NumericError("GP covariance is not positive definite (after jitter)");
  }
  return llt;
}

}  // namespace

double matern_cov(double d, const GpHyper& h) {
  if (!(d >= 0.0)) throw DomainError("matern_cov: distance must be >= 0");
  if (!(h.variance > 0.0) || !(h.range > 0.0)) {
    throw DomainError("GP hyperparameters: variance and range must be > 0");
  }
  return h.variance * matern_corr(d / h.range, h.smoothness);
}

double gp_mean(const Site& s, const GpHyper& h) {
  if (h.beta.size() != 3) throw DomainError("GpHyper: beta must have 3 coefficients");
  return h.beta[0] + h.beta[1] * s.x + h.beta[2] * s.y;
}

double gp_logprior(std::span<const double> field, const std::vector<Site>& sites,
                   const GpHyper& h) {
  if (field.size() != sites.size()) throw DomainError("gp_logprior: size mismatch");
  const auto n = static_cast<Eigen::Index>(sites.size());
  auto llt = factor(matern_matrix(sites, h), h.variance);
  Eigen::VectorXd r(n);
  for (Eigen::Index i = 0; i < n; ++i) r(i) = field[i] - gp_mean(sites[i], h);
  const Eigen::VectorXd z = llt.matrixL().solve(r);
  double logdet = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) logdet += std::log(llt.matrixL()(i, i));
  return -0.5 * z.squaredNorm() - logdet - 0.5 * n * std::log(2.0 * kPi);
}

GpConditional gp_conditional(const std::vector<Site>& new_sites,
                             std::span<const double> observed,
                             const std::vector<Site>& sites, const GpHyper& h) {
  if (observed.size() != sites.size()) throw DomainError("gp_conditional: size mismatch");
  const auto n = static_cast<Eigen::Index>(sites.size());
  const auto m = static_cast<Eigen::Index>(new_sites.size());
  auto llt = factor(matern_matrix(sites, h), h.variance);

  Eigen::MatrixXd cross(n, m);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index k = 0; k < m; ++k) {
      cross(i, k) = matern_cov(distance(sites[i], new_sites[k]), h);
    }
  }
  Eigen::VectorXd r(n);
  for (Eigen::Index i = 0; i < n; ++i) r(i) = observed[i] - gp_mean(sites[i], h);

  const Eigen::MatrixXd w = llt.solve(cross);  // C^{-1} C_cross
  Eigen::VectorXd mean = cross.transpose() * llt.solve(r);
  for (Eigen::Index k = 0; k < m; ++k) mean(k) += gp_mean(new_sites[k], h);

  Eigen::MatrixXd prior(m, m);
  for (Eigen::Index a = 0; a < m; ++a) {
    for (Eigen::Index b = 0; b < m; ++b) {
      prior(a, b) = matern_cov(distance(new_sites[a], new_sites[b]), h);
    }
  }
  Eigen::MatrixXd cov = prior - cross.transpose() * w;

  GpConditional out;
  out.mean.assign(mean.data(), mean.data() + m);
  out.cov.resize(static_cast<std::size_t>(m) * m);
  for (Eigen::Index a = 0; a < m; ++a) {
    for (Eigen::Index b = 0; b < m; ++b) {
      out.cov[static_cast<std::size_t>(a) * m + b] = cov(a, b);
    }
  }
  return out;
}

std::vector<double> matern_chol(const std::vector<Site>& sites, const GpHyper& h) {
  const auto n = static_cast<Eigen::Index>(sites.size());
  auto llt = factor(matern_matrix(sites, h), h.variance);
  Eigen::MatrixXd lower = llt.matrixL();
  std::vector<double> out(static_cast<std::size_t>(n) * n, 0.0);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) {
      out[static_cast<std::size_t>(i) * n + j] = lower(i, j);
    }
  }
  return out;
}

double inverse_gamma_logpdf(double x, double shape, double rate) {
  if (!(x > 0.0)) return -kInf;
  return shape * std::log(rate) - std::lgamma(shape) - (shape + 1.0) * std::log(x) -
         rate / x;
}

double ConstantPriors::logprior_tau(double v) const {
  return inverse_gamma_logpdf(v, tau_shape, tau_rate);
}

double ConstantPriors::logprior_alpha(double v) const {
  return (v > 0.0 && v < 1.0) ? 0.0 : -kInf;
}

double ConstantPriors::logprior_q(double v) const {
  return (v >= 0.0 && v <= 1.0) ? 0.0 : -kInf;
}

ConstantPriors constant_priors() { return ConstantPriors{}; }

}  // namespace maxmix
