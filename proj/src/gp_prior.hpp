#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "distributions.hpp"
#include "geometry.hpp"

namespace maxmix {

enum class SurfaceMode { Constant, Gp };

// Spatially varying (or constant) GEV parameter fields over the data sites.
struct GevSurface {
  std::vector<double> mu;
  std::vector<double> log_sigma;
  std::vector<double> xi;
  SurfaceMode mode = SurfaceMode::Constant;

  std::size_t n() const { return mu.size(); }
  GevParams at(std::size_t i) const {
    return GevParams{mu[i], std::exp(log_sigma[i]), xi[i]};
  }
};

struct GpHyper {
  std::vector<double> beta{0.0, 0.0, 0.0};  // coefficients on x(s) = (1, sx, sy)
  double variance = 1.0;
  double range = 1.0;
  double smoothness = 0.5;  // 1/2, 3/2 or 5/2
};

// Matern covariance at distance d; smoothness 1/2 is exp(-d/range)
double matern_cov(double d, const GpHyper& h);

// mean x(s)^T beta at a site
double gp_mean(const Site& s, const GpHyper& h);

// multivariate normal log-density of the field under mean X*beta and Matern
// covariance; a single 1e-10*variance jitter is added if the factorization
// fails, a second failure throws NumericError
double gp_logprior(std::span<const double> field, const std::vector<Site>& sites,
                   const GpHyper& h);

struct GpConditional {
  std::vector<double> mean;
  std::vector<double> cov;  // m x m, row-major
};

// kriging: conditional normal of the field at new sites given observed values
GpConditional gp_conditional(const std::vector<Site>& new_sites,
                             std::span<const double> observed,
                             const std::vector<Site>& sites, const GpHyper& h);

// lower Cholesky factor of the Matern covariance over sites (jitter fallback)
std::vector<double> matern_chol(const std::vector<Site>& sites, const GpHyper& h);

// Priors used in constant-surface (simulation study) mode.  All fields are
// exposed through the config layer; the defaults are the simulation-mode ones.
struct ConstantPriors {
  double mu_mean = 0.0, mu_sd = 10.0;
  double logsigma_mean = 0.0, logsigma_sd = 1.0;
  double xi_mean = 0.0, xi_sd = 0.25;
  double tau_shape = 0.1, tau_rate = 0.1;  // tau ~ InvGamma(shape, rate)
  // alpha ~ Uniform(0,1), q ~ Uniform(0,1)

  double logprior_mu(double v) const { return normal_logpdf(v, mu_mean, mu_sd); }
  double logprior_logsigma(double v) const {
    return normal_logpdf(v, logsigma_mean, logsigma_sd);
  }
  double logprior_xi(double v) const { return normal_logpdf(v, xi_mean, xi_sd); }
  double logprior_tau(double v) const;
  double logprior_alpha(double v) const;
  double logprior_q(double v) const;
};

ConstantPriors constant_priors();

double inverse_gamma_logpdf(double x, double shape, double rate);

}  // namespace maxmix
