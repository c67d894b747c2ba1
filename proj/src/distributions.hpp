#pragma once

#include <span>
#include <vector>

#include "rng.hpp"

namespace maxmix {

struct GevParams {
  double mu = 0.0;
  double sigma = 1.0;
  double xi = 0.0;
};

// Positive-stable variate with its Stephenson (2009) auxiliary variable.
struct PsAuxPair {
  double gamma = 1.0;   // > 0
  double lambda = 0.5;  // in [0,1]
};

// Shape threshold below which the Gumbel formulas are used outright, and the
// wider band where (1/xi)*log1p(xi*s) is replaced by its second-order
// expansion in xi to dodge cancellation.
inline constexpr double kXiGumbelEps = 1e-8;
inline constexpr double kXiSeriesEps = 1e-4;

// log of the standardized residual x = [1 + xi*(y-mu)/sigma]^(1/xi)
// (x = exp((y-mu)/sigma) in the Gumbel limit).  Returns -infinity when y is
// below the lower support endpoint and +infinity above the upper one; both
// signal an off-support observation to the callers.
double gev_log_residual(double y, const GevParams& p);

double gev_cdf(double y, const GevParams& p);
double gev_logpdf(double y, const GevParams& p);
double gev_quantile(double u, const GevParams& p);
double gev_sample(const GevParams& p, RngStream& rng);

// inverse of gev_log_residual: maps the log of a unit-Frechet-scale residual
// onto the observation scale, y = mu + sigma*(x^xi - 1)/xi
double gev_from_log_residual(double log_residual, const GevParams& p);

void validate_gev(const GevParams& p);

// positive stable PS(alpha): Laplace transform E[exp(-tA)] = exp(-t^alpha)
double ps_sample(double alpha, RngStream& rng);
// same draw together with the uniform auxiliary that produced it, so the pair
// is an exact sample from the Stephenson joint density below
PsAuxPair ps_sample_pair(double alpha, RngStream& rng);

// log c(lambda); c(0) and c(1) are the analytic limits (c(1) = +inf)
double ps_aux_log_c(double lambda, double alpha);
double ps_aux_c(double lambda, double alpha);

// log p(gamma, lambda | alpha); -inf for gamma <= 0 or lambda outside [0,1]
double ps_aux_joint_logdensity(const PsAuxPair& pair, double alpha);

double normal_logpdf(double x, double mean, double sd);
double normal_cdf(double z);       // standard normal
double normal_quantile(double u);  // inverse of normal_cdf, u in (0,1)

double truncated_normal_sample(double mean, double sd, double lo, double hi,
                               RngStream& rng);
double truncated_normal_logpdf(double x, double mean, double sd, double lo,
                               double hi);

// index j with probability pi[j]; entries must be nonnegative with a positive
// sum (renormalized internally)
int categorical_sample(std::span<const double> pi, RngStream& rng);
// same, but from unnormalized log-weights via log-sum-exp
int categorical_sample_log(std::span<const double> logw, RngStream& rng);

double exponential_sample(RngStream& rng);           // rate 1
double normal_sample(RngStream& rng);                // standard normal
double gamma_sample(double shape, RngStream& rng);   // scale 1
double beta_sample(double a, double b, RngStream& rng);
double inverse_gamma_sample(double shape, double scale, RngStream& rng);

double log_sum_exp(double a, double b);
double log_sum_exp(std::span<const double> v);

}  // namespace maxmix
