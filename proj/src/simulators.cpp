#include "simulators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "errors.hpp"
#include "gp_prior.hpp"
#include "numerics.hpp"
#include "rng.hpp"

namespace maxmix {

namespace {

// stream-id salts keep every consumer of the run seed on its own substream
constexpr std::uint64_t kStreamReplicate = 1ULL << 40;
constexpr std::uint64_t kStreamAtoms = 2ULL << 40;
constexpr std::uint64_t kStreamTruth = 6ULL << 40;

void check_common(const SimConfig& cfg) {
  if (cfg.T < 1) throw ConfigError("simulation: T must be >= 1");
  if (cfg.sites.empty()) throw ConfigError("simulation: no sites");
  if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0)) {
    throw ConfigError("simulation: alpha must lie in (0,1)");
  }
  if (!(cfg.tau > 0.0)) throw ConfigError("simulation: tau must be > 0");
}

KnotSet resolved_knots(const SimConfig& cfg) {
  return cfg.knots.size() > 0 ? cfg.knots : make_knot_set(cfg.sites);
}

Dataset empty_dataset(const SimConfig& cfg) {
  Dataset ds;
  ds.sites = cfg.sites;
  ds.T = cfg.T;
  ds.n = static_cast<int>(cfg.sites.size());
  ds.y.assign(static_cast<std::size_t>(ds.T) * ds.n, 0.0);
  ds.provenance = cfg;
  return ds;
}

// w_l(s_i)^(1/alpha), n x L
std::vector<double> weights_pow(const WeightMatrix& wm, double alpha) {
  std::vector<double> wa(wm.w.size());
  for (std::size_t k = 0; k < wm.w.size(); ++k) {
    wa[k] = wm.w[k] > 0.0 ? std::pow(wm.w[k], 1.0 / alpha) : 0.0;
  }
  return wa;
}

// one HEVP residual replicate: X_i = U_i * theta_i with A ~ PS(alpha)
void hevp_residual_row(const SimConfig& cfg, const std::vector<double>& wa,
                       std::size_t L, RngStream& rng, std::vector<double>& x) {
  const std::size_t n = cfg.sites.size();
  std::vector<double> a(L);
  for (std::size_t l = 0; l < L; ++l) a[l] = ps_sample(cfg.alpha, rng);
  const GevParams nugget{1.0, cfg.alpha, cfg.alpha};
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t l = 0; l < L; ++l) s += a[l] * wa[i * L + l];
    const double theta = std::pow(s, cfg.alpha);
    x[i] = gev_sample(nugget, rng) * theta;
  }
}

// standard Gaussian field with exp(-d/range) correlation, via dense Cholesky
std::vector<double> exp_corr_chol(const std::vector<Site>& sites, double range) {
  GpHyper h;
  h.beta = {0.0, 0.0, 0.0};
  h.variance = 1.0;
  h.range = range;
  h.smoothness = 0.5;
  return matern_chol(sites, h);
}

void gaussian_row(const std::vector<double>& chol, std::size_t n, RngStream& rng,
                  std::vector<double>& z) {
  std::vector<double> eps(n);
  for (std::size_t i = 0; i < n; ++i) eps[i] = normal_sample(rng);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j <= i; ++j) s += chol[i * n + j] * eps[j];
    z[i] = s;
  }
}

}  // namespace

std::vector<double> Dataset::site_column(int i) const {
  std::vector<double> col(T);
  for (int t = 0; t < T; ++t) col[t] = at(t, i);
  return col;
}

const char* sim_setting_name(SimSetting s) {
  switch (s) {
    case SimSetting::MS: return "MS";
    case SimSetting::SB: return "SB";
    case SimSetting::GP: return "GP";
    case SimSetting::ST: return "ST";
    case SimSetting::InvMS: return "InvMS";
    case SimSetting::MAX: return "MAX";
  }
  return "?";
}

SimSetting sim_setting_from_name(const std::string& name) {
  if (name == "MS") return SimSetting::MS;
  if (name == "SB") return SimSetting::SB;
  if (name == "GP") return SimSetting::GP;
  if (name == "ST") return SimSetting::ST;
  if (name == "InvMS") return SimSetting::InvMS;
  if (name == "MAX") return SimSetting::MAX;
  throw ConfigError("unknown simulation setting '" + name + "'");
}

Dataset simulate(const SimConfig& cfg) {
  switch (cfg.setting) {
    case SimSetting::MS: return sim_hevp(cfg);
    case SimSetting::SB: return sim_sb(cfg);
    case SimSetting::GP: return sim_gp(cfg);
    case SimSetting::ST: return sim_skew_t(cfg);
    case SimSetting::InvMS: return sim_inverted_ms(cfg);
    case SimSetting::MAX: return sim_max_mixture(cfg);
  }
  throw ConfigError("simulate: bad setting");
}

Dataset sim_hevp(const SimConfig& cfg) {
  check_common(cfg);
  Dataset ds = empty_dataset(cfg);
  const KnotSet knots = resolved_knots(cfg);
  const WeightMatrix wm = kernel_weights(cfg.sites, knots, cfg.tau);
  const auto wa = weights_pow(wm, cfg.alpha);
  const std::size_t n = cfg.sites.size();
  std::vector<double> x(n);
  for (int t = 0; t < cfg.T; ++t) {
    RngStream rng(cfg.seed, kStreamReplicate + t);
    hevp_residual_row(cfg, wa, knots.size(), rng, x);
    for (std::size_t i = 0; i < n; ++i) {
      ds.y[t * n + i] = gev_from_log_residual(std::log(x[i]), cfg.gev);
    }
  }
  return ds;
}

Dataset sim_sb(const SimConfig& cfg) {
  check_common(cfg);
  if (cfg.J < 1) throw ConfigError("simulation: SB needs J >= 1");
  if (cfg.pi.size() != static_cast<std::size_t>(cfg.J)) {
    throw ConfigError("simulation: pi must have J entries");
  }
  Dataset ds = empty_dataset(cfg);
  const KnotSet knots = resolved_knots(cfg);
  const WeightMatrix wm = kernel_weights(cfg.sites, knots, cfg.tau);
  const auto wa = weights_pow(wm, cfg.alpha);
  const std::size_t n = cfg.sites.size();
  const std::size_t L = knots.size();

  RngStream atom_rng(cfg.seed, kStreamAtoms);
  std::vector<double> gamma(static_cast<std::size_t>(cfg.J) * L);
  for (double& g : gamma) g = ps_sample(cfg.alpha, atom_rng);
  SbAtoms atoms = make_sb_atoms(cfg.J, L, gamma, cfg.pi);

  // theta_j(s_i) for each atom
  std::vector<double> theta(static_cast<std::size_t>(cfg.J) * n);
  for (int j = 0; j < cfg.J; ++j) {
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t l = 0; l < L; ++l) s += atoms.at(j, l) * wa[i * L + l];
      theta[j * n + i] = std::pow(s, cfg.alpha);
    }
  }

  const GevParams nugget{1.0, cfg.alpha, cfg.alpha};
  for (int t = 0; t < cfg.T; ++t) {
    RngStream rng(cfg.seed, kStreamReplicate + t);
    const int j = categorical_sample(atoms.pi, rng);
    for (std::size_t i = 0; i < n; ++i) {
      const double x = gev_sample(nugget, rng) * theta[j * n + i];
      ds.y[t * n + i] = gev_from_log_residual(std::log(x), cfg.gev);
    }
  }
  ds.sb_atoms = std::move(atoms);
  return ds;
}

Dataset sim_gp(const SimConfig& cfg) {
  if (cfg.T < 1) throw ConfigError("simulation: T must be >= 1");
  if (cfg.sites.empty()) throw ConfigError("simulation: no sites");
  if (!(cfg.gp_var > 0.0) || !(cfg.gp_range > 0.0)) {
    throw ConfigError("simulation: GP variance and range must be > 0");
  }
  Dataset ds = empty_dataset(cfg);
  const std::size_t n = cfg.sites.size();
  const auto chol = exp_corr_chol(cfg.sites, cfg.gp_range);
  const double sd = std::sqrt(cfg.gp_var);
  std::vector<double> z(n);
  for (int t = 0; t < cfg.T; ++t) {
    RngStream rng(cfg.seed, kStreamReplicate + t);
    gaussian_row(chol, n, rng, z);
    for (std::size_t i = 0; i < n; ++i) ds.y[t * n + i] = cfg.gp_mean + sd * z[i];
  }
  return ds;
}

Dataset sim_skew_t(const SimConfig& cfg) {
  if (cfg.T < 1) throw ConfigError("simulation: T must be >= 1");
  if (cfg.sites.empty()) throw ConfigError("simulation: no sites");
  Dataset ds = empty_dataset(cfg);
  const std::size_t n = cfg.sites.size();
  const auto chol = exp_corr_chol(cfg.sites, cfg.gp_range);
  std::vector<double> e(n);
  for (int t = 0; t < cfg.T; ++t) {
    RngStream rng(cfg.seed, kStreamReplicate + t);
    const double sig2 = inverse_gamma_sample(cfg.sigma2_shape, cfg.sigma2_scale, rng);
    const double sig = std::sqrt(sig2);
    const double z = std::fabs(normal_sample(rng));
    gaussian_row(chol, n, rng, e);
    for (std::size_t i = 0; i < n; ++i) {
      ds.y[t * n + i] = cfg.skew_mu + cfg.skew_lambda * sig * z + sig * e[i];
    }
  }
  return ds;
}

Dataset sim_inverted_ms(const SimConfig& cfg) {
  check_common(cfg);
  Dataset ds = empty_dataset(cfg);
  const KnotSet knots = resolved_knots(cfg);
  const WeightMatrix wm = kernel_weights(cfg.sites, knots, cfg.tau);
  const auto wa = weights_pow(wm, cfg.alpha);
  const std::size_t n = cfg.sites.size();
  std::vector<double> x(n);
  for (int t = 0; t < cfg.T; ++t) {
    RngStream rng(cfg.seed, kStreamReplicate + t);
    hevp_residual_row(cfg, wa, knots.size(), rng, x);
    for (std::size_t i = 0; i < n; ++i) {
      // Y = mu + sigma/xi (X^{-xi} - 1): the inverted transform flips the sign
      // of the log residual
      ds.y[t * n + i] = gev_from_log_residual(-std::log(x[i]), cfg.gev);
    }
  }
  return ds;
}

Dataset sim_max_mixture(const SimConfig& cfg) {
  check_common(cfg);
  if (!(cfg.q >= 0.0 && cfg.q <= 1.0)) throw ConfigError("simulation: q must be in [0,1]");
  Dataset ds = empty_dataset(cfg);
  const KnotSet knots = resolved_knots(cfg);
  const WeightMatrix wm = kernel_weights(cfg.sites, knots, cfg.tau);
  const auto wa = weights_pow(wm, cfg.alpha);
  const auto chol = exp_corr_chol(cfg.sites, cfg.gp_range);
  const std::size_t n = cfg.sites.size();
  const double q = cfg.q;
  std::vector<double> x1(n), g(n);
  for (int t = 0; t < cfg.T; ++t) {
    RngStream rng(cfg.seed, kStreamReplicate + t);
    hevp_residual_row(cfg, wa, knots.size(), rng, x1);
    gaussian_row(chol, n, rng, g);
    for (std::size_t i = 0; i < n; ++i) {
      double logx;
      if (q >= 1.0 - kQBoundaryEps) {
        logx = std::log(x1[i]);
      } else if (q <= kQBoundaryEps) {
        logx = std::log(-1.0 / std::log(normal_cdf(g[i])));
      } else {
        // Gaussian component mapped onto unit Frechet margins before mixing
        const double x2 = -1.0 / std::log(normal_cdf(g[i]));
        const double a = std::log(q) + q * std::log(x1[i]);
        const double b = std::log1p(-q) + (1.0 - q) * std::log(x2);
        logx = std::max(a, b);
      }
      ds.y[t * n + i] = gev_from_log_residual(logx, cfg.gev);
    }
  }
  return ds;
}

// ---------------------------------------------------------------------------
// ground truth

SimTruth::SimTruth(const SimConfig& cfg, const std::optional<SbAtoms>& atoms)
    : cfg_(cfg), atoms_(atoms) {
  if (cfg_.setting == SimSetting::MS || cfg_.setting == SimSetting::SB ||
      cfg_.setting == SimSetting::InvMS || cfg_.setting == SimSetting::MAX) {
    wm_ = kernel_weights(cfg_.sites, resolved_knots(cfg_), cfg_.tau);
  }
  if (cfg_.setting == SimSetting::SB && !atoms_) {
    throw DataError("SB ground truth requires the simulated atoms");
  }
}

namespace {

// residual-scale marginal quantile of the MAX setting:
// F(x) = exp(-(x/q)^{-1/q}) * exp(-(x/(1-q))^{-1/(1-q)})
double max_setting_residual_log_quantile(double q, double level) {
  auto logf = [q](double logc) {
    const double l1 = (logc - std::log(q)) / q;
    const double l2 = (logc - std::log1p(-q)) / (1.0 - q);
    return -std::exp(-l1) - std::exp(-l2);
  };
  const double target = std::log(level);
  const double lc = invert_increasing(logf, target, -5.0, 5.0, 1e-12);
  return lc;
}

}  // namespace

void SimTruth::ensure_st_marginal() const {
  if (!st_sorted_.empty()) return;
  constexpr int kDraws = 1000000;
  RngStream rng(cfg_.seed, kStreamTruth);
  st_sorted_.resize(kDraws);
  for (int r = 0; r < kDraws; ++r) {
    const double sig =
        std::sqrt(inverse_gamma_sample(cfg_.sigma2_shape, cfg_.sigma2_scale, rng));
    const double z = std::fabs(normal_sample(rng));
    const double e = normal_sample(rng);
    st_sorted_[r] = cfg_.skew_mu + cfg_.skew_lambda * sig * z + sig * e;
  }
  std::sort(st_sorted_.begin(), st_sorted_.end());
}

const std::vector<float>& SimTruth::st_pair_draws(double dist) const {
  for (const auto& entry : st_pair_cache_) {
    if (std::fabs(entry.first - dist) < 1e-12) return entry.second;
  }
  ensure_st_marginal();
  constexpr int kPairs = 400000;
  const double rho = std::exp(-dist / cfg_.gp_range);
  const double c = std::sqrt(1.0 - rho * rho);
  RngStream rng(cfg_.seed, kStreamTruth + 1 +
                              static_cast<std::uint64_t>(dist * 4096.0));
  std::vector<float> mins(kPairs);
  const double nm = static_cast<double>(st_sorted_.size());
  for (int r = 0; r < kPairs; ++r) {
    const double sig =
        std::sqrt(inverse_gamma_sample(cfg_.sigma2_shape, cfg_.sigma2_scale, rng));
    const double z = std::fabs(normal_sample(rng));
    const double e1 = normal_sample(rng);
    const double e2 = rho * e1 + c * normal_sample(rng);
    const double y1 = cfg_.skew_mu + cfg_.skew_lambda * sig * z + sig * e1;
    const double y2 = cfg_.skew_mu + cfg_.skew_lambda * sig * z + sig * e2;
    const double ym = std::min(y1, y2);
    // PIT through the marginal Monte Carlo table
    const auto pos = std::lower_bound(st_sorted_.begin(), st_sorted_.end(), ym) -
                     st_sorted_.begin();
    mins[r] = static_cast<float>(static_cast<double>(pos) / (nm + 1.0));
  }
  std::sort(mins.begin(), mins.end());
  st_pair_cache_.emplace_back(dist, std::move(mins));
  return st_pair_cache_.back().second;
}

double SimTruth::quantile(int site, double level) const {
  if (!(level > 0.0 && level < 1.0)) throw DomainError("quantile level must be in (0,1)");
  switch (cfg_.setting) {
    case SimSetting::MS:
      return gev_quantile(level, cfg_.gev);
    case SimSetting::SB: {
      auto logf = [&](double logc) {
        std::span<const double> row(&wm_.w[site * wm_.n_knots()], wm_.n_knots());
        return log_f_sb_marginal_row(logc, row, *atoms_, cfg_.alpha);
      };
      const double lc =
          invert_increasing(logf, std::log(level), -5.0, 5.0, 1e-12);
      return gev_from_log_residual(lc, cfg_.gev);
    }
    case SimSetting::GP:
      return cfg_.gp_mean + std::sqrt(cfg_.gp_var) * normal_quantile(level);
    case SimSetting::ST: {
      ensure_st_marginal();
      const double h = (st_sorted_.size() - 1) * level;
      const std::size_t lo = static_cast<std::size_t>(h);
      const double w = h - lo;
      return (1.0 - w) * st_sorted_[lo] + w * st_sorted_[std::min(lo + 1, st_sorted_.size() - 1)];
    }
    case SimSetting::InvMS:
      // P(Y < y) = 1 - exp(-x) with x the standardized residual
      return gev_from_log_residual(std::log(-std::log1p(-level)), cfg_.gev);
    case SimSetting::MAX:
      return gev_from_log_residual(max_setting_residual_log_quantile(cfg_.q, level),
                                   cfg_.gev);
  }
  throw DomainError("quantile: bad setting");
}

double SimTruth::chi(int i, int j, double u) const {
  if (!(u > 0.0 && u < 1.0)) throw DomainError("chi level must be in (0,1)");
  const int pair[2] = {i, j};
  switch (cfg_.setting) {
    case SimSetting::MS: {
      const double lc = std::log(-1.0 / std::log(u));
      const double logc[2] = {lc, lc};
      const double f = std::exp(log_f_hevp_joint(logc, pair, wm_, cfg_.alpha));
      return (1.0 - 2.0 * u + f) / (1.0 - u);
    }
    case SimSetting::SB: {
      auto marg_q = [&](int s) {
        auto logf = [&](double logc) {
          std::span<const double> row(&wm_.w[s * wm_.n_knots()], wm_.n_knots());
          return log_f_sb_marginal_row(logc, row, *atoms_, cfg_.alpha);
        };
        return invert_increasing(logf, std::log(u), -5.0, 5.0, 1e-12);
      };
      const double logc[2] = {marg_q(i), marg_q(j)};
      const double f =
          std::exp(log_f_sb_joint(logc, pair, *atoms_, wm_, cfg_.alpha));
      return (1.0 - 2.0 * u + f) / (1.0 - u);
    }
    case SimSetting::GP: {
      const double rho =
          std::exp(-distance(cfg_.sites[i], cfg_.sites[j]) / cfg_.gp_range);
      const double z = normal_quantile(u);
      const double f = bivariate_normal_cdf(z, z, rho);
      return (1.0 - 2.0 * u + f) / (1.0 - u);
    }
    case SimSetting::ST: {
      const auto& mins = st_pair_draws(distance(cfg_.sites[i], cfg_.sites[j]));
      const auto pos = std::upper_bound(mins.begin(), mins.end(),
                                        static_cast<float>(u)) -
                       mins.begin();
      const double joint =
          static_cast<double>(mins.size() - pos) / mins.size();
      return joint / (1.0 - u);
    }
    case SimSetting::InvMS: {
      // Upper tail of Y is the lower tail of the max-stable residual:
      // P(Y_i > Q_u, Y_j > Q_u) = P(X_i < w_u, X_j < w_u) with w_u such that
      // P(X < w_u) = 1 - u, so chi_u = F_ij(w_u, w_u) / (1 - u).
      const double lc = std::log(-1.0 / std::log1p(-u));
      const double logc[2] = {lc, lc};
      const double f = std::exp(log_f_hevp_joint(logc, pair, wm_, cfg_.alpha));
      return f / (1.0 - u);
    }
    case SimSetting::MAX: {
      const double lc = max_setting_residual_log_quantile(cfg_.q, u);
      const double q = cfg_.q;
      const double l1 = (lc - std::log(q)) / q;
      const double l2 = (lc - std::log1p(-q)) / (1.0 - q);
      const double logc1[2] = {l1, l1};
      const double fr = std::exp(log_f_hevp_joint(logc1, pair, wm_, cfg_.alpha));
      // Gaussian-copula component on unit Frechet margins; its marginal level
      // can round to 1 when the hat argument explodes (q near 1)
      const double p2 = std::exp(-std::exp(-l2));
      double fg;
      if (p2 >= 1.0 - 1e-15) {
        fg = 1.0;
      } else if (p2 <= 1e-300) {
        fg = 0.0;
      } else {
        const double zu = normal_quantile(p2);
        const double rho =
            std::exp(-distance(cfg_.sites[i], cfg_.sites[j]) / cfg_.gp_range);
        fg = bivariate_normal_cdf(zu, zu, rho);
      }
      return (1.0 - 2.0 * u + fr * fg) / (1.0 - u);
    }
  }
  throw DomainError("chi: bad setting");
}

}  // namespace maxmix
