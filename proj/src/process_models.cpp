#include "process_models.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "errors.hpp"

namespace maxmix {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

void check_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0)) {
    throw DomainError("alpha must lie in (0,1]");
  }
}

void check_q(double q) {
  if (!(q >= 0.0 && q <= 1.0)) throw DomainError("q must lie in [0,1]");
}

std::vector<int> all_sites(const WeightMatrix& wm) {
  std::vector<int> idx(wm.n_sites());
  std::iota(idx.begin(), idx.end(), 0);
  return idx;
}

std::vector<double> log_vec(std::span<const double> c) {
  std::vector<double> lc(c.size());
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (!(c[i] > 0.0)) throw DomainError("distribution function arguments must be > 0");
    lc[i] = std::log(c[i]);
  }
  return lc;
}

// log t_l with t_l = sum_i exp((log w_l(s_i) - log c_i)/alpha), the per-knot
// exponent shared by the HEVP and SB joints; computed with a per-knot max
// shift so w^(1/alpha) never underflows before its alpha power is taken
void knot_log_exponents(std::span<const double> logc, std::span<const int> sites,
                        const WeightMatrix& wm, double alpha,
                        std::vector<double>& lt) {
  const std::size_t L = wm.n_knots();
  lt.assign(L, -kInf);
  std::vector<double> m(L, -kInf);
  for (std::size_t k = 0; k < sites.size(); ++k) {
    const int i = sites[k];
    for (std::size_t l = 0; l < L; ++l) {
      const double w = wm(i, l);
      if (w > 0.0) m[l] = std::max(m[l], std::log(w) - logc[k]);
    }
  }
  for (std::size_t l = 0; l < L; ++l) {
    if (m[l] == -kInf) continue;
    double s = 0.0;
    for (std::size_t k = 0; k < sites.size(); ++k) {
      const int i = sites[k];
      const double w = wm(i, l);
      if (w > 0.0) s += std::exp((std::log(w) - logc[k] - m[l]) / alpha);
    }
    lt[l] = m[l] / alpha + std::log(s);
  }
}

}  // namespace

const char* model_kind_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::Hevp: return "hevp";
    case ModelKind::Sb: return "sb";
    case ModelKind::Mm: return "mm";
  }
  return "?";
}

ModelKind model_kind_from_name(const std::string& name) {
  if (name == "hevp") return ModelKind::Hevp;
  if (name == "sb") return ModelKind::Sb;
  if (name == "mm") return ModelKind::Mm;
  throw ConfigError("unknown model kind '" + name + "' (expected hevp, sb or mm)");
}

SbAtoms make_sb_atoms(std::size_t J, std::size_t L, std::vector<double> gamma,
                      std::vector<double> pi) {
  if (J < 1 || L < 1) throw DomainError("SbAtoms: need J >= 1 and L >= 1");
  if (gamma.size() != J * L || pi.size() != J) {
    throw DomainError("SbAtoms: inconsistent dimensions");
  }
  for (double g : gamma) {
    if (!(g > 0.0)) throw DomainError("SbAtoms: atoms must be strictly positive");
  }
  double total = 0.0;
  for (double p : pi) {
    if (!(p >= 0.0)) throw DomainError("SbAtoms: negative mixture weight");
    total += p;
  }
  if (std::fabs(total - 1.0) > 1e-9) {
    throw DomainError("SbAtoms: mixture weights must sum to 1 within 1e-9");
  }
  for (double& p : pi) p /= total;
  return SbAtoms{J, L, std::move(gamma), std::move(pi)};
}

std::vector<double> theta_field(std::span<const double> a, const WeightMatrix& wm,
                                double alpha) {
  check_alpha(alpha);
  if (a.size() != wm.n_knots()) throw DomainError("theta_field: |a| must equal L");
  for (double al : a) {
    if (!(al > 0.0)) throw DomainError("theta_field: entries of a must be > 0");
  }
  const std::size_t n = wm.n_sites();
  const std::size_t L = wm.n_knots();
  std::vector<double> theta(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t l = 0; l < L; ++l) {
      const double w = wm(i, l);
      if (w > 0.0) s += a[l] * std::pow(w, 1.0 / alpha);
    }
    theta[i] = std::pow(s, alpha);
  }
  return theta;
}

GevParams hevp_conditional_gev(double theta, const GevParams& gev, double alpha) {
  check_alpha(alpha);
  if (!(theta > 0.0)) throw DomainError("hevp_conditional_gev: theta must be > 0");
  GevParams out;
  if (std::fabs(gev.xi) < kXiGumbelEps) {
    out.mu = gev.mu + gev.sigma * std::log(theta);
    out.sigma = alpha * gev.sigma;
    out.xi = 0.0;
    return out;
  }
  const double tpow = std::pow(theta, gev.xi);
  out.mu = gev.mu + gev.sigma / gev.xi * (tpow - 1.0);
  out.sigma = alpha * gev.sigma * tpow;
  out.xi = alpha * gev.xi;
  return out;
}

double log_f_hevp_joint(std::span<const double> logc, std::span<const int> sites,
                        const WeightMatrix& wm, double alpha) {
  check_alpha(alpha);
  if (logc.size() != sites.size()) throw DomainError("joint CDF: size mismatch");
  std::vector<double> lt;
  knot_log_exponents(logc, sites, wm, alpha, lt);
  double e = 0.0;
  for (double l : lt) {
    if (l > -kInf) e += std::exp(alpha * l);
  }
  return -e;
}

double f_hevp_joint(std::span<const double> c, const WeightMatrix& wm, double alpha) {
  const auto lc = log_vec(c);
  const auto idx = all_sites(wm);
  if (c.size() != idx.size()) throw DomainError("f_hevp_joint: need one c per site");
  return std::exp(log_f_hevp_joint(lc, idx, wm, alpha));
}

double log_f_sb_joint(std::span<const double> logc, std::span<const int> sites,
                      const SbAtoms& atoms, const WeightMatrix& wm, double alpha) {
  check_alpha(alpha);
  if (logc.size() != sites.size()) throw DomainError("joint CDF: size mismatch");
  if (atoms.L != wm.n_knots()) throw DomainError("SbAtoms: L must match weights");
  std::vector<double> lt;
  knot_log_exponents(logc, sites, wm, alpha, lt);
  std::vector<double> t(atoms.L);
  for (std::size_t l = 0; l < atoms.L; ++l) {
    t[l] = lt[l] > -kInf ? std::exp(lt[l]) : 0.0;
  }
  std::vector<double> terms(atoms.J);
  for (std::size_t j = 0; j < atoms.J; ++j) {
    double e = 0.0;
    for (std::size_t l = 0; l < atoms.L; ++l) e += t[l] * atoms.at(j, l);
    terms[j] = atoms.pi[j] > 0.0 ? std::log(atoms.pi[j]) - e : -kInf;
  }
  return log_sum_exp(terms);
}

double f_sb_joint(std::span<const double> c, const SbAtoms& atoms,
                  const WeightMatrix& wm, double alpha) {
  const auto lc = log_vec(c);
  const auto idx = all_sites(wm);
  if (c.size() != idx.size()) throw DomainError("f_sb_joint: need one c per site");
  return std::exp(log_f_sb_joint(lc, idx, atoms, wm, alpha));
}

double f_sb_marginal(double c, int site, const SbAtoms& atoms,
                     const WeightMatrix& wm, double alpha) {
  if (!(c > 0.0)) throw DomainError("f_sb_marginal: c must be > 0");
  const double lc = std::log(c);
  const int idx[1] = {site};
  return std::exp(log_f_sb_joint({&lc, 1}, {idx, 1}, atoms, wm, alpha));
}

double log_f_sb_marginal_row(double logc, std::span<const double> wrow,
                             const SbAtoms& atoms, double alpha) {
  check_alpha(alpha);
  if (wrow.size() != atoms.L) throw DomainError("weight row length must equal L");
  std::vector<double> t(atoms.L, 0.0);
  for (std::size_t l = 0; l < atoms.L; ++l) {
    if (wrow[l] > 0.0) t[l] = std::exp((std::log(wrow[l]) - logc) / alpha);
  }
  std::vector<double> terms(atoms.J);
  for (std::size_t j = 0; j < atoms.J; ++j) {
    double e = 0.0;
    for (std::size_t l = 0; l < atoms.L; ++l) e += t[l] * atoms.at(j, l);
    terms[j] = atoms.pi[j] > 0.0 ? std::log(atoms.pi[j]) - e : -kInf;
  }
  return log_sum_exp(terms);
}

double log_f_mm_joint(std::span<const double> logc, std::span<const int> sites,
                      double q, const SbAtoms& atoms, const WeightMatrix& wm,
                      double alpha) {
  check_q(q);
  if (q >= 1.0 - kQBoundaryEps) return log_f_hevp_joint(logc, sites, wm, alpha);
  if (q <= kQBoundaryEps) return log_f_sb_joint(logc, sites, atoms, wm, alpha);
  std::vector<double> lc1(logc.size()), lc2(logc.size());
  for (std::size_t i = 0; i < logc.size(); ++i) {
    lc1[i] = (logc[i] - std::log(q)) / q;
    lc2[i] = (logc[i] - std::log1p(-q)) / (1.0 - q);
  }
  return log_f_hevp_joint(lc1, sites, wm, alpha) +
         log_f_sb_joint(lc2, sites, atoms, wm, alpha);
}

double f_mm_joint(std::span<const double> c, double q, const SbAtoms& atoms,
                  const WeightMatrix& wm, double alpha) {
  const auto lc = log_vec(c);
  const auto idx = all_sites(wm);
  if (c.size() != idx.size()) throw DomainError("f_mm_joint: need one c per site");
  return std::exp(log_f_mm_joint(lc, idx, q, atoms, wm, alpha));
}

double f_mm_marginal(double c, int site, double q, const SbAtoms& atoms,
                     const WeightMatrix& wm, double alpha) {
  if (!(c > 0.0)) throw DomainError("f_mm_marginal: c must be > 0");
  const double lc = std::log(c);
  const int idx[1] = {site};
  return std::exp(log_f_mm_joint({&lc, 1}, {idx, 1}, q, atoms, wm, alpha));
}

double log_f_mm_marginal_row(double logc, std::span<const double> wrow, double q,
                             const SbAtoms& atoms, double alpha) {
  check_q(q);
  if (q >= 1.0 - kQBoundaryEps) return -std::exp(-logc);  // unit Frechet margin
  if (q <= kQBoundaryEps) return log_f_sb_marginal_row(logc, wrow, atoms, alpha);
  const double lc1 = (logc - std::log(q)) / q;
  const double lc2 = (logc - std::log1p(-q)) / (1.0 - q);
  return -std::exp(-lc1) + log_f_sb_marginal_row(lc2, wrow, atoms, alpha);
}

double chi_hevp(int i, int j, const WeightMatrix& wm, double alpha) {
  check_alpha(alpha);
  if (i < 0 || j < 0 || static_cast<std::size_t>(i) >= wm.n_sites() ||
      static_cast<std::size_t>(j) >= wm.n_sites()) {
    throw DomainError("chi_hevp: site index out of range");
  }
  const std::size_t L = wm.n_knots();
  double s = 0.0;
  for (std::size_t l = 0; l < L; ++l) {
    const double wi = wm(i, l);
    const double wj = wm(j, l);
    if (wi <= 0.0 && wj <= 0.0) continue;
    // (wi^{1/a} + wj^{1/a})^a via a max shift, stable down to tiny alpha
    const double li = wi > 0.0 ? std::log(wi) : -kInf;
    const double lj = wj > 0.0 ? std::log(wj) : -kInf;
    const double mx = std::max(li, lj);
    const double rest = std::exp((std::min(li, lj) - mx) / alpha);
    s += std::exp(mx) * std::pow(1.0 + rest, alpha);
  }
  return 2.0 - s;
}

TailIndex tail_index(ModelKind kind, double alpha, double q) {
  check_alpha(alpha);
  switch (kind) {
    case ModelKind::Hevp:
      return {1.0, false};
    case ModelKind::Sb:
      return {1.0 / alpha, false};
    case ModelKind::Mm: {
      check_q(q);
      const double thr = alpha / (1.0 + alpha);
      if (q > thr) return {1.0 / q, false};
      if (q < thr) return {1.0 / (alpha * (1.0 - q)), false};
      return {1.0 / q, true};
    }
  }
  throw DomainError("tail_index: bad model kind");
}

bool delta_indicator(double q, double alpha) {
  check_alpha(alpha);
  check_q(q);
  return q >= alpha / (1.0 + alpha);
}

ChiInterval chi_mm(int i, int j, const WeightMatrix& wm, double alpha, double q) {
  check_q(q);
  const double thr = alpha / (1.0 + alpha);
  if (q < thr) return {0.0, 0.0};
  const double dep = chi_hevp(i, j, wm, alpha);
  if (q > thr) return {dep, dep};
  return {dep, 1.0};  // boundary case: only the bounds are known
}

}  // namespace maxmix
