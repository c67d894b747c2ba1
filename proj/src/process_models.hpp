#pragma once

#include <span>
#include <string>
#include <vector>

#include "distributions.hpp"
#include "geometry.hpp"

namespace maxmix {

enum class ModelKind { Hevp, Sb, Mm };

const char* model_kind_name(ModelKind kind);
ModelKind model_kind_from_name(const std::string& name);

// Discrete mixing measure for the stick-breaking residual model: J atoms,
// each a length-L vector of positive-stable draws, with simplex weights pi.
struct SbAtoms {
  std::size_t J = 0;
  std::size_t L = 0;
  std::vector<double> gamma;  // J x L, row-major: gamma[j*L + l]
  std::vector<double> pi;     // length J

  double at(std::size_t j, std::size_t l) const { return gamma[j * L + l]; }
};

// validates positivity and renormalizes pi (must sum to 1 within 1e-9)
SbAtoms make_sb_atoms(std::size_t J, std::size_t L, std::vector<double> gamma,
                      std::vector<double> pi);

// theta(s_i) = (sum_l a_l w_l(s_i)^(1/alpha))^alpha
std::vector<double> theta_field(std::span<const double> a, const WeightMatrix& wm,
                                double alpha);

// GEV(mu*, sigma*, xi*) of the response given the spatial factor theta
GevParams hevp_conditional_gev(double theta, const GevParams& gev, double alpha);

// ---- residual-scale distribution functions (arguments on the Frechet scale)

// log F over an arbitrary site subset, with arguments passed as log c
double log_f_hevp_joint(std::span<const double> logc, std::span<const int> sites,
                        const WeightMatrix& wm, double alpha);
double log_f_sb_joint(std::span<const double> logc, std::span<const int> sites,
                      const SbAtoms& atoms, const WeightMatrix& wm, double alpha);
double log_f_mm_joint(std::span<const double> logc, std::span<const int> sites,
                      double q, const SbAtoms& atoms, const WeightMatrix& wm,
                      double alpha);

// all-sites conveniences in natural scale
double f_hevp_joint(std::span<const double> c, const WeightMatrix& wm, double alpha);
double f_sb_joint(std::span<const double> c, const SbAtoms& atoms,
                  const WeightMatrix& wm, double alpha);
double f_mm_joint(std::span<const double> c, double q, const SbAtoms& atoms,
                  const WeightMatrix& wm, double alpha);

double f_sb_marginal(double c, int site, const SbAtoms& atoms,
                     const WeightMatrix& wm, double alpha);
double f_mm_marginal(double c, int site, double q, const SbAtoms& atoms,
                     const WeightMatrix& wm, double alpha);

// marginals against an explicit weight row (prediction at unobserved sites)
double log_f_sb_marginal_row(double logc, std::span<const double> wrow,
                             const SbAtoms& atoms, double alpha);
double log_f_mm_marginal_row(double logc, std::span<const double> wrow, double q,
                             const SbAtoms& atoms, double alpha);

// ---- tail summaries

double chi_hevp(int i, int j, const WeightMatrix& wm, double alpha);

struct TailIndex {
  double value = 1.0;
  bool at_boundary = false;  // q == alpha/(1+alpha) exactly (MM only)
};
TailIndex tail_index(ModelKind kind, double alpha, double q);

// closed interval; lo == hi except exactly at the q boundary, where only the
// bounds [chi_hevp, 1] are available
struct ChiInterval {
  double lo = 0.0;
  double hi = 0.0;
};
ChiInterval chi_mm(int i, int j, const WeightMatrix& wm, double alpha, double q);

bool delta_indicator(double q, double alpha);

// q this close to 0 or 1 collapses the max-mixture onto the pure submodel,
// sidestepping 0^0 forms in the (c/q)^(1/q) argument transform
inline constexpr double kQBoundaryEps = 1e-12;

}  // namespace maxmix
