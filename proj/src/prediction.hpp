#pragma once

#include <span>
#include <vector>

#include "mcmc.hpp"
#include "simulators.hpp"

namespace maxmix {

struct QuantileGrid {
  std::vector<Site> sites;
  std::vector<double> levels;          // strictly increasing, in (0,1)
  std::vector<double> mean;            // site-major: mean[s*levels + k]
  std::vector<double> sd;

  double mean_at(std::size_t s, std::size_t k) const {
    return mean[s * levels.size() + k];
  }
  double sd_at(std::size_t s, std::size_t k) const {
    return sd[s * levels.size() + k];
  }
};

// Posterior predictive pointwise quantiles at new sites.  Per stored draw the
// GEV surfaces are kriged (gp mode) or carried over (constant mode), kernel
// weights are rebuilt at the draw's bandwidth, and the model's marginal
// quantile is inverted numerically where no closed form exists.  The seed
// drives the kriging draws; constant mode is deterministic regardless.
QuantileGrid predict_quantiles(const PosteriorSamples& samples,
                               const std::vector<Site>& new_sites,
                               std::span<const double> levels,
                               std::uint64_t seed = 0);

struct ChiEstimate {
  int i = 0, j = 0;
  double u = 0.0;
  double value = 0.0;
  bool low_count = false;  // fewer than 5 joint exceedances
};

// rank-based empirical tail dependence with average-rank ties
ChiEstimate empirical_chi(const Dataset& data, int i, int j, double u);

// posterior mean of the finite-level model-implied chi for a fitted site pair
double model_chi(const PosteriorSamples& samples, int i, int j, double u);

// empirical quantile of a sample (order-statistic interpolation)
double empirical_quantile(std::vector<double> values, double level);

double mmse(std::span<const double> estimates, std::span<const double> truths);

struct CvScores {
  std::vector<ModelKind> models;
  std::vector<double> q_levels;
  std::vector<double> chi_levels;
  // model-major tables: mmse_q[m*q_levels + k]
  std::vector<double> mmse_q;
  std::vector<double> mmse_chi;
};

// k-fold cross validation over sites, scored against held-out empirical
// quantiles and tail dependence
CvScores cross_validate(const Dataset& data, const std::vector<ModelKind>& models,
                        int k, const ChainConfig& chain_cfg,
                        std::span<const double> q_levels,
                        std::span<const double> chi_levels, std::uint64_t seed,
                        int threads = 1);

// per-dataset ground truth, either derived from simulation provenance or read
// back from the truth CSVs written next to a simulated dataset
struct TruthTables {
  std::vector<double> q_levels;
  std::vector<double> chi_levels;
  std::vector<double> quantiles;           // site-major x level
  std::vector<std::pair<int, int>> pairs;  // i < j, all pairs in order
  std::vector<double> chi;                 // pair-major x level
};

TruthTables truth_tables_from_sim(const Dataset& ds,
                                  std::span<const double> q_levels,
                                  std::span<const double> chi_levels);

// simulation-study scoring: fit each model on the full data and compare
// in-sample quantile and chi estimates against the given truth
CvScores evaluate_against_tables(const std::vector<Dataset>& datasets,
                                 const std::vector<TruthTables>& truths,
                                 const std::vector<ModelKind>& models,
                                 const ChainConfig& chain_cfg, std::uint64_t seed,
                                 int threads = 1);

// convenience: truth derived from each dataset's simulation provenance
CvScores evaluate_against_truth(const std::vector<Dataset>& datasets,
                                const std::vector<ModelKind>& models,
                                const ChainConfig& chain_cfg,
                                std::span<const double> q_levels,
                                std::span<const double> chi_levels,
                                std::uint64_t seed, int threads = 1);

// dataset restricted to a subset of sites (columns)
Dataset subset_sites(const Dataset& data, const std::vector<int>& site_idx);

// deterministic k-fold site split
std::vector<std::vector<int>> make_folds(int n, int k, std::uint64_t seed);

}  // namespace maxmix
