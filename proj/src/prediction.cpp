#include "prediction.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <limits>
#include <mutex>
#include <numeric>
#include <thread>

#include "errors.hpp"
#include "numerics.hpp"

namespace maxmix {

namespace {

constexpr std::uint64_t kStreamPredict = 7ULL << 40;
constexpr std::uint64_t kStreamFolds = 8ULL << 40;

// residual-scale marginal distribution of one posterior draw at one site,
// parameterized by the per-atom exponents b_j = sum_l w_l^{1/alpha} gamma_jl
struct DrawMarginal {
  ModelKind kind = ModelKind::Hevp;
  double alpha = 0.5;
  double q = 1.0;
  const std::vector<double>* pi = nullptr;
  std::vector<double> b;

  void build(const PosteriorDraw& d, ModelKind k, std::span<const double> wrow) {
    kind = k;
    alpha = d.alpha;
    q = d.q;
    if (k == ModelKind::Hevp) return;
    pi = &d.pi;
    const std::size_t J = d.pi.size();
    const std::size_t L = wrow.size();
    b.assign(J, 0.0);
    std::vector<double> wa(L);
    for (std::size_t l = 0; l < L; ++l) {
      wa[l] = wrow[l] > 0.0 ? std::pow(wrow[l], 1.0 / alpha) : 0.0;
    }
    for (std::size_t j = 0; j < J; ++j) {
      double s = 0.0;
      for (std::size_t l = 0; l < L; ++l) s += wa[l] * d.gamma[j * L + l];
      b[j] = s;
    }
  }

  double log_cdf_sb(double logc) const {
    const double e = std::exp(-logc / alpha);
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < b.size(); ++j) {
      if ((*pi)[j] > 0.0) m = std::max(m, std::log((*pi)[j]) - b[j] * e);
    }
    if (!std::isfinite(m)) return -std::numeric_limits<double>::infinity();
    double s = 0.0;
    for (std::size_t j = 0; j < b.size(); ++j) {
      if ((*pi)[j] > 0.0) s += std::exp(std::log((*pi)[j]) - b[j] * e - m);
    }
    return m + std::log(s);
  }

  double log_cdf(double logc) const {
    switch (kind) {
      case ModelKind::Hevp:
        return -std::exp(-logc);
      case ModelKind::Sb:
        return log_cdf_sb(logc);
      case ModelKind::Mm: {
        if (q >= 1.0 - kQBoundaryEps) return -std::exp(-logc);
        if (q <= kQBoundaryEps) return log_cdf_sb(logc);
        const double l1 = (logc - std::log(q)) / q;
        const double l2 = (logc - std::log1p(-q)) / (1.0 - q);
        return -std::exp(-l1) + log_cdf_sb(l2);
      }
    }
    return 0.0;
  }

  // log residual quantile by bracketed bisection on the log-CDF
  double log_quantile(double u, double hint_lo) const {
    if (kind == ModelKind::Hevp) return -std::log(-std::log(u));
    auto f = [this](double lc) { return log_cdf(lc); };
    return invert_increasing(f, std::log(u), hint_lo, hint_lo + 2.0, 1e-10);
  }
};

// joint residual log-CDF of one draw over a pair of sites
double pair_log_joint(const PosteriorDraw& d, ModelKind kind,
                      std::span<const double> wrow_i, std::span<const double> wrow_j,
                      double lci, double lcj) {
  const double alpha = d.alpha;
  const std::size_t L = wrow_i.size();
  auto hevp_part = [&](double a_lci, double a_lcj) {
    double s = 0.0;
    for (std::size_t l = 0; l < L; ++l) {
      double t = 0.0;
      if (wrow_i[l] > 0.0) t += std::exp((std::log(wrow_i[l]) - a_lci) / alpha);
      if (wrow_j[l] > 0.0) t += std::exp((std::log(wrow_j[l]) - a_lcj) / alpha);
      if (t > 0.0) s += std::pow(t, alpha);
    }
    return -s;
  };
  auto sb_part = [&](double a_lci, double a_lcj) {
    const std::size_t J = d.pi.size();
    std::vector<double> terms(J);
    std::vector<double> t(L, 0.0);
    for (std::size_t l = 0; l < L; ++l) {
      double v = 0.0;
      if (wrow_i[l] > 0.0) v += std::exp((std::log(wrow_i[l]) - a_lci) / alpha);
      if (wrow_j[l] > 0.0) v += std::exp((std::log(wrow_j[l]) - a_lcj) / alpha);
      t[l] = v;
    }
    for (std::size_t j = 0; j < J; ++j) {
      double e = 0.0;
      for (std::size_t l = 0; l < L; ++l) e += t[l] * d.gamma[j * L + l];
      terms[j] = d.pi[j] > 0.0 ? std::log(d.pi[j]) - e
                               : -std::numeric_limits<double>::infinity();
    }
    return log_sum_exp(terms);
  };
  switch (kind) {
    case ModelKind::Hevp:
      return hevp_part(lci, lcj);
    case ModelKind::Sb:
      return sb_part(lci, lcj);
    case ModelKind::Mm: {
      const double q = d.q;
      if (q >= 1.0 - kQBoundaryEps) return hevp_part(lci, lcj);
      if (q <= kQBoundaryEps) return sb_part(lci, lcj);
      const double li1 = (lci - std::log(q)) / q;
      const double lj1 = (lcj - std::log(q)) / q;
      const double li2 = (lci - std::log1p(-q)) / (1.0 - q);
      const double lj2 = (lcj - std::log1p(-q)) / (1.0 - q);
      return hevp_part(li1, lj1) + sb_part(li2, lj2);
    }
  }
  return 0.0;
}

GevParams draw_gev_at(const PosteriorDraw& d, SurfaceMode mode, int site_index) {
  if (mode == SurfaceMode::Constant) {
    return GevParams{d.mu[0], std::exp(d.log_sigma[0]), d.xi[0]};
  }
  return GevParams{d.mu[site_index], std::exp(d.log_sigma[site_index]),
                   d.xi[site_index]};
}

GpHyper hyper_from_draw(const PosteriorDraw& d, int comp, double smoothness) {
  GpHyper h;
  h.beta = {d.gp_hyper[comp * 5 + 0], d.gp_hyper[comp * 5 + 1],
            d.gp_hyper[comp * 5 + 2]};
  h.variance = d.gp_hyper[comp * 5 + 3];
  h.range = d.gp_hyper[comp * 5 + 4];
  h.smoothness = smoothness;
  return h;
}

// kriged + sampled GEV parameters at new sites for one gp-mode draw
std::vector<GevParams> krige_draw(const PosteriorSamples& s, const PosteriorDraw& d,
                                  const std::vector<Site>& new_sites, RngStream& rng,
                                  double smoothness) {
  std::vector<GevParams> out(new_sites.size());
  std::vector<std::vector<double>> fields(3);
  const std::vector<double>* src[3] = {&d.mu, &d.log_sigma, &d.xi};
  for (int comp = 0; comp < 3; ++comp) {
    const GpHyper h = hyper_from_draw(d, comp, smoothness);
    const GpConditional cond = gp_conditional(new_sites, *src[comp], s.sites, h);
    fields[comp].resize(new_sites.size());
    for (std::size_t k = 0; k < new_sites.size(); ++k) {
      const double var = std::max(0.0, cond.cov[k * new_sites.size() + k]);
      fields[comp][k] = cond.mean[k] + std::sqrt(var) * normal_sample(rng);
    }
  }
  for (std::size_t k = 0; k < new_sites.size(); ++k) {
    out[k] = GevParams{fields[0][k], std::exp(fields[1][k]), fields[2][k]};
  }
  return out;
}

struct PredictiveScores {
  QuantileGrid grid;
  // pair-major chi means: chi[p * chi_levels.size() + k]
  std::vector<std::pair<int, int>> pairs;
  std::vector<double> chi_levels;
  std::vector<double> chi;
};

// one pass over the stored draws producing quantile and chi summaries at
// arbitrary evaluation sites
PredictiveScores predictive_scores(const PosteriorSamples& s,
                                   const std::vector<Site>& eval_sites,
                                   std::span<const double> q_levels,
                                   std::span<const double> chi_levels,
                                   const std::vector<std::pair<int, int>>& pairs,
                                   std::uint64_t seed) {
  for (double u : q_levels) {
    if (!(u > 0.0 && u < 1.0)) throw DomainError("quantile level outside (0,1)");
  }
  for (double u : chi_levels) {
    if (!(u > 0.0 && u < 1.0)) throw DomainError("chi level outside (0,1)");
  }
  if (s.draws.empty()) throw DomainError("no posterior draws");
  const std::size_t m = eval_sites.size();
  const std::size_t nq = q_levels.size();
  const std::size_t nu = chi_levels.size();
  const std::size_t L = s.knots.size();

  PredictiveScores out;
  out.grid.sites = eval_sites;
  out.grid.levels.assign(q_levels.begin(), q_levels.end());
  out.grid.mean.assign(m * nq, 0.0);
  out.grid.sd.assign(m * nq, 0.0);
  out.pairs = pairs;
  out.chi_levels.assign(chi_levels.begin(), chi_levels.end());
  out.chi.assign(pairs.size() * nu, 0.0);

  std::vector<double> mean_acc(m * nq, 0.0), m2_acc(m * nq, 0.0);
  std::vector<double> wrows(m * L);
  std::vector<double> lcq_q(m * nq);  // residual log-quantiles at q_levels
  std::vector<double> lcq_u(m * nu);  // and at chi levels
  DrawMarginal marg;

  for (std::size_t r = 0; r < s.draws.size(); ++r) {
    const PosteriorDraw& d = s.draws[r];
    RngStream rng(seed, kStreamPredict + r);
    for (std::size_t ks = 0; ks < m; ++ks) {
      const auto row = kernel_weights_row(eval_sites[ks], s.knots, d.tau);
      std::copy(row.begin(), row.end(), wrows.begin() + ks * L);
    }
    std::vector<GevParams> gev(m);
    if (s.gev_mode == SurfaceMode::Constant) {
      for (std::size_t ks = 0; ks < m; ++ks) gev[ks] = draw_gev_at(d, s.gev_mode, 0);
    } else {
      gev = krige_draw(s, d, eval_sites, rng, s.gp_smoothness);
    }
    for (std::size_t ks = 0; ks < m; ++ks) {
      marg.build(d, s.kind, {&wrows[ks * L], L});
      double hint = -3.0;
      for (std::size_t k = 0; k < nq; ++k) {
        const double lc = marg.log_quantile(q_levels[k], hint);
        hint = lc - 1.0;
        lcq_q[ks * nq + k] = lc;
        const double y = gev_from_log_residual(lc, gev[ks]);
        const std::size_t cell = ks * nq + k;
        const double delta = y - mean_acc[cell];
        mean_acc[cell] += delta / static_cast<double>(r + 1);
        m2_acc[cell] += delta * (y - mean_acc[cell]);
      }
      hint = -3.0;
      for (std::size_t k = 0; k < nu; ++k) {
        const double lc = marg.log_quantile(chi_levels[k], hint);
        hint = lc - 1.0;
        lcq_u[ks * nu + k] = lc;
      }
    }
    for (std::size_t p = 0; p < pairs.size(); ++p) {
      const int i = pairs[p].first;
      const int j = pairs[p].second;
      for (std::size_t k = 0; k < nu; ++k) {
        const double u = chi_levels[k];
        const double lf = pair_log_joint(d, s.kind, {&wrows[i * L], L},
                                         {&wrows[j * L], L}, lcq_u[i * nu + k],
                                         lcq_u[j * nu + k]);
        const double chi_u = (1.0 - 2.0 * u + std::exp(lf)) / (1.0 - u);
        out.chi[p * nu + k] += std::clamp(chi_u, 0.0, 1.0);
      }
    }
  }
  const double R = static_cast<double>(s.draws.size());
  for (std::size_t idx = 0; idx < m * nq; ++idx) {
    out.grid.mean[idx] = mean_acc[idx];
    out.grid.sd[idx] = std::sqrt(std::max(0.0, m2_acc[idx] / R));
  }
  for (double& c : out.chi) c /= R;
  return out;
}

}  // namespace

QuantileGrid predict_quantiles(const PosteriorSamples& samples,
                               const std::vector<Site>& new_sites,
                               std::span<const double> levels, std::uint64_t seed) {
  if (new_sites.empty()) throw DataError("predict_quantiles: no sites");
  std::vector<double> sorted(levels.begin(), levels.end());
  if (!std::is_sorted(sorted.begin(), sorted.end())) {
    throw DomainError("quantile levels must be sorted ascending");
  }
  return predictive_scores(samples, new_sites, levels, {}, {}, seed).grid;
}

ChiEstimate empirical_chi(const Dataset& data, int i, int j, double u) {
  if (!(u > 0.0 && u < 1.0)) throw DomainError("empirical_chi: u outside (0,1)");
  if (data.T < 20) throw DomainError("empirical_chi: need at least 20 replicates");
  if (i < 0 || j < 0 || i >= data.n || j >= data.n) {
    throw DomainError("empirical_chi: site index out of range");
  }
  auto pit = [&](int site) {
    // average ranks over ties, scaled by 1/(T+1)
    std::vector<double> col = data.site_column(site);
    const int T = data.T;
    std::vector<int> idx(T);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(),
              [&](int a, int b) { return col[a] < col[b]; });
    std::vector<double> r(T);
    int a = 0;
    while (a < T) {
      int b = a;
      while (b + 1 < T && col[idx[b + 1]] == col[idx[a]]) ++b;
      const double avg = 0.5 * (a + b) + 1.0;  // 1-based average rank
      for (int k = a; k <= b; ++k) r[idx[k]] = avg / (T + 1.0);
      a = b + 1;
    }
    return r;
  };
  const auto ui = pit(i);
  const auto uj = pit(j);
  long joint = 0, denom = 0;
  for (int t = 0; t < data.T; ++t) {
    if (uj[t] > u) {
      ++denom;
      if (ui[t] > u) ++joint;
    }
  }
  ChiEstimate est;
  est.i = i;
  est.j = j;
  est.u = u;
  est.low_count = joint < 5;
  est.value = denom > 0 ? static_cast<double>(joint) / denom : 0.0;
  return est;
}

double model_chi(const PosteriorSamples& samples, int i, int j, double u) {
  if (!(u > 0.0 && u < 1.0)) throw DomainError("model_chi: u outside (0,1)");
  const double lv[1] = {u};
  const auto scores = predictive_scores(samples, samples.sites, {}, {lv, 1},
                                        {{i, j}}, samples.seed);
  return scores.chi[0];
}

double empirical_quantile(std::vector<double> values, double level) {
  if (values.empty()) throw DomainError("empirical_quantile: empty sample");
  if (!(level > 0.0 && level < 1.0)) {
    throw DomainError("empirical_quantile: level outside (0,1)");
  }
  std::sort(values.begin(), values.end());
  const double h = (values.size() - 1) * level;
  const std::size_t lo = static_cast<std::size_t>(h);
  const double w = h - lo;
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return (1.0 - w) * values[lo] + w * values[hi];
}

double mmse(std::span<const double> estimates, std::span<const double> truths) {
  if (estimates.size() != truths.size() || estimates.empty()) {
    throw DomainError("mmse: shape mismatch");
  }
  double s = 0.0;
  for (std::size_t k = 0; k < estimates.size(); ++k) {
    const double d = estimates[k] - truths[k];
    s += d * d;
  }
  return s / static_cast<double>(estimates.size());
}

Dataset subset_sites(const Dataset& data, const std::vector<int>& site_idx) {
  Dataset out;
  out.T = data.T;
  out.n = static_cast<int>(site_idx.size());
  out.sites.reserve(site_idx.size());
  for (int i : site_idx) {
    if (i < 0 || i >= data.n) throw DomainError("subset_sites: index out of range");
    out.sites.push_back(data.sites[i]);
  }
  out.y.resize(static_cast<std::size_t>(out.T) * out.n);
  for (int t = 0; t < out.T; ++t) {
    for (int k = 0; k < out.n; ++k) {
      out.y[static_cast<std::size_t>(t) * out.n + k] = data.at(t, site_idx[k]);
    }
  }
  return out;
}

std::vector<std::vector<int>> make_folds(int n, int k, std::uint64_t seed) {
  if (k < 2) throw ConfigError("cross validation: need k >= 2 folds");
  if (k > n) throw ConfigError("cross validation: more folds than sites");
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  RngStream rng(seed, kStreamFolds);
  for (int i = n - 1; i > 0; --i) {
    const int j = static_cast<int>(rng.next_u64() % (i + 1));
    std::swap(idx[i], idx[j]);
  }
  std::vector<std::vector<int>> folds(k);
  for (int i = 0; i < n; ++i) folds[i % k].push_back(idx[i]);
  for (auto& f : folds) {
    std::sort(f.begin(), f.end());
    if (f.size() < 2) {
      throw ConfigError("cross validation: a fold has fewer than 2 sites "
                        "(chi scoring needs within-fold pairs)");
    }
  }
  return folds;
}

namespace {

void run_tasks(int n_tasks, int threads, const std::function<void(int)>& task) {
  if (threads <= 1 || n_tasks <= 1) {
    for (int i = 0; i < n_tasks; ++i) task(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  auto worker = [&] {
    for (;;) {
      const int i = next.fetch_add(1);
      if (i >= n_tasks) return;
      try {
        task(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mu);
        if (!error) error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  const int nw = std::min(threads, n_tasks);
  pool.reserve(nw);
  for (int w = 0; w < nw; ++w) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

std::vector<std::pair<int, int>> all_pairs(int n) {
  std::vector<std::pair<int, int>> pairs;
  pairs.reserve(static_cast<std::size_t>(n) * (n - 1) / 2);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) pairs.emplace_back(i, j);
  }
  return pairs;
}

}  // namespace

CvScores cross_validate(const Dataset& data, const std::vector<ModelKind>& models,
                        int k, const ChainConfig& chain_cfg,
                        std::span<const double> q_levels,
                        std::span<const double> chi_levels, std::uint64_t seed,
                        int threads) {
  const auto folds = make_folds(data.n, k, seed);
  CvScores out;
  out.models = models;
  out.q_levels.assign(q_levels.begin(), q_levels.end());
  out.chi_levels.assign(chi_levels.begin(), chi_levels.end());
  out.mmse_q.assign(models.size() * q_levels.size(), 0.0);
  out.mmse_chi.assign(models.size() * chi_levels.size(), 0.0);

  struct Task {
    std::size_t model;
    int fold;
  };
  std::vector<Task> tasks;
  for (std::size_t mi = 0; mi < models.size(); ++mi) {
    for (int b = 0; b < k; ++b) tasks.push_back({mi, b});
  }
  std::vector<std::vector<double>> fold_mse_q(tasks.size()),
      fold_mse_chi(tasks.size());

  run_tasks(static_cast<int>(tasks.size()), threads, [&](int ti) {
    const Task& task = tasks[ti];
    const auto& held = folds[task.fold];
    std::vector<int> train;
    for (int i = 0; i < data.n; ++i) {
      if (!std::binary_search(held.begin(), held.end(), i)) train.push_back(i);
    }
    const Dataset train_ds = subset_sites(data, train);
    const Dataset held_ds = subset_sites(data, held);

    ChainConfig cfg = chain_cfg;
    cfg.kind = models[task.model];
    cfg.seed = seed + 0x9E3779B97F4A7C15ULL * (task.model * 64 + task.fold + 1);
    if (cfg.knots.size() == 0) cfg.knots = make_knot_set(train_ds.sites);
    const PosteriorSamples samples = run_chain(cfg, train_ds);

    std::vector<Site> held_sites = held_ds.sites;
    const auto pairs = all_pairs(held_ds.n);
    const auto scores =
        predictive_scores(samples, held_sites, q_levels, chi_levels, pairs, cfg.seed);

    // quantiles: held-out empirical truth
    std::vector<double>& mq = fold_mse_q[ti];
    mq.assign(q_levels.size(), 0.0);
    for (std::size_t kq = 0; kq < q_levels.size(); ++kq) {
      double mse = 0.0;
      for (int s = 0; s < held_ds.n; ++s) {
        const double est = scores.grid.mean_at(s, kq);
        const double tru = empirical_quantile(held_ds.site_column(s), q_levels[kq]);
        mse += (est - tru) * (est - tru);
      }
      mq[kq] = mse / held_ds.n;
    }
    // chi: held-out empirical truth over within-fold pairs
    std::vector<double>& mc = fold_mse_chi[ti];
    mc.assign(chi_levels.size(), 0.0);
    for (std::size_t ku = 0; ku < chi_levels.size(); ++ku) {
      double mse = 0.0;
      for (std::size_t p = 0; p < pairs.size(); ++p) {
        const double est = scores.chi[p * chi_levels.size() + ku];
        const double tru =
            empirical_chi(held_ds, pairs[p].first, pairs[p].second, chi_levels[ku])
                .value;
        mse += (est - tru) * (est - tru);
      }
      mc[ku] = mse / static_cast<double>(pairs.size());
    }
  });

  for (std::size_t ti = 0; ti < tasks.size(); ++ti) {
    const Task& task = tasks[ti];
    for (std::size_t kq = 0; kq < q_levels.size(); ++kq) {
      out.mmse_q[task.model * q_levels.size() + kq] += fold_mse_q[ti][kq] / k;
    }
    for (std::size_t ku = 0; ku < chi_levels.size(); ++ku) {
      out.mmse_chi[task.model * chi_levels.size() + ku] += fold_mse_chi[ti][ku] / k;
    }
  }
  return out;
}

TruthTables truth_tables_from_sim(const Dataset& ds,
                                  std::span<const double> q_levels,
                                  std::span<const double> chi_levels) {
  if (!ds.provenance) {
    throw DataError("truth tables require a dataset with simulation provenance");
  }
  const SimTruth truth(*ds.provenance, ds.sb_atoms);
  TruthTables t;
  t.q_levels.assign(q_levels.begin(), q_levels.end());
  t.chi_levels.assign(chi_levels.begin(), chi_levels.end());
  t.quantiles.resize(static_cast<std::size_t>(ds.n) * q_levels.size());
  for (int s = 0; s < ds.n; ++s) {
    for (std::size_t k = 0; k < q_levels.size(); ++k) {
      t.quantiles[s * q_levels.size() + k] = truth.quantile(s, q_levels[k]);
    }
  }
  t.pairs = all_pairs(ds.n);
  t.chi.resize(t.pairs.size() * chi_levels.size());
  for (std::size_t p = 0; p < t.pairs.size(); ++p) {
    for (std::size_t k = 0; k < chi_levels.size(); ++k) {
      t.chi[p * chi_levels.size() + k] =
          truth.chi(t.pairs[p].first, t.pairs[p].second, chi_levels[k]);
    }
  }
  return t;
}

CvScores evaluate_against_tables(const std::vector<Dataset>& datasets,
                                 const std::vector<TruthTables>& truths,
                                 const std::vector<ModelKind>& models,
                                 const ChainConfig& chain_cfg, std::uint64_t seed,
                                 int threads) {
  if (datasets.empty() || datasets.size() != truths.size()) {
    throw DataError("evaluate: need one truth table per dataset");
  }
  const std::vector<double>& q_levels = truths[0].q_levels;
  const std::vector<double>& chi_levels = truths[0].chi_levels;
  for (std::size_t b = 0; b < datasets.size(); ++b) {
    if (truths[b].q_levels != q_levels || truths[b].chi_levels != chi_levels) {
      throw DataError("evaluate: truth tables disagree on levels");
    }
    if (truths[b].quantiles.size() !=
            static_cast<std::size_t>(datasets[b].n) * q_levels.size() ||
        truths[b].pairs.size() !=
            static_cast<std::size_t>(datasets[b].n) * (datasets[b].n - 1) / 2) {
      throw DataError("evaluate: truth table shape does not match the dataset");
    }
  }
  CvScores out;
  out.models = models;
  out.q_levels = q_levels;
  out.chi_levels = chi_levels;
  out.mmse_q.assign(models.size() * q_levels.size(), 0.0);
  out.mmse_chi.assign(models.size() * chi_levels.size(), 0.0);

  struct Task {
    std::size_t model;
    std::size_t ds;
  };
  std::vector<Task> tasks;
  for (std::size_t mi = 0; mi < models.size(); ++mi) {
    for (std::size_t b = 0; b < datasets.size(); ++b) tasks.push_back({mi, b});
  }
  std::vector<std::vector<double>> mse_q(tasks.size()), mse_chi(tasks.size());

  run_tasks(static_cast<int>(tasks.size()), threads, [&](int ti) {
    const Task& task = tasks[ti];
    const Dataset& ds = datasets[task.ds];
    const TruthTables& truth = truths[task.ds];

    ChainConfig cfg = chain_cfg;
    cfg.kind = models[task.model];
    cfg.seed = seed + 0x9E3779B97F4A7C15ULL * (task.model * 64 + task.ds + 1);
    if (cfg.knots.size() == 0) cfg.knots = make_knot_set(ds.sites);
    const PosteriorSamples samples = run_chain(cfg, ds);

    const auto scores = predictive_scores(samples, ds.sites, q_levels, chi_levels,
                                          truth.pairs, cfg.seed);

    std::vector<double>& mq = mse_q[ti];
    mq.assign(q_levels.size(), 0.0);
    for (std::size_t kq = 0; kq < q_levels.size(); ++kq) {
      double mse = 0.0;
      for (int s = 0; s < ds.n; ++s) {
        const double est = scores.grid.mean_at(s, kq);
        const double tru = truth.quantiles[s * q_levels.size() + kq];
        mse += (est - tru) * (est - tru);
      }
      mq[kq] = mse / ds.n;
    }
    std::vector<double>& mc = mse_chi[ti];
    mc.assign(chi_levels.size(), 0.0);
    for (std::size_t ku = 0; ku < chi_levels.size(); ++ku) {
      double mse = 0.0;
      for (std::size_t p = 0; p < truth.pairs.size(); ++p) {
        const double est = scores.chi[p * chi_levels.size() + ku];
        const double tru = truth.chi[p * chi_levels.size() + ku];
        mse += (est - tru) * (est - tru);
      }
      mc[ku] = mse / static_cast<double>(truth.pairs.size());
    }
  });

  const double B = static_cast<double>(datasets.size());
  for (std::size_t ti = 0; ti < tasks.size(); ++ti) {
    const Task& task = tasks[ti];
    for (std::size_t kq = 0; kq < q_levels.size(); ++kq) {
      out.mmse_q[task.model * q_levels.size() + kq] += mse_q[ti][kq] / B;
    }
    for (std::size_t ku = 0; ku < chi_levels.size(); ++ku) {
      out.mmse_chi[task.model * chi_levels.size() + ku] += mse_chi[ti][ku] / B;
    }
  }
  return out;
}

CvScores evaluate_against_truth(const std::vector<Dataset>& datasets,
                                const std::vector<ModelKind>& models,
                                const ChainConfig& chain_cfg,
                                std::span<const double> q_levels,
                                std::span<const double> chi_levels,
                                std::uint64_t seed, int threads) {
  std::vector<TruthTables> truths;
  truths.reserve(datasets.size());
  for (const Dataset& ds : datasets) {
    truths.push_back(truth_tables_from_sim(ds, q_levels, chi_levels));
  }
  return evaluate_against_tables(datasets, truths, models, chain_cfg, seed, threads);
}

}  // namespace maxmix
