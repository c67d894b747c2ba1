#include "mcmc.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>
#include <limits>
#include <numeric>

#include "errors.hpp"

namespace maxmix {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr std::uint64_t kStreamChain = 3ULL << 40;
constexpr std::uint64_t kCheckpointMagic = 0x4D58434B30303033ULL;  // "MXCK0003"

// lower bound on the spatial sums S = theta^(1/alpha): at small alpha the
// true value can undershoot the double range while theta stays ordinary, and
// a hard zero would freeze the chain through log(0) deltas
constexpr double kSumFloor = 1e-250;

struct Tuner {
  double lsig = 0.0;  // log step
  long k = 1;
  long props = 0;
  long acc = 0;

  double step() const { return std::exp(lsig); }
  void adapt(double accept_prob, double target, double window) {
    lsig += (accept_prob - target) * window / (window + k);
    lsig = std::clamp(lsig, std::log(1e-7), std::log(50.0));
    ++k;
  }
  void record(bool accepted) {
    ++props;
    acc += accepted ? 1 : 0;
  }
};

double fnv1a64(const void* bytes, std::size_t size) {
  const auto* p = static_cast<const unsigned char*>(bytes);
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 0x100000001B3ULL;
  }
  return h;
}

}  // namespace

struct Chain::Impl {
  ChainConfig cfg;
  Dataset data;
  int T = 0, n = 0, L = 0, J = 0;
  RngStream rng;
  ModelState st;
  PosteriorSamples out;
  int iter_done = 0;

  bool with_hevp = false;  // HEVP latents present (HEVP / MM)
  bool with_atoms = false; // SB atoms present (SB / MM)

  // ---- caches (empty in prior-only mode)
  WeightMatrix W;
  std::vector<double> Wa;       // n x L, w^(1/alpha)
  std::vector<double> Stil;     // T x n, sum_l A_tl Wa_il
  std::vector<double> Shat;     // J x n, sum_l gamma_jl Wa_il
  std::vector<double> logx;     // T x n
  std::vector<double> E;        // T x n, exp(-logx/alpha)
  std::vector<double> e1, e2;   // T x n, MM component exponentials
  std::vector<double> lsig;     // n, log sigma(s_i)
  std::vector<double> ll_time;  // T
  double ll_total = 0.0;
  double la = 0.0, ia = 1.0;    // log alpha, 1/alpha
  double k1 = 0, k2 = 0, lq1 = 0, lq2 = 0, lk1 = 0, lk2 = 0;
  std::vector<std::vector<int>> members;  // cluster -> times

  // scratch buffers for whole-array proposals
  std::vector<double> s_logx, s_E, s_e1, s_e2, s_Stil, s_Shat, s_Wa, s_ll;
  WeightMatrix s_W;

  // gp-mode per-surface caches: precision matrix and g = P (f - mean)
  struct SurfaceCache {
    Eigen::MatrixXd prec;
    Eigen::VectorXd g;
  };
  SurfaceCache gp_cache[3];
  double gp_range_scale_eff = 1.0;

  // tuners
  Tuner t_gev[3], t_tau, t_alpha, t_q, t_qscale, t_range[3];
  std::vector<Tuner> t_A, t_B, t_gamma, t_lambda, t_field;  // per entry
  bool adapting = true;

  // ------------------------------------------------------------------ setup

  Impl(const ChainConfig& config, const Dataset& dataset)
      : cfg(config), data(dataset), rng(config.seed, kStreamChain) {
    T = data.T;
    n = data.n;
    if (T < 1 || n < 1) throw DataError("fit: empty dataset");
    for (double v : data.y) {
      if (!std::isfinite(v)) throw DataError("fit: dataset contains non-finite values");
    }
    if (cfg.knots.size() == 0) cfg.knots = make_knot_set(data.sites);
    L = static_cast<int>(cfg.knots.size());
    with_hevp = cfg.kind == ModelKind::Hevp || cfg.kind == ModelKind::Mm;
    with_atoms = cfg.kind == ModelKind::Sb || cfg.kind == ModelKind::Mm;
    J = with_atoms ? (cfg.J > 0 ? cfg.J : T) : 0;
    if (cfg.burnin >= cfg.iterations) {
      throw ConfigError("mcmc: burnin must be smaller than iterations");
    }
    if (cfg.thinning < 1) throw ConfigError("mcmc: thinning must be >= 1");

    init_state();
    init_tuners();
    if (!cfg.prior_only) init_caches();
    if (cfg.gev_mode == SurfaceMode::Gp) {
      for (int c = 0; c < 3; ++c) refresh_gp_cache(c);
    }

    out.kind = cfg.kind;
    out.gev_mode = cfg.gev_mode;
    out.n = n;
    out.T = T;
    out.J = J;
    out.L = L;
    out.sites = data.sites;
    out.knots = cfg.knots;
    out.iterations = cfg.iterations;
    out.burnin = cfg.burnin;
    out.thinning = cfg.thinning;
    out.seed = cfg.seed;
    out.gp_smoothness = cfg.gp_smoothness;
  }

  double median_knot_spacing() const {
    const auto& kn = cfg.knots.knots;
    if (kn.size() < 2) return 1.0;
    std::vector<double> d;
    d.reserve(kn.size() * (kn.size() - 1) / 2);
    for (std::size_t a = 0; a < kn.size(); ++a) {
      for (std::size_t b = a + 1; b < kn.size(); ++b) {
        d.push_back(distance(kn[a], kn[b]));
      }
    }
    std::nth_element(d.begin(), d.begin() + d.size() / 2, d.end());
    return d[d.size() / 2];
  }

  double domain_diameter() const {
    double diam = 0.0;
    for (std::size_t a = 0; a < data.sites.size(); ++a) {
      for (std::size_t b = a + 1; b < data.sites.size(); ++b) {
        diam = std::max(diam, distance(data.sites[a], data.sites[b]));
      }
    }
    return diam > 0.0 ? diam : 1.0;
  }

  void init_state() {
    if (cfg.init_from_prior) {
      st.alpha = std::isnan(cfg.fix_alpha) ? rng.uniform() : cfg.fix_alpha;
      st.tau = std::isnan(cfg.fix_tau)
                   ? inverse_gamma_sample(cfg.priors.tau_shape, cfg.priors.tau_rate, rng)
                   : cfg.fix_tau;
      st.q = cfg.kind == ModelKind::Mm
                 ? (std::isnan(cfg.fix_q) ? rng.uniform() : cfg.fix_q)
                 : NAN;
    } else {
      st.alpha = std::isnan(cfg.fix_alpha) ? 0.5 : cfg.fix_alpha;
      st.tau = std::isnan(cfg.fix_tau) ? std::max(1e-8, 0.5 * median_knot_spacing())
                                       : cfg.fix_tau;
      st.q = cfg.kind == ModelKind::Mm ? (std::isnan(cfg.fix_q) ? 0.5 : cfg.fix_q) : NAN;
      if (cfg.kind == ModelKind::Mm && !std::isnan(cfg.init_q) &&
          std::isnan(cfg.fix_q)) {
        st.q = cfg.init_q;
      }
    }
    if (!(st.alpha > 0.0 && st.alpha < 1.0)) {
      throw ConfigError("mcmc: alpha must lie strictly inside (0,1)");
    }

    if (with_hevp) {
      st.A.assign(static_cast<std::size_t>(T) * L, 1.0);
      st.B.assign(static_cast<std::size_t>(T) * L, 0.5);
      if (cfg.init_from_prior) {
        for (std::size_t idx = 0; idx < st.A.size(); ++idx) {
          const PsAuxPair pair = ps_sample_pair(st.alpha, rng);
          st.A[idx] = pair.gamma;
          st.B[idx] = pair.lambda;
        }
      }
    }
    if (with_atoms) {
      st.gamma.assign(static_cast<std::size_t>(J) * L, 1.0);
      st.lambda.assign(static_cast<std::size_t>(J) * L, 0.5);
      if (cfg.init_from_prior) {
        for (std::size_t idx = 0; idx < st.gamma.size(); ++idx) {
          const PsAuxPair pair = ps_sample_pair(st.alpha, rng);
          st.gamma[idx] = pair.gamma;
          st.lambda[idx] = pair.lambda;
        }
      }
      st.v.resize(J);
      for (int j = 0; j + 1 < J; ++j) st.v[j] = beta_sample(1.0, cfg.nu, rng);
      st.v[J - 1] = 1.0;
      recompute_pi();
      st.labels.resize(T);
      for (int t = 0; t < T; ++t) {
        st.labels[t] = cfg.init_from_prior
                           ? categorical_sample(st.pi, rng)
                           : static_cast<int>(rng.next_u64() % J);
      }
    }

    st.gev.mode = cfg.gev_mode;
    st.gev.mu.assign(n, 0.0);
    st.gev.log_sigma.assign(n, 0.0);
    st.gev.xi.assign(n, 0.0);
    gp_range_scale_eff =
        cfg.gp_range_scale > 0.0 ? cfg.gp_range_scale : 0.5 * domain_diameter();
    if (cfg.gev_mode == SurfaceMode::Gp) {
      for (GpHyper* h : {&st.hyper_mu, &st.hyper_logsigma, &st.hyper_xi}) {
        h->beta = {0.0, 0.0, 0.0};
        h->variance = 1.0;
        h->range = 0.25 * domain_diameter();
        h->smoothness = cfg.gp_smoothness;
      }
    }
    if (cfg.prior_only) return;
    if (cfg.init_from_prior) {
      if (cfg.gev_mode == SurfaceMode::Constant) {
        const double mu0 = cfg.priors.mu_mean + cfg.priors.mu_sd * normal_sample(rng);
        const double ls0 =
            cfg.priors.logsigma_mean + cfg.priors.logsigma_sd * normal_sample(rng);
        const double xi0 = cfg.priors.xi_mean + cfg.priors.xi_sd * normal_sample(rng);
        std::fill(st.gev.mu.begin(), st.gev.mu.end(), mu0);
        std::fill(st.gev.log_sigma.begin(), st.gev.log_sigma.end(), ls0);
        std::fill(st.gev.xi.begin(), st.gev.xi.end(), xi0);
      }
      return;
    }

    if (cfg.gev_mode == SurfaceMode::Constant) {
      const GevParams fit = gev_moment_fit(data.y);
      std::fill(st.gev.mu.begin(), st.gev.mu.end(), fit.mu);
      std::fill(st.gev.log_sigma.begin(), st.gev.log_sigma.end(), std::log(fit.sigma));
      std::fill(st.gev.xi.begin(), st.gev.xi.end(), fit.xi);
    } else {
      for (int i = 0; i < n; ++i) {
        const GevParams fit = gev_moment_fit(data.site_column(i));
        st.gev.mu[i] = fit.mu;
        st.gev.log_sigma[i] = std::log(fit.sigma);
        st.gev.xi[i] = fit.xi;
      }
      st.hyper_mu.beta[0] = mean_of(st.gev.mu);
      st.hyper_logsigma.beta[0] = mean_of(st.gev.log_sigma);
      st.hyper_xi.beta[0] = mean_of(st.gev.xi);
    }
  }

  static double mean_of(const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / v.size();
  }

  void init_tuners() {
    for (Tuner* t : {&t_gev[0], &t_gev[1], &t_gev[2]}) t->lsig = std::log(0.1);
    t_tau.lsig = std::log(0.2);
    t_alpha.lsig = std::log(0.3);
    t_q.lsig = std::log(0.2);
    t_qscale.lsig = std::log(0.2);
    for (Tuner& t : t_range) t.lsig = std::log(0.3);
    if (with_hevp) {
      t_A.assign(static_cast<std::size_t>(T) * L, Tuner{std::log(0.5)});
      t_B.assign(static_cast<std::size_t>(T) * L, Tuner{std::log(0.5)});
    }
    if (with_atoms) {
      t_gamma.assign(static_cast<std::size_t>(J) * L, Tuner{std::log(0.5)});
      t_lambda.assign(static_cast<std::size_t>(J) * L, Tuner{std::log(0.5)});
    }
    if (cfg.gev_mode == SurfaceMode::Gp) {
      t_field.assign(static_cast<std::size_t>(3) * n, Tuner{std::log(0.1)});
    }
  }

  void recompute_pi() {
    st.pi.assign(J, 0.0);
    double stick = 1.0;
    for (int j = 0; j < J; ++j) {
      st.pi[j] = st.v[j] * stick;
      stick *= 1.0 - st.v[j];
    }
  }

  // ------------------------------------------------------------- caches

  void refresh_scalars() {
    la = std::log(st.alpha);
    ia = 1.0 / st.alpha;
    if (cfg.kind == ModelKind::Mm && st.q > kQBoundaryEps &&
        st.q < 1.0 - kQBoundaryEps) {
      k1 = 1.0 / (st.alpha * st.q);
      k2 = 1.0 / (st.alpha * (1.0 - st.q));
      lq1 = std::log(st.q) * k1;
      lq2 = std::log1p(-st.q) * k2;
      lk1 = std::log(k1);
      lk2 = std::log(k2);
    }
  }

  void compute_wa(const WeightMatrix& w, double alpha, std::vector<double>& wa) const {
    wa.resize(w.w.size());
    const double inva = 1.0 / alpha;
    for (std::size_t idx = 0; idx < w.w.size(); ++idx) {
      wa[idx] = w.w[idx] > 0.0 ? std::pow(w.w[idx], inva) : 0.0;
    }
  }

  void compute_stil(const std::vector<double>& A, const std::vector<double>& wa,
                    std::vector<double>& stil) const {
    stil.assign(static_cast<std::size_t>(T) * n, 0.0);
    for (int t = 0; t < T; ++t) {
      const double* at = &A[static_cast<std::size_t>(t) * L];
      double* row = &stil[static_cast<std::size_t>(t) * n];
      for (int i = 0; i < n; ++i) {
        const double* wai = &wa[static_cast<std::size_t>(i) * L];
        double s = 0.0;
        for (int l = 0; l < L; ++l) s += at[l] * wai[l];
        row[i] = std::max(s, kSumFloor);
      }
    }
  }

  void compute_shat(const std::vector<double>& gamma, const std::vector<double>& wa,
                    std::vector<double>& shat) const {
    shat.assign(static_cast<std::size_t>(J) * n, 0.0);
    for (int j = 0; j < J; ++j) {
      const double* gj = &gamma[static_cast<std::size_t>(j) * L];
      double* row = &shat[static_cast<std::size_t>(j) * n];
      for (int i = 0; i < n; ++i) {
        const double* wai = &wa[static_cast<std::size_t>(i) * L];
        double s = 0.0;
        for (int l = 0; l < L; ++l) s += gj[l] * wai[l];
        row[i] = std::max(s, kSumFloor);
      }
    }
  }

  void compute_logx(const GevSurface& gev, std::vector<double>& out_logx,
                    std::vector<double>& out_lsig) const {
    out_logx.resize(static_cast<std::size_t>(T) * n);
    out_lsig.resize(n);
    for (int i = 0; i < n; ++i) out_lsig[i] = gev.log_sigma[i];
    for (int t = 0; t < T; ++t) {
      for (int i = 0; i < n; ++i) {
        const GevParams p{gev.mu[i], std::exp(gev.log_sigma[i]), gev.xi[i]};
        out_logx[static_cast<std::size_t>(t) * n + i] = gev_log_residual(data.at(t, i), p);
      }
    }
  }

  void compute_exp_caches(const std::vector<double>& lx, double alpha, double q,
                          std::vector<double>& eE, std::vector<double>& ee1,
                          std::vector<double>& ee2) const {
    const std::size_t m = lx.size();
    if (cfg.kind != ModelKind::Mm || q <= kQBoundaryEps || q >= 1.0 - kQBoundaryEps) {
      eE.resize(m);
      const double inva = 1.0 / alpha;
      for (std::size_t idx = 0; idx < m; ++idx) eE[idx] = std::exp(-lx[idx] * inva);
      if (cfg.kind == ModelKind::Mm) {
        ee1.clear();
        ee2.clear();
      }
      return;
    }
    eE.resize(m);
    ee1.resize(m);
    ee2.resize(m);
    const double inva = 1.0 / alpha;
    const double kk1 = 1.0 / (alpha * q);
    const double kk2 = 1.0 / (alpha * (1.0 - q));
    const double off1 = std::log(q) * kk1;
    const double off2 = std::log1p(-q) * kk2;
    // the q-power constants are folded into the exponential so an extreme
    // observation yields inf (density zero) rather than a 0*inf NaN
    for (std::size_t idx = 0; idx < m; ++idx) {
      eE[idx] = std::exp(-lx[idx] * inva);
      ee1[idx] = std::exp(off1 - lx[idx] * kk1);
      ee2[idx] = std::exp(off2 - lx[idx] * kk2);
    }
  }

  void init_caches() {
    W = kernel_weights(data.sites, cfg.knots, st.tau);
    refresh_scalars();
    compute_wa(W, st.alpha, Wa);
    if (with_hevp) compute_stil(st.A, Wa, Stil);
    if (with_atoms) compute_shat(st.gamma, Wa, Shat);
    compute_logx(st.gev, logx, lsig);
    compute_exp_caches(logx, st.alpha, st.q, E, e1, e2);
    if (cfg.init_from_prior) {
      // the caller is expected to install model-consistent data via set_data
      // before sweeping (successive-conditional testing)
      refresh_ll();
      return;
    }
    rescue_initialization();
    refresh_ll();
    if (!std::isfinite(ll_total)) {
      throw NumericError(
          "non-finite log-likelihood at initialization (data outside the support "
          "of the initial GEV surfaces)");
    }
  }

  // nudge the initial GEV fields toward a support that covers every
  // observation: shrink xi, widen sigma
  void rescue_initialization() {
    for (int attempt = 0; attempt < 60; ++attempt) {
      refresh_ll();
      if (std::isfinite(ll_total)) return;
      for (int i = 0; i < n; ++i) {
        st.gev.xi[i] *= 0.7;
        st.gev.log_sigma[i] += std::log(1.3);
      }
      compute_logx(st.gev, logx, lsig);
      compute_exp_caches(logx, st.alpha, st.q, E, e1, e2);
    }
  }

  // per-observation log-likelihood pieces ---------------------------------

  double comp_ll(double S, double Eti, double lx, int i) const {
    if (!std::isfinite(lx)) return -kInf;
    return -S * Eti + std::log(S) - la - lsig[i] - (ia + st.gev.xi[i]) * lx;
  }

  double comp_ll_mm(double S_til, double S_hat, double lx, double e1ti, double e2ti,
                    int i) const {
    if (!std::isfinite(lx)) return -kInf;
    const double Ht = S_til * e1ti;
    const double Hh = S_hat * e2ti;
    const double lrt = std::log(S_til) + lq1 + lk1 - (k1 + 1.0) * lx;
    const double lrh = std::log(S_hat) + lq2 + lk2 - (k2 + 1.0) * lx;
    return -Ht - Hh + log_sum_exp(lrt, lrh) + (1.0 - st.gev.xi[i]) * lx - lsig[i];
  }

  double obs_ll(int t, int i) const {
    const std::size_t idx = static_cast<std::size_t>(t) * n + i;
    const double lx = logx[idx];
    if (!std::isfinite(lx)) return -kInf;
    switch (cfg.kind) {
      case ModelKind::Hevp:
        return comp_ll(Stil[idx], E[idx], lx, i);
      case ModelKind::Sb:
        return comp_ll(Shat[static_cast<std::size_t>(st.labels[t]) * n + i], E[idx],
                       lx, i);
      case ModelKind::Mm: {
        if (st.q >= 1.0 - kQBoundaryEps) return comp_ll(Stil[idx], E[idx], lx, i);
        const double sh = Shat[static_cast<std::size_t>(st.labels[t]) * n + i];
        if (st.q <= kQBoundaryEps) return comp_ll(sh, E[idx], lx, i);
        return comp_ll_mm(Stil[idx], sh, lx, e1[idx], e2[idx], i);
      }
    }
    return -kInf;
  }

  double ll_for_time(int t) const {
    if (cfg.prior_only) return 0.0;
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += obs_ll(t, i);
    return s;
  }

  void refresh_ll() {
    ll_time.assign(T, 0.0);
    ll_total = 0.0;
    if (cfg.prior_only) return;
    for (int t = 0; t < T; ++t) {
      ll_time[t] = ll_for_time(t);
      ll_total += ll_time[t];
    }
  }

  // hygiene refresh of the incrementally maintained caches
  void refresh_sums() {
    if (cfg.prior_only) return;
    if (with_hevp) compute_stil(st.A, Wa, Stil);
    if (with_atoms) compute_shat(st.gamma, Wa, Shat);
    refresh_ll();
  }

  void rebuild_members() {
    members.assign(J, {});
    for (int t = 0; t < T; ++t) members[st.labels[t]].push_back(t);
  }

  // ---------------------------------------------------------------- updates

  bool mh_accept(double log_ratio, Tuner& tuner) {
    const double p =
        std::isfinite(log_ratio) ? std::min(1.0, std::exp(log_ratio)) : 0.0;
    const bool accept = rng.uniform() < p;
    tuner.record(accept);
    if (adapting) tuner.adapt(p, cfg.target_accept, cfg.adapt_window);
    return accept;
  }

  // --- GEV surfaces (constant mode: one scalar move per component)

  double constant_prior(int comp, double value) const {
    switch (comp) {
      case 0: return cfg.priors.logprior_mu(value);
      case 1: return cfg.priors.logprior_logsigma(value);
      default: return cfg.priors.logprior_xi(value);
    }
  }

  void update_gev_constant() {
    static const char* names[3] = {"mu", "log_sigma", "xi"};
    (void)names;
    for (int comp = 0; comp < 3; ++comp) {
      Tuner& tn = t_gev[comp];
      std::vector<double>& field = comp == 0   ? st.gev.mu
                                   : comp == 1 ? st.gev.log_sigma
                                               : st.gev.xi;
      const double cur = field[0];
      const double cand = cur + tn.step() * normal_sample(rng);
      double dll = 0.0;
      if (!cfg.prior_only) {
        GevSurface gcand = st.gev;
        std::vector<double>& f = comp == 0   ? gcand.mu
                                 : comp == 1 ? gcand.log_sigma
                                             : gcand.xi;
        std::fill(f.begin(), f.end(), cand);
        compute_logx(gcand, s_logx, s_ll);  // s_ll doubles as lsig scratch
        compute_exp_caches(s_logx, st.alpha, st.q, s_E, s_e1, s_e2);
        const double ll_new = total_ll_with(s_logx, s_E, s_e1, s_e2, gcand);
        dll = ll_new - ll_total;
        const double ratio = dll + constant_prior(comp, cand) - constant_prior(comp, cur);
        if (mh_accept(ratio, tn)) {
          std::fill(field.begin(), field.end(), cand);
          std::swap(logx, s_logx);
          std::swap(E, s_E);
          std::swap(e1, s_e1);
          std::swap(e2, s_e2);
          lsig = st.gev.log_sigma;
          refresh_ll();
        }
      } else {
        const double ratio = constant_prior(comp, cand) - constant_prior(comp, cur);
        if (mh_accept(ratio, tn)) std::fill(field.begin(), field.end(), cand);
      }
    }
  }

  // total loglik under candidate observation-side caches (surface move)
  double total_ll_with(const std::vector<double>& lx, const std::vector<double>& eE,
                       const std::vector<double>& ee1, const std::vector<double>& ee2,
                       const GevSurface& gev) const {
    double total = 0.0;
    const bool mm_interior = cfg.kind == ModelKind::Mm &&
                             st.q > kQBoundaryEps && st.q < 1.0 - kQBoundaryEps;
    for (int t = 0; t < T; ++t) {
      for (int i = 0; i < n; ++i) {
        const std::size_t idx = static_cast<std::size_t>(t) * n + i;
        const double l = lx[idx];
        if (!std::isfinite(l)) return -kInf;
        double ll;
        if (cfg.kind == ModelKind::Hevp ||
            (cfg.kind == ModelKind::Mm && st.q >= 1.0 - kQBoundaryEps)) {
          const double S = Stil[idx];
          ll = -S * eE[idx] + std::log(S) - la - gev.log_sigma[i] -
               (ia + gev.xi[i]) * l;
        } else if (!mm_interior) {  // SB, or MM collapsed onto SB
          const double S = Shat[static_cast<std::size_t>(st.labels[t]) * n + i];
          ll = -S * eE[idx] + std::log(S) - la - gev.log_sigma[i] -
               (ia + gev.xi[i]) * l;
        } else {
          const double S_til = Stil[idx];
          const double S_hat = Shat[static_cast<std::size_t>(st.labels[t]) * n + i];
          const double Ht = S_til * ee1[idx];
          const double Hh = S_hat * ee2[idx];
          const double lrt = std::log(S_til) + lq1 + lk1 - (k1 + 1.0) * l;
          const double lrh = std::log(S_hat) + lq2 + lk2 - (k2 + 1.0) * l;
          ll = -Ht - Hh + log_sum_exp(lrt, lrh) + (1.0 - gev.xi[i]) * l -
               gev.log_sigma[i];
        }
        total += ll;
      }
    }
    return total;
  }

  // --- GEV surfaces (gp mode: site-wise walks plus hyperparameter draws)

  void refresh_gp_cache(int comp) {
    const GpHyper& h = hyper_of(comp);
    const std::vector<double>& f = field_of(comp);
    Eigen::MatrixXd c(n, n);
    for (int i = 0; i < n; ++i) {
      for (int j2 = 0; j2 < n; ++j2) {
        c(i, j2) = matern_cov(distance(data.sites[i], data.sites[j2]), h);
      }
    }
    Eigen::LLT<Eigen::MatrixXd> llt(c);
    if (llt.info() != Eigen::Success) {
      c.diagonal().array() += 1e-10 * h.variance;
      llt.compute(c);
      if (llt.info() != Eigen::Success) {
        throw NumericError("GP covariance factorization failed in sampler");
      }
    }
    gp_cache[comp].prec = llt.solve(Eigen::MatrixXd::Identity(n, n));
    Eigen::VectorXd r(n);
    for (int i = 0; i < n; ++i) r(i) = f[i] - gp_mean(data.sites[i], h);
    gp_cache[comp].g = gp_cache[comp].prec * r;
  }

  GpHyper& hyper_of(int comp) {
    return comp == 0 ? st.hyper_mu : comp == 1 ? st.hyper_logsigma : st.hyper_xi;
  }
  std::vector<double>& field_of(int comp) {
    return comp == 0 ? st.gev.mu : comp == 1 ? st.gev.log_sigma : st.gev.xi;
  }

  // likelihood contribution of one site column
  double column_ll(int i) const {
    if (cfg.prior_only) return 0.0;
    double s = 0.0;
    for (int t = 0; t < T; ++t) s += obs_ll(t, i);
    return s;
  }

  void update_gev_gp() {
    std::vector<double> old_obs(T), col_logx(T), col_E(T), col_e1(T), col_e2(T);
    for (int comp = 0; comp < 3; ++comp) {
      std::vector<double>& field = field_of(comp);
      SurfaceCache& cache = gp_cache[comp];
      for (int i = 0; i < n; ++i) {
        Tuner& tn = t_field[static_cast<std::size_t>(comp) * n + i];
        const double cur = field[i];
        const double delta = tn.step() * normal_sample(rng);
        const double cand = cur + delta;
        // prior change from the cached precision form
        const double dprior =
            -(delta * cache.g(i) + 0.5 * delta * delta * cache.prec(i, i));
        if (cfg.prior_only) {
          field[i] = cand;
          if (mh_accept(dprior, tn)) {
            cache.g += delta * cache.prec.col(i);
          } else {
            field[i] = cur;
          }
          continue;
        }
        const bool mm_interior = cfg.kind == ModelKind::Mm &&
                                 st.q > kQBoundaryEps && st.q < 1.0 - kQBoundaryEps;
        for (int t = 0; t < T; ++t) old_obs[t] = obs_ll(t, i);
        field[i] = cand;
        lsig[i] = st.gev.log_sigma[i];
        const GevParams p{st.gev.mu[i], std::exp(st.gev.log_sigma[i]), st.gev.xi[i]};
        for (int t = 0; t < T; ++t) {
          const std::size_t idx = static_cast<std::size_t>(t) * n + i;
          col_logx[t] = logx[idx];
          col_E[t] = E[idx];
          if (mm_interior) {
            col_e1[t] = e1[idx];
            col_e2[t] = e2[idx];
          }
          const double lx = gev_log_residual(data.at(t, i), p);
          logx[idx] = lx;
          E[idx] = std::exp(-lx * ia);
          if (mm_interior) {
            e1[idx] = std::exp(lq1 - lx * k1);
            e2[idx] = std::exp(lq2 - lx * k2);
          }
        }
        double dll = 0.0;
        for (int t = 0; t < T; ++t) dll += obs_ll(t, i) - old_obs[t];
        if (mh_accept(dll + dprior, tn)) {
          for (int t = 0; t < T; ++t) {
            const double d = obs_ll(t, i) - old_obs[t];
            ll_time[t] += d;
          }
          ll_total += dll;
          cache.g += delta * cache.prec.col(i);
        } else {
          field[i] = cur;
          lsig[i] = st.gev.log_sigma[i];
          for (int t = 0; t < T; ++t) {
            const std::size_t idx = static_cast<std::size_t>(t) * n + i;
            logx[idx] = col_logx[t];
            E[idx] = col_E[t];
            if (mm_interior) {
              e1[idx] = col_e1[t];
              e2[idx] = col_e2[t];
            }
          }
        }
      }
      update_gp_hypers(comp);
    }
  }

  void update_gp_hypers(int comp) {
    GpHyper& h = hyper_of(comp);
    const std::vector<double>& f = field_of(comp);
    SurfaceCache& cache = gp_cache[comp];

    // beta: conjugate normal draw against prior N(0, gp_beta_sd^2 I)
    Eigen::MatrixXd X(n, 3);
    for (int i = 0; i < n; ++i) {
      X(i, 0) = 1.0;
      X(i, 1) = data.sites[i].x;
      X(i, 2) = data.sites[i].y;
    }
    Eigen::VectorXd fv(n);
    for (int i = 0; i < n; ++i) fv(i) = f[i];
    const Eigen::MatrixXd XtP = X.transpose() * cache.prec;
    Eigen::MatrixXd vinv = XtP * X;
    vinv.diagonal().array() += 1.0 / (cfg.gp_beta_sd * cfg.gp_beta_sd);
    const Eigen::MatrixXd vbeta = vinv.inverse();
    const Eigen::VectorXd mbeta = vbeta * (XtP * fv);
    Eigen::LLT<Eigen::MatrixXd> lv(vbeta);
    Eigen::VectorXd z(3);
    for (int a = 0; a < 3; ++a) z(a) = normal_sample(rng);
    const Eigen::VectorXd beta = mbeta + lv.matrixL() * z;
    for (int a = 0; a < 3; ++a) h.beta[a] = beta(a);

    // variance: conjugate inverse-gamma draw (prec scales as 1/variance)
    Eigen::VectorXd r(n);
    for (int i = 0; i < n; ++i) r(i) = f[i] - gp_mean(data.sites[i], h);
    const double quad = h.variance * (r.transpose() * cache.prec * r)(0);
    const double shape = cfg.gp_variance_shape + 0.5 * n;
    const double rate = cfg.gp_variance_rate + 0.5 * quad;
    const double var_new = rate / gamma_sample(shape, rng);
    cache.prec *= h.variance / var_new;
    h.variance = var_new;

    // range: log random walk against a half-normal prior
    Tuner& tn = t_range[comp];
    const double cur = h.range;
    const double cand = cur * std::exp(tn.step() * normal_sample(rng));
    GpHyper hc = h;
    hc.range = cand;
    const double lp_cur = gp_logprior(f, data.sites, h);
    const double lp_cand = gp_logprior(f, data.sites, hc);
    const double prior_cur = -0.5 * (cur / gp_range_scale_eff) * (cur / gp_range_scale_eff);
    const double prior_cand =
        -0.5 * (cand / gp_range_scale_eff) * (cand / gp_range_scale_eff);
    const double ratio = lp_cand - lp_cur + prior_cand - prior_cur +
                         std::log(cand) - std::log(cur);
    if (mh_accept(ratio, tn)) h.range = cand;

    refresh_gp_cache(comp);
  }

  // --- tau

  void update_tau() {
    if (!std::isnan(cfg.fix_tau)) return;
    Tuner& tn = t_tau;
    const double cur = st.tau;
    const double cand = cur * std::exp(tn.step() * normal_sample(rng));
    const double dprior = cfg.priors.logprior_tau(cand) - cfg.priors.logprior_tau(cur);
    const double jac = std::log(cand) - std::log(cur);
    if (cfg.prior_only) {
      if (mh_accept(dprior + jac, tn)) st.tau = cand;
      return;
    }
    WeightMatrix wcand;
    try {
      wcand = kernel_weights(data.sites, cfg.knots, cand);
    } catch (const NumericError&) {
      mh_accept(-kInf, tn);  // degenerate bandwidth proposal
      return;
    }
    compute_wa(wcand, st.alpha, s_Wa);
    if (with_hevp) compute_stil(st.A, s_Wa, s_Stil);
    if (with_atoms) compute_shat(st.gamma, s_Wa, s_Shat);
    const double ll_new = total_ll_sums(s_Stil, s_Shat);
    const double ratio = ll_new - ll_total + dprior + jac;
    if (mh_accept(ratio, tn)) {
      st.tau = cand;
      W = std::move(wcand);
      std::swap(Wa, s_Wa);
      if (with_hevp) std::swap(Stil, s_Stil);
      if (with_atoms) std::swap(Shat, s_Shat);
      refresh_ll();
    }
  }

  // total loglik under candidate spatial sums (tau/alpha moves share this;
  // alpha moves also pass candidate exponential caches and scalars)
  double total_ll_sums(const std::vector<double>& stil,
                       const std::vector<double>& shat) const {
    double total = 0.0;
    for (int t = 0; t < T; ++t) {
      for (int i = 0; i < n; ++i) {
        const std::size_t idx = static_cast<std::size_t>(t) * n + i;
        const double lx = logx[idx];
        if (!std::isfinite(lx)) return -kInf;
        double ll;
        switch (cfg.kind) {
          case ModelKind::Hevp:
            ll = comp_ll(stil[idx], E[idx], lx, i);
            break;
          case ModelKind::Sb:
            ll = comp_ll(shat[static_cast<std::size_t>(st.labels[t]) * n + i], E[idx],
                         lx, i);
            break;
          default: {
            if (st.q >= 1.0 - kQBoundaryEps) {
              ll = comp_ll(stil[idx], E[idx], lx, i);
            } else {
              const double sh = shat[static_cast<std::size_t>(st.labels[t]) * n + i];
              ll = st.q <= kQBoundaryEps
                       ? comp_ll(sh, E[idx], lx, i)
                       : comp_ll_mm(stil[idx], sh, lx, e1[idx], e2[idx], i);
            }
          }
        }
        total += ll;
      }
    }
    return total;
  }

  // --- alpha

  double latent_ps_logprior(double alpha) const {
    double s = 0.0;
    if (with_hevp) {
      for (std::size_t idx = 0; idx < st.A.size(); ++idx) {
        s += ps_aux_joint_logdensity({st.A[idx], st.B[idx]}, alpha);
      }
    }
    if (with_atoms) {
      for (std::size_t idx = 0; idx < st.gamma.size(); ++idx) {
        s += ps_aux_joint_logdensity({st.gamma[idx], st.lambda[idx]}, alpha);
      }
    }
    return s;
  }

  void update_alpha() {
    if (!std::isnan(cfg.fix_alpha)) return;
    Tuner& tn = t_alpha;
    const double cur = st.alpha;
    const double logit = std::log(cur) - std::log1p(-cur);
    const double cand_logit = logit + tn.step() * normal_sample(rng);
    const double cand = 1.0 / (1.0 + std::exp(-cand_logit));
    if (!(cand > 0.0 && cand < 1.0)) {  // logit overflow far in a tail
      mh_accept(-kInf, tn);
      return;
    }
    const double jac = std::log(cand) + std::log1p(-cand) - std::log(cur) -
                       std::log1p(-cur);
    const double dprior = latent_ps_logprior(cand) - latent_ps_logprior(cur);
    if (cfg.prior_only) {
      if (mh_accept(dprior + jac, tn)) st.alpha = cand;
      return;
    }
    compute_wa(W, cand, s_Wa);
    if (with_hevp) compute_stil(st.A, s_Wa, s_Stil);
    if (with_atoms) compute_shat(st.gamma, s_Wa, s_Shat);
    compute_exp_caches(logx, cand, st.q, s_E, s_e1, s_e2);

    // candidate-scalar likelihood pass
    const double alpha_saved = st.alpha;
    st.alpha = cand;
    refresh_scalars();
    std::swap(E, s_E);
    std::swap(e1, s_e1);
    std::swap(e2, s_e2);
    const double ll_new = total_ll_sums(s_Stil, s_Shat);
    const double ratio = ll_new - ll_total + dprior + jac;
    if (mh_accept(ratio, tn)) {
      std::swap(Wa, s_Wa);
      if (with_hevp) std::swap(Stil, s_Stil);
      if (with_atoms) std::swap(Shat, s_Shat);
      refresh_ll();
    } else {
      st.alpha = alpha_saved;
      refresh_scalars();
      std::swap(E, s_E);
      std::swap(e1, s_e1);
      std::swap(e2, s_e2);
    }
  }

  // --- HEVP latents A, B

  void update_A_B() {
    if (!with_hevp) return;
    const bool data_term = !cfg.prior_only &&
                           !(cfg.kind == ModelKind::Mm && st.q <= kQBoundaryEps);
    std::vector<double> snew(n);
    for (int t = 0; t < T; ++t) {
      double* srow = cfg.prior_only ? nullptr : &Stil[static_cast<std::size_t>(t) * n];
      for (int l = 0; l < L; ++l) {
        const std::size_t idx = static_cast<std::size_t>(t) * L + l;
        Tuner& tn = t_A[idx];
        const double cur = st.A[idx];
        const double cand = cur * std::exp(tn.step() * normal_sample(rng));
        double dll = 0.0;
        if (data_term) {
          const double d = cand - cur;
          if (cfg.kind == ModelKind::Hevp || st.q >= 1.0 - kQBoundaryEps) {
            for (int i = 0; i < n; ++i) {
              const double wa = Wa[static_cast<std::size_t>(i) * L + l];
              const double s_new = std::max(srow[i] + d * wa, kSumFloor);
              snew[i] = s_new;
              dll += std::log(s_new) - std::log(srow[i]) -
                     d * wa * E[static_cast<std::size_t>(t) * n + i];
            }
          } else {
            for (int i = 0; i < n; ++i) {
              const double wa = Wa[static_cast<std::size_t>(i) * L + l];
              const double s_new = std::max(srow[i] + d * wa, kSumFloor);
              snew[i] = s_new;
              const std::size_t oidx = static_cast<std::size_t>(t) * n + i;
              const double sh = Shat[static_cast<std::size_t>(st.labels[t]) * n + i];
              dll += comp_ll_mm(s_new, sh, logx[oidx], e1[oidx], e2[oidx], i) -
                     comp_ll_mm(srow[i], sh, logx[oidx], e1[oidx], e2[oidx], i);
            }
          }
        }
        const double dprior =
            ps_aux_joint_logdensity({cand, st.B[idx]}, st.alpha) -
            ps_aux_joint_logdensity({cur, st.B[idx]}, st.alpha);
        const double jac = std::log(cand) - std::log(cur);
        if (mh_accept(dll + dprior + jac, tn)) {
          st.A[idx] = cand;
          if (data_term) {
            std::copy(snew.begin(), snew.end(), srow);
          } else if (!cfg.prior_only) {
            // q pinned at the SB boundary: keep sums coherent anyway
            const double d = cand - cur;
            for (int i = 0; i < n; ++i) {
              srow[i] = std::max(srow[i] + d * Wa[static_cast<std::size_t>(i) * L + l],
                                 kSumFloor);
            }
          }
          if (data_term) {
            ll_time[t] += dll;
            ll_total += dll;
          }
        }
      }
    }
    // auxiliary B: prior-only truncated-normal walk
    for (std::size_t idx = 0; idx < st.B.size(); ++idx) {
      Tuner& tn = t_B[idx];
      const double cur = st.B[idx];
      const double cand = truncated_normal_sample(cur, tn.step(), 0.0, 1.0, rng);
      const double a_here = st.A[idx];
      const double ratio =
          ps_aux_joint_logdensity({a_here, cand}, st.alpha) -
          ps_aux_joint_logdensity({a_here, cur}, st.alpha) +
          truncated_normal_logpdf(cur, cand, tn.step(), 0.0, 1.0) -
          truncated_normal_logpdf(cand, cur, tn.step(), 0.0, 1.0);
      if (mh_accept(ratio, tn)) st.B[idx] = cand;
    }
  }

  // --- SB atoms gamma, lambda

  void update_gamma_lambda() {
    if (!with_atoms) return;
    rebuild_members();
    const bool data_term = !cfg.prior_only &&
                           !(cfg.kind == ModelKind::Mm && st.q >= 1.0 - kQBoundaryEps);
    std::vector<double> snew(n);
    std::vector<double> dll_t;
    for (int j = 0; j < J; ++j) {
      double* srow = cfg.prior_only ? nullptr : &Shat[static_cast<std::size_t>(j) * n];
      for (int l = 0; l < L; ++l) {
        const std::size_t idx = static_cast<std::size_t>(j) * L + l;
        Tuner& tn = t_gamma[idx];
        const double cur = st.gamma[idx];
        const double cand = cur * std::exp(tn.step() * normal_sample(rng));
        double dll = 0.0;
        dll_t.assign(members[j].size(), 0.0);
        if (data_term && !members[j].empty()) {
          const double d = cand - cur;
          for (int i = 0; i < n; ++i) {
            snew[i] = std::max(srow[i] + d * Wa[static_cast<std::size_t>(i) * L + l],
                               kSumFloor);
          }
          const bool sb_form = cfg.kind == ModelKind::Sb || st.q <= kQBoundaryEps;
          for (std::size_t mte = 0; mte < members[j].size(); ++mte) {
            const int t = members[j][mte];
            double dt = 0.0;
            if (sb_form) {
              for (int i = 0; i < n; ++i) {
                const double wa = Wa[static_cast<std::size_t>(i) * L + l];
                dt += std::log(snew[i]) - std::log(srow[i]) -
                      d * wa * E[static_cast<std::size_t>(t) * n + i];
              }
            } else {
              for (int i = 0; i < n; ++i) {
                const std::size_t oidx = static_cast<std::size_t>(t) * n + i;
                dt += comp_ll_mm(Stil[oidx], snew[i], logx[oidx], e1[oidx], e2[oidx], i) -
                      comp_ll_mm(Stil[oidx], srow[i], logx[oidx], e1[oidx], e2[oidx], i);
              }
            }
            dll_t[mte] = dt;
            dll += dt;
          }
        } else if (!cfg.prior_only) {
          // empty cluster (or hat component pinned off): prior-only move, but
          // the spatial sums stay coherent on accept
          const double d = cand - cur;
          for (int i = 0; i < n; ++i) {
            snew[i] = std::max(srow[i] + d * Wa[static_cast<std::size_t>(i) * L + l],
                               kSumFloor);
          }
        }
        const double dprior =
            ps_aux_joint_logdensity({cand, st.lambda[idx]}, st.alpha) -
            ps_aux_joint_logdensity({cur, st.lambda[idx]}, st.alpha);
        const double jac = std::log(cand) - std::log(cur);
        if (mh_accept(dll + dprior + jac, tn)) {
          st.gamma[idx] = cand;
          if (!cfg.prior_only) std::copy(snew.begin(), snew.end(), srow);
          if (data_term) {
            for (std::size_t mte = 0; mte < members[j].size(); ++mte) {
              ll_time[members[j][mte]] += dll_t[mte];
            }
            ll_total += dll;
          }
        }
      }
    }
    for (std::size_t idx = 0; idx < st.lambda.size(); ++idx) {
      Tuner& tn = t_lambda[idx];
      const double cur = st.lambda[idx];
      const double cand = truncated_normal_sample(cur, tn.step(), 0.0, 1.0, rng);
      const double g_here = st.gamma[idx];
      const double ratio =
          ps_aux_joint_logdensity({g_here, cand}, st.alpha) -
          ps_aux_joint_logdensity({g_here, cur}, st.alpha) +
          truncated_normal_logpdf(cur, cand, tn.step(), 0.0, 1.0) -
          truncated_normal_logpdf(cand, cur, tn.step(), 0.0, 1.0);
      if (mh_accept(ratio, tn)) st.lambda[idx] = cand;
    }
  }

  // conditional label log-weights for replicate t (likelihood part omits
  // atom-independent terms; prior part is log pi)
  void label_weights_for(int t, std::vector<double>& logw,
                         const std::vector<double>& sl, bool sb_form) const {
    const double* erow = &E[static_cast<std::size_t>(t) * n];
    for (int j = 0; j < J; ++j) {
      if (!(st.pi[j] > 0.0)) {
        logw[j] = -kInf;
        continue;
      }
      double s = std::log(st.pi[j]);
      const double* shrow = &Shat[static_cast<std::size_t>(j) * n];
      if (sb_form) {
        double dot = 0.0;
        for (int i = 0; i < n; ++i) dot += shrow[i] * erow[i];
        s += sl[j] - dot;
      } else {
        for (int i = 0; i < n; ++i) {
          const std::size_t oidx = static_cast<std::size_t>(t) * n + i;
          s += comp_ll_mm(Stil[oidx], shrow[i], logx[oidx], e1[oidx], e2[oidx], i);
        }
      }
      logw[j] = s;
    }
  }

  std::vector<double> atom_log_sums() const {
    std::vector<double> sl(J, 0.0);
    for (int j = 0; j < J; ++j) {
      double s = 0.0;
      for (int i = 0; i < n; ++i) {
        s += std::log(Shat[static_cast<std::size_t>(j) * n + i]);
      }
      sl[j] = s;
    }
    return sl;
  }

  // --- cluster labels (exact categorical Gibbs)

  void update_labels() {
    if (!with_atoms) return;
    std::vector<double> logw(J);
    if (cfg.prior_only) {
      for (int t = 0; t < T; ++t) {
        for (int j = 0; j < J; ++j) {
          logw[j] = st.pi[j] > 0.0 ? std::log(st.pi[j]) : -kInf;
        }
        st.labels[t] = categorical_sample_log(logw, rng);
      }
      return;
    }
    const bool sb_form = cfg.kind == ModelKind::Sb || st.q <= kQBoundaryEps;
    const bool hevp_form = cfg.kind == ModelKind::Mm && st.q >= 1.0 - kQBoundaryEps;
    if (hevp_form) {
      // the SB component carries no likelihood at the q=1 boundary
      for (int t = 0; t < T; ++t) {
        for (int j = 0; j < J; ++j) {
          logw[j] = st.pi[j] > 0.0 ? std::log(st.pi[j]) : -kInf;
        }
        st.labels[t] = categorical_sample_log(logw, rng);
      }
      return;
    }
    const std::vector<double> sl =
        sb_form ? atom_log_sums() : std::vector<double>(J, 0.0);
    for (int t = 0; t < T; ++t) {
      label_weights_for(t, logw, sl, sb_form);
      double best = -kInf;
      for (double w : logw) best = std::max(best, w);
      if (!std::isfinite(best)) continue;  // transient invalid state
      const int pick = categorical_sample_log(logw, rng);
      if (pick != st.labels[t]) {
        st.labels[t] = pick;
        const double lt = ll_for_time(t);
        ll_total += lt - ll_time[t];
        ll_time[t] = lt;
      }
    }
  }

  // --- stick weights (conjugate beta draws)

  void update_sticks() {
    if (!with_atoms) return;
    std::vector<int> count(J, 0);
    for (int t = 0; t < T; ++t) count[st.labels[t]]++;
    int beyond = T;
    for (int j = 0; j < J; ++j) {
      beyond -= count[j];
      if (j == J - 1) {
        st.v[j] = 1.0;
      } else {
        st.v[j] = beta_sample(1.0 + count[j], cfg.nu + beyond, rng);
      }
    }
    recompute_pi();
  }

  // --- mixing exponent q (MM)

  void update_q() {
    if (cfg.kind != ModelKind::Mm || !std::isnan(cfg.fix_q)) return;
    Tuner& tn = t_q;
    const double cur = st.q;
    const double cand = truncated_normal_sample(cur, tn.step(), 0.0, 1.0, rng);
    const double asym = truncated_normal_logpdf(cur, cand, tn.step(), 0.0, 1.0) -
                        truncated_normal_logpdf(cand, cur, tn.step(), 0.0, 1.0);
    if (cfg.prior_only) {
      if (mh_accept(asym, tn)) st.q = cand;
      return;
    }
    compute_exp_caches(logx, st.alpha, cand, s_E, s_e1, s_e2);
    const double q_saved = st.q;
    st.q = cand;
    refresh_scalars();
    std::swap(E, s_E);
    std::swap(e1, s_e1);
    std::swap(e2, s_e2);
    const double ll_new = total_ll_sums(Stil, Shat);
    const double ratio = ll_new - ll_total + asym;
    if (mh_accept(ratio, tn)) {
      refresh_ll();
    } else {
      st.q = q_saved;
      refresh_scalars();
      std::swap(E, s_E);
      std::swap(e1, s_e1);
      std::swap(e2, s_e2);
    }
  }

  // Joint (q, latent-dilation) move: a plain random walk on q is nearly
  // reducible because the adapted latents pin the components' effective
  // scales m~ = q theta~^q and m^ = (1-q) theta^^(1-q).  Propose q' and
  // rescale A by c~ and gamma by c^ so both scales are (approximately at
  // theta = 1) preserved; the midpoint normalization makes the map an exact
  // involution, so this is valid Metropolis with a dilation Jacobian.
  void update_q_scaled() {
    if (cfg.kind != ModelKind::Mm || !std::isnan(cfg.fix_q)) return;
    Tuner& tn = t_qscale;
    const double cur = st.q;
    const double cand = truncated_normal_sample(cur, tn.step(), 0.0, 1.0, rng);
    if (cand <= kQBoundaryEps || cand >= 1.0 - kQBoundaryEps ||
        cur <= kQBoundaryEps || cur >= 1.0 - kQBoundaryEps) {
      // boundary regions are served by the plain walk
      mh_accept(-kInf, tn);
      return;
    }
    const double asym = truncated_normal_logpdf(cur, cand, tn.step(), 0.0, 1.0) -
                        truncated_normal_logpdf(cand, cur, tn.step(), 0.0, 1.0);
    const double qbar = 0.5 * (cur + cand);
    const double log_ct = (std::log(cur) - std::log(cand)) / (st.alpha * qbar);
    const double log_ch =
        (std::log1p(-cur) - std::log1p(-cand)) / (st.alpha * (1.0 - qbar));
    const double ct = std::exp(log_ct);
    const double ch = std::exp(log_ch);
    if (!std::isfinite(ct) || !std::isfinite(ch) || ct <= 0.0 || ch <= 0.0) {
      mh_accept(-kInf, tn);
      return;
    }

    // latent-prior change plus dilation Jacobian
    double dprior = 0.0;
    for (std::size_t idx = 0; idx < st.A.size(); ++idx) {
      dprior += ps_aux_joint_logdensity({ct * st.A[idx], st.B[idx]}, st.alpha) -
                ps_aux_joint_logdensity({st.A[idx], st.B[idx]}, st.alpha);
    }
    for (std::size_t idx = 0; idx < st.gamma.size(); ++idx) {
      dprior += ps_aux_joint_logdensity({ch * st.gamma[idx], st.lambda[idx]}, st.alpha) -
                ps_aux_joint_logdensity({st.gamma[idx], st.lambda[idx]}, st.alpha);
    }
    const double jac = static_cast<double>(st.A.size()) * log_ct +
                       static_cast<double>(st.gamma.size()) * log_ch;

    if (cfg.prior_only) {
      if (mh_accept(dprior + jac + asym, tn)) {
        for (double& a : st.A) a *= ct;
        for (double& g : st.gamma) g *= ch;
        st.q = cand;
      }
      return;
    }

    s_Stil.resize(Stil.size());
    s_Shat.resize(Shat.size());
    for (std::size_t k = 0; k < Stil.size(); ++k) {
      s_Stil[k] = std::max(ct * Stil[k], kSumFloor);
    }
    for (std::size_t k = 0; k < Shat.size(); ++k) {
      s_Shat[k] = std::max(ch * Shat[k], kSumFloor);
    }
    compute_exp_caches(logx, st.alpha, cand, s_E, s_e1, s_e2);
    const double q_saved = st.q;
    st.q = cand;
    refresh_scalars();
    std::swap(E, s_E);
    std::swap(e1, s_e1);
    std::swap(e2, s_e2);
    const double ll_new = total_ll_sums(s_Stil, s_Shat);
    const double ratio = ll_new - ll_total + dprior + jac + asym;
    if (mh_accept(ratio, tn)) {
      for (double& a : st.A) a *= ct;
      for (double& g : st.gamma) g *= ch;
      std::swap(Stil, s_Stil);
      std::swap(Shat, s_Shat);
      refresh_ll();
    } else {
      st.q = q_saved;
      refresh_scalars();
      std::swap(E, s_E);
      std::swap(e1, s_e1);
      std::swap(e2, s_e2);
    }
  }

  // ------------------------------------------------------------------ sweep

  void sweep() {
    refresh_scalars();
    if (!cfg.prior_only) refresh_sums();
    if (cfg.gev_mode == SurfaceMode::Constant || cfg.fix_gev) {
      if (!cfg.fix_gev) update_gev_constant();
    } else {
      update_gev_gp();
    }
    update_tau();
    update_alpha();
    update_A_B();
    update_gamma_lambda();
    update_labels();
    update_sticks();
    update_q();
    update_q_scaled();
  }

  void store_draw() {
    PosteriorDraw d;
    d.iteration = iter_done;
    d.loglik = ll_total;
    d.alpha = st.alpha;
    d.tau = st.tau;
    if (cfg.kind == ModelKind::Mm) {
      d.q = st.q;
      d.delta = delta_indicator(st.q, st.alpha) ? 1 : 0;
    }
    if (cfg.gev_mode == SurfaceMode::Constant) {
      d.mu = {st.gev.mu[0]};
      d.log_sigma = {st.gev.log_sigma[0]};
      d.xi = {st.gev.xi[0]};
    } else {
      d.mu = st.gev.mu;
      d.log_sigma = st.gev.log_sigma;
      d.xi = st.gev.xi;
      d.gp_hyper.reserve(15);
      for (const GpHyper* h : {&st.hyper_mu, &st.hyper_logsigma, &st.hyper_xi}) {
        d.gp_hyper.insert(d.gp_hyper.end(), h->beta.begin(), h->beta.end());
        d.gp_hyper.push_back(h->variance);
        d.gp_hyper.push_back(h->range);
      }
    }
    if (with_atoms) {
      d.pi = st.pi;
      d.gamma = st.gamma;
    }
    out.draws.push_back(std::move(d));
  }

  void finalize_acceptance() {
    out.acceptance.clear();
    auto push_scalar = [&](const char* name, const Tuner& t) {
      out.acceptance.push_back({name, t.props, t.acc, t.step()});
    };
    auto push_group = [&](const char* name, const std::vector<Tuner>& ts) {
      if (ts.empty()) return;
      AcceptanceRecord r{name, 0, 0, 0.0};
      for (const Tuner& t : ts) {
        r.proposals += t.props;
        r.accepted += t.acc;
        r.mean_step += t.step();
      }
      r.mean_step /= static_cast<double>(ts.size());
      out.acceptance.push_back(std::move(r));
    };
    if (!cfg.fix_gev && cfg.gev_mode == SurfaceMode::Constant) {
      push_scalar("mu", t_gev[0]);
      push_scalar("log_sigma", t_gev[1]);
      push_scalar("xi", t_gev[2]);
    }
    if (cfg.gev_mode == SurfaceMode::Gp) {
      push_group("gev_fields", t_field);
      push_scalar("range_mu", t_range[0]);
      push_scalar("range_log_sigma", t_range[1]);
      push_scalar("range_xi", t_range[2]);
    }
    if (std::isnan(cfg.fix_tau)) push_scalar("tau", t_tau);
    if (std::isnan(cfg.fix_alpha)) push_scalar("alpha", t_alpha);
    push_group("A", t_A);
    push_group("B", t_B);
    push_group("gamma", t_gamma);
    push_group("lambda", t_lambda);
    if (cfg.kind == ModelKind::Mm && std::isnan(cfg.fix_q)) {
      push_scalar("q", t_q);
      push_scalar("q_scaled", t_qscale);
    }
  }

  // unnormalized joint log density: data likelihood plus every prior factor
  double joint_logdens() const {
    double lp = cfg.prior_only ? 0.0 : ll_total;
    if (with_hevp) {
      for (std::size_t idx = 0; idx < st.A.size(); ++idx) {
        lp += ps_aux_joint_logdensity({st.A[idx], st.B[idx]}, st.alpha);
      }
    }
    if (with_atoms) {
      for (std::size_t idx = 0; idx < st.gamma.size(); ++idx) {
        lp += ps_aux_joint_logdensity({st.gamma[idx], st.lambda[idx]}, st.alpha);
      }
      for (int t = 0; t < T; ++t) {
        lp += st.pi[st.labels[t]] > 0.0 ? std::log(st.pi[st.labels[t]]) : -kInf;
      }
      for (int j = 0; j + 1 < J; ++j) {
        // Beta(1, nu) log density
        lp += std::log(cfg.nu) + (cfg.nu - 1.0) * std::log1p(-st.v[j]);
      }
    }
    if (cfg.gev_mode == SurfaceMode::Constant) {
      lp += constant_prior(0, st.gev.mu[0]) + constant_prior(1, st.gev.log_sigma[0]) +
            constant_prior(2, st.gev.xi[0]);
    } else {
      lp += gp_logprior(st.gev.mu, data.sites, st.hyper_mu);
      lp += gp_logprior(st.gev.log_sigma, data.sites, st.hyper_logsigma);
      lp += gp_logprior(st.gev.xi, data.sites, st.hyper_xi);
    }
    lp += cfg.priors.logprior_tau(st.tau);
    lp += cfg.priors.logprior_alpha(st.alpha);
    if (cfg.kind == ModelKind::Mm) lp += cfg.priors.logprior_q(st.q);
    return lp;
  }

  void adopt_state(const ModelState& other) {
    st = other;
    refresh_scalars();
    if (!cfg.prior_only) {
      W = kernel_weights(data.sites, cfg.knots, st.tau);
      compute_wa(W, st.alpha, Wa);
      if (with_hevp) compute_stil(st.A, Wa, Stil);
      if (with_atoms) compute_shat(st.gamma, Wa, Shat);
      compute_logx(st.gev, logx, lsig);
      compute_exp_caches(logx, st.alpha, st.q, E, e1, e2);
      refresh_ll();
    }
    if (cfg.gev_mode == SurfaceMode::Gp) {
      for (int c = 0; c < 3; ++c) refresh_gp_cache(c);
    }
  }

  // Two short pinned-q excursions; the one whose component fits the data
  // better (mean conditional log-likelihood over the tail of the excursion)
  // seeds the real chain.  Joint-density comparisons are useless here: they
  // are dominated by whichever latent block sits idle at prior-typical
  // values, not by fit.
  void explore_initial_basin() {
    const int sweeps = std::min(600, std::max(100, cfg.burnin / 3));
    const int tail = std::min(20, sweeps / 5);
    double best = -kInf;
    ModelState winner;
    for (double q0 : {0.85, 0.15}) {
      ChainConfig probe = cfg;
      probe.fix_q = q0;
      probe.iterations = sweeps + 1;
      probe.burnin = sweeps;
      probe.checkpoint_every = 0;
      probe.explore_init = false;
      probe.validate = false;
      probe.seed = cfg.seed ^ (q0 > 0.5 ? 0x9E3779B97F4A7C15ULL : 0xC2B2AE3D27D4EB4FULL);
      Chain scout(probe, data);
      double sum = 0.0;
      for (int k = 0; k < sweeps; ++k) {
        scout.sweep_once();
        if (k >= sweeps - tail) sum += scout.loglik();
      }
      const double mean_ll = sum / tail;
      if (mean_ll > best) {
        best = mean_ll;
        winner = scout.state();
      }
    }
    if (std::isfinite(best)) adopt_state(winner);
  }

  void run_all(int stop_at) {
    if (iter_done == 0 && cfg.explore_init && cfg.kind == ModelKind::Mm &&
        std::isnan(cfg.fix_q) && !cfg.prior_only && !cfg.init_from_prior) {
      explore_initial_basin();
    }
    const int target = std::min(stop_at, cfg.iterations);
    while (iter_done < target) {
      adapting = iter_done < cfg.burnin;
      sweep();
      if (cfg.validate) {
        validate_state(st, cfg, T, n);
        if (!cfg.prior_only) {
          const double full = ::maxmix::loglik(st, data, cfg);
          if (std::fabs(full - ll_total) >
              1e-10 * std::max(1.0, std::fabs(full))) {
            throw NumericError("loglik cache drifted from full recomputation");
          }
        }
      }
      ++iter_done;
      if (iter_done > cfg.burnin &&
          (iter_done - 1 - cfg.burnin) % cfg.thinning == 0) {
        store_draw();
      }
      if (!cfg.quiet && iter_done % 500 == 0) {
        std::cerr << "iter " << iter_done << " loglik " << ll_total << "\n";
      }
      if (cfg.checkpoint_every > 0 && !cfg.checkpoint_path.empty() &&
          iter_done % cfg.checkpoint_every == 0) {
        save(cfg.checkpoint_path);
      }
    }
    if (iter_done >= cfg.iterations) finalize_acceptance();
  }

  // ------------------------------------------------------------- checkpoint

  template <typename Tv>
  static void put(std::ofstream& os, const Tv& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(Tv));
  }
  static void put_vec(std::ofstream& os, const std::vector<double>& v) {
    put(os, static_cast<std::uint64_t>(v.size()));
    os.write(reinterpret_cast<const char*>(v.data()),
             static_cast<std::streamsize>(v.size() * sizeof(double)));
  }
  static void put_ivec(std::ofstream& os, const std::vector<int>& v) {
    put(os, static_cast<std::uint64_t>(v.size()));
    os.write(reinterpret_cast<const char*>(v.data()),
             static_cast<std::streamsize>(v.size() * sizeof(int)));
  }
  static void put_tuners(std::ofstream& os, const std::vector<Tuner>& v) {
    put(os, static_cast<std::uint64_t>(v.size()));
    os.write(reinterpret_cast<const char*>(v.data()),
             static_cast<std::streamsize>(v.size() * sizeof(Tuner)));
  }

  template <typename Tv>
  static void get(std::ifstream& is, Tv& v) {
    is.read(reinterpret_cast<char*>(&v), sizeof(Tv));
  }
  static void get_vec(std::ifstream& is, std::vector<double>& v) {
    std::uint64_t size = 0;
    get(is, size);
    v.resize(size);
    is.read(reinterpret_cast<char*>(v.data()),
            static_cast<std::streamsize>(size * sizeof(double)));
  }
  static void get_ivec(std::ifstream& is, std::vector<int>& v) {
    std::uint64_t size = 0;
    get(is, size);
    v.resize(size);
    is.read(reinterpret_cast<char*>(v.data()),
            static_cast<std::streamsize>(size * sizeof(int)));
  }
  static void get_tuners(std::ifstream& is, std::vector<Tuner>& v) {
    std::uint64_t size = 0;
    get(is, size);
    v.resize(size);
    is.read(reinterpret_cast<char*>(v.data()),
            static_cast<std::streamsize>(size * sizeof(Tuner)));
  }

  std::uint64_t data_digest() const {
    return fnv1a64(data.y.data(), data.y.size() * sizeof(double));
  }

  void save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw DataError("cannot open checkpoint file for writing: " + path);
    put(os, kCheckpointMagic);
    put(os, static_cast<std::int32_t>(cfg.kind));
    put(os, static_cast<std::int32_t>(cfg.gev_mode));
    put(os, static_cast<std::int32_t>(cfg.prior_only ? 1 : 0));
    put(os, static_cast<std::int32_t>(cfg.iterations));
    put(os, static_cast<std::int32_t>(cfg.burnin));
    put(os, static_cast<std::int32_t>(cfg.thinning));
    put(os, static_cast<std::int32_t>(T));
    put(os, static_cast<std::int32_t>(n));
    put(os, static_cast<std::int32_t>(L));
    put(os, static_cast<std::int32_t>(J));
    put(os, cfg.seed);
    put(os, cfg.nu);
    put(os, cfg.target_accept);
    put(os, cfg.adapt_window);
    put(os, cfg.fix_alpha);
    put(os, cfg.fix_tau);
    put(os, cfg.fix_q);
    put(os, static_cast<std::int32_t>(cfg.fix_gev ? 1 : 0));
    put(os, cfg.priors.mu_mean);
    put(os, cfg.priors.mu_sd);
    put(os, cfg.priors.logsigma_mean);
    put(os, cfg.priors.logsigma_sd);
    put(os, cfg.priors.xi_mean);
    put(os, cfg.priors.xi_sd);
    put(os, cfg.priors.tau_shape);
    put(os, cfg.priors.tau_rate);
    put(os, cfg.gp_smoothness);
    put(os, cfg.gp_variance_shape);
    put(os, cfg.gp_variance_rate);
    put(os, cfg.gp_range_scale);
    put(os, cfg.gp_beta_sd);
    put(os, data_digest());
    put(os, rng.key());
    put(os, rng.counter());
    put(os, static_cast<std::int32_t>(iter_done));
    // knots
    put(os, static_cast<std::uint64_t>(cfg.knots.size()));
    for (const Site& s : cfg.knots.knots) {
      put(os, s.x);
      put(os, s.y);
    }
    // state
    put_vec(os, st.gev.mu);
    put_vec(os, st.gev.log_sigma);
    put_vec(os, st.gev.xi);
    put(os, st.tau);
    put(os, st.alpha);
    put(os, st.q);
    put_vec(os, st.A);
    put_vec(os, st.B);
    put_vec(os, st.gamma);
    put_vec(os, st.lambda);
    put_ivec(os, st.labels);
    put_vec(os, st.v);
    put_vec(os, st.pi);
    for (const GpHyper* h : {&st.hyper_mu, &st.hyper_logsigma, &st.hyper_xi}) {
      put_vec(os, h->beta);
      put(os, h->variance);
      put(os, h->range);
      put(os, h->smoothness);
    }
    // tuners
    os.write(reinterpret_cast<const char*>(t_gev), sizeof(t_gev));
    put(os, t_tau);
    put(os, t_alpha);
    put(os, t_q);
    put(os, t_qscale);
    os.write(reinterpret_cast<const char*>(t_range), sizeof(t_range));
    put_tuners(os, t_A);
    put_tuners(os, t_B);
    put_tuners(os, t_gamma);
    put_tuners(os, t_lambda);
    put_tuners(os, t_field);
    // stored draws
    put(os, static_cast<std::uint64_t>(out.draws.size()));
    for (const PosteriorDraw& d : out.draws) {
      put(os, static_cast<std::int32_t>(d.iteration));
      put(os, d.loglik);
      put(os, d.alpha);
      put(os, d.tau);
      put(os, d.q);
      put(os, static_cast<std::int32_t>(d.delta));
      put_vec(os, d.mu);
      put_vec(os, d.log_sigma);
      put_vec(os, d.xi);
      put_vec(os, d.pi);
      put_vec(os, d.gamma);
      put_vec(os, d.gp_hyper);
    }
    if (!os) throw DataError("checkpoint write failed: " + path);
  }

  void load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open checkpoint file: " + path);
    std::uint64_t magic = 0;
    get(is, magic);
    if (magic != kCheckpointMagic) throw DataError("bad checkpoint magic: " + path);
    std::int32_t kind_i, mode_i, prior_i, iters, burn, thin, Tc, nc, Lc, Jc, fixg;
    get(is, kind_i);
    get(is, mode_i);
    get(is, prior_i);
    get(is, iters);
    get(is, burn);
    get(is, thin);
    get(is, Tc);
    get(is, nc);
    get(is, Lc);
    get(is, Jc);
    get(is, cfg.seed);
    get(is, cfg.nu);
    get(is, cfg.target_accept);
    get(is, cfg.adapt_window);
    get(is, cfg.fix_alpha);
    get(is, cfg.fix_tau);
    get(is, cfg.fix_q);
    get(is, fixg);
    get(is, cfg.priors.mu_mean);
    get(is, cfg.priors.mu_sd);
    get(is, cfg.priors.logsigma_mean);
    get(is, cfg.priors.logsigma_sd);
    get(is, cfg.priors.xi_mean);
    get(is, cfg.priors.xi_sd);
    get(is, cfg.priors.tau_shape);
    get(is, cfg.priors.tau_rate);
    get(is, cfg.gp_smoothness);
    get(is, cfg.gp_variance_shape);
    get(is, cfg.gp_variance_rate);
    get(is, cfg.gp_range_scale);
    get(is, cfg.gp_beta_sd);
    std::uint64_t digest = 0;
    get(is, digest);
    if (static_cast<ModelKind>(kind_i) != cfg.kind ||
        static_cast<SurfaceMode>(mode_i) != cfg.gev_mode) {
      throw ConfigError("checkpoint model does not match the configured model");
    }
    if (Tc != T || nc != n) {
      throw DataError("checkpoint dimensions do not match the dataset");
    }
    if (digest != data_digest()) {
      throw DataError("checkpoint was produced from a different dataset");
    }
    cfg.prior_only = prior_i != 0;
    cfg.iterations = iters;
    cfg.burnin = burn;
    cfg.thinning = thin;
    cfg.fix_gev = fixg != 0;
    std::uint64_t key, ctr;
    get(is, key);
    get(is, ctr);
    rng.restore(key, ctr);
    std::int32_t done;
    get(is, done);
    iter_done = done;
    std::uint64_t n_knots = 0;
    get(is, n_knots);
    if (static_cast<std::int32_t>(n_knots) != Lc) {
      throw DataError("corrupt checkpoint: knot count mismatch");
    }
    std::vector<Site> kn(n_knots);
    for (Site& s : kn) {
      get(is, s.x);
      get(is, s.y);
    }
    cfg.knots = make_knot_set(kn);
    L = Lc;
    J = Jc;
    cfg.J = Jc;
    get_vec(is, st.gev.mu);
    get_vec(is, st.gev.log_sigma);
    get_vec(is, st.gev.xi);
    get(is, st.tau);
    get(is, st.alpha);
    get(is, st.q);
    get_vec(is, st.A);
    get_vec(is, st.B);
    get_vec(is, st.gamma);
    get_vec(is, st.lambda);
    get_ivec(is, st.labels);
    get_vec(is, st.v);
    get_vec(is, st.pi);
    for (GpHyper* h : {&st.hyper_mu, &st.hyper_logsigma, &st.hyper_xi}) {
      get_vec(is, h->beta);
      get(is, h->variance);
      get(is, h->range);
      get(is, h->smoothness);
    }
    is.read(reinterpret_cast<char*>(t_gev), sizeof(t_gev));
    get(is, t_tau);
    get(is, t_alpha);
    get(is, t_q);
    get(is, t_qscale);
    is.read(reinterpret_cast<char*>(t_range), sizeof(t_range));
    get_tuners(is, t_A);
    get_tuners(is, t_B);
    get_tuners(is, t_gamma);
    get_tuners(is, t_lambda);
    get_tuners(is, t_field);
    std::uint64_t n_draws = 0;
    get(is, n_draws);
    out.draws.clear();
    out.draws.reserve(n_draws);
    for (std::uint64_t k = 0; k < n_draws; ++k) {
      PosteriorDraw d;
      std::int32_t it, delta;
      get(is, it);
      get(is, d.loglik);
      get(is, d.alpha);
      get(is, d.tau);
      get(is, d.q);
      get(is, delta);
      d.iteration = it;
      d.delta = delta;
      get_vec(is, d.mu);
      get_vec(is, d.log_sigma);
      get_vec(is, d.xi);
      get_vec(is, d.pi);
      get_vec(is, d.gamma);
      get_vec(is, d.gp_hyper);
      out.draws.push_back(std::move(d));
    }
    if (!is) throw DataError("checkpoint read failed (truncated file): " + path);
    out.iterations = cfg.iterations;
    out.burnin = cfg.burnin;
    out.thinning = cfg.thinning;
    out.seed = cfg.seed;
    if (!cfg.prior_only) {
      init_caches();
      if (cfg.gev_mode == SurfaceMode::Gp) {
        for (int c = 0; c < 3; ++c) refresh_gp_cache(c);
      }
    }
  }
};

// ---------------------------------------------------------------- public API

Chain::Chain(const ChainConfig& cfg, const Dataset& data)
    : impl_(std::make_unique<Impl>(cfg, data)) {}
Chain::~Chain() = default;
Chain::Chain(Chain&&) noexcept = default;
Chain& Chain::operator=(Chain&&) noexcept = default;

void Chain::run() { impl_->run_all(impl_->cfg.iterations); }

void Chain::run_until(int iteration) { impl_->run_all(iteration); }

void Chain::sweep_once() {
  impl_->adapting = impl_->iter_done < impl_->cfg.burnin;
  impl_->sweep();
  ++impl_->iter_done;
}

const PosteriorSamples& Chain::samples() const { return impl_->out; }
const ModelState& Chain::state() const { return impl_->st; }
int Chain::iteration_done() const { return impl_->iter_done; }

double Chain::loglik() const { return impl_->ll_total; }

double Chain::loglik_recomputed() {
  return maxmix::loglik(impl_->st, impl_->data, impl_->cfg);
}

std::vector<double> Chain::simulate_data_given_state(RngStream& rng) const {
  const Impl& im = *impl_;
  if (im.cfg.prior_only) {
    throw DomainError("simulate_data_given_state: unavailable in prior-only mode");
  }
  std::vector<double> y(static_cast<std::size_t>(im.T) * im.n);
  const double alpha = im.st.alpha;
  const GevParams nugget{1.0, alpha, alpha};
  for (int t = 0; t < im.T; ++t) {
    for (int i = 0; i < im.n; ++i) {
      const std::size_t idx = static_cast<std::size_t>(t) * im.n + i;
      const GevParams p{im.st.gev.mu[i], std::exp(im.st.gev.log_sigma[i]),
                        im.st.gev.xi[i]};
      double log_res;
      switch (im.cfg.kind) {
        case ModelKind::Hevp: {
          const double ltheta = alpha * std::log(im.Stil[idx]);
          log_res = std::log(gev_sample(nugget, rng)) + ltheta;
          break;
        }
        case ModelKind::Sb: {
          const double sh = im.Shat[static_cast<std::size_t>(im.st.labels[t]) * im.n + i];
          log_res = std::log(gev_sample(nugget, rng)) + alpha * std::log(sh);
          break;
        }
        default: {
          const double lt = alpha * std::log(im.Stil[idx]);
          const double lh =
              alpha *
              std::log(im.Shat[static_cast<std::size_t>(im.st.labels[t]) * im.n + i]);
          const double lx1 = std::log(gev_sample(nugget, rng)) + lt;
          const double lx2 = std::log(gev_sample(nugget, rng)) + lh;
          const double q = im.st.q;
          if (q >= 1.0 - kQBoundaryEps) {
            log_res = lx1;
          } else if (q <= kQBoundaryEps) {
            log_res = lx2;
          } else {
            log_res = std::max(std::log(q) + q * lx1, std::log1p(-q) + (1.0 - q) * lx2);
          }
        }
      }
      // keep the draw strictly inside the double-representable support; the
      // clamp (|log residual| <= 500) touches only e^{+-500}-scale quantiles
      y[idx] = gev_from_log_residual(std::clamp(log_res, -500.0, 500.0), p);
    }
  }
  return y;
}

void Chain::set_data(const std::vector<double>& y) {
  Impl& im = *impl_;
  if (y.size() != im.data.y.size()) throw DataError("set_data: size mismatch");
  im.data.y = y;
  if (!im.cfg.prior_only) {
    im.compute_logx(im.st.gev, im.logx, im.lsig);
    im.compute_exp_caches(im.logx, im.st.alpha, im.st.q, im.E, im.e1, im.e2);
    im.refresh_sums();
  }
}

void Chain::save_checkpoint(const std::string& path) const { impl_->save(path); }
void Chain::load_checkpoint(const std::string& path) { impl_->load(path); }

void Chain::set_state(const ModelState& state) {
  validate_state(state, impl_->cfg, impl_->T, impl_->n);
  impl_->adopt_state(state);
}

double Chain::joint_log_density() const { return impl_->joint_logdens(); }

std::vector<double> Chain::label_logweights(int t) const {
  const Impl& im = *impl_;
  if (im.cfg.kind == ModelKind::Hevp) {
    throw DomainError("label_logweights: model has no cluster labels");
  }
  if (t < 0 || t >= im.T) throw DomainError("label_logweights: t out of range");
  std::vector<double> logw(im.J);
  if (im.cfg.prior_only ||
      (im.cfg.kind == ModelKind::Mm && im.st.q >= 1.0 - kQBoundaryEps)) {
    for (int j = 0; j < im.J; ++j) {
      logw[j] = im.st.pi[j] > 0.0 ? std::log(im.st.pi[j])
                                  : -std::numeric_limits<double>::infinity();
    }
    return logw;
  }
  const bool sb_form =
      im.cfg.kind == ModelKind::Sb || im.st.q <= kQBoundaryEps;
  const std::vector<double> sl =
      sb_form ? im.atom_log_sums() : std::vector<double>(im.J, 0.0);
  im.label_weights_for(t, logw, sl, sb_form);
  return logw;
}

PosteriorSamples run_chain(const ChainConfig& cfg, const Dataset& data) {
  Chain chain(cfg, data);
  chain.run();
  return chain.samples();
}

PosteriorSamples resume_chain(const std::string& checkpoint_path,
                              const Dataset& data,
                              const std::string& save_checkpoint_to) {
  // peek at the header for the model kind / surface mode
  std::ifstream is(checkpoint_path, std::ios::binary);
  if (!is) throw DataError("cannot open checkpoint file: " + checkpoint_path);
  std::uint64_t magic = 0;
  is.read(reinterpret_cast<char*>(&magic), sizeof(magic));
  if (magic != kCheckpointMagic) {
    throw DataError("bad checkpoint magic: " + checkpoint_path);
  }
  std::int32_t kind_i = 0, mode_i = 0, prior_i = 0, iters = 0, burn = 0, thin = 0;
  std::int32_t Tc, nc, Lc, Jc;
  is.read(reinterpret_cast<char*>(&kind_i), sizeof(kind_i));
  is.read(reinterpret_cast<char*>(&mode_i), sizeof(mode_i));
  is.read(reinterpret_cast<char*>(&prior_i), sizeof(prior_i));
  is.read(reinterpret_cast<char*>(&iters), sizeof(iters));
  is.read(reinterpret_cast<char*>(&burn), sizeof(burn));
  is.read(reinterpret_cast<char*>(&thin), sizeof(thin));
  is.read(reinterpret_cast<char*>(&Tc), sizeof(Tc));
  is.read(reinterpret_cast<char*>(&nc), sizeof(nc));
  is.read(reinterpret_cast<char*>(&Lc), sizeof(Lc));
  is.read(reinterpret_cast<char*>(&Jc), sizeof(Jc));
  is.close();

  ChainConfig cfg;
  cfg.kind = static_cast<ModelKind>(kind_i);
  cfg.gev_mode = static_cast<SurfaceMode>(mode_i);
  cfg.prior_only = prior_i != 0;
  cfg.iterations = iters;
  cfg.burnin = burn;
  cfg.thinning = thin;
  cfg.J = Jc;
  Chain chain(cfg, data);
  chain.load_checkpoint(checkpoint_path);
  chain.run();
  if (!save_checkpoint_to.empty()) chain.save_checkpoint(save_checkpoint_to);
  return chain.samples();
}

double posterior_prob_delta(const PosteriorSamples& samples) {
  if (samples.kind != ModelKind::Mm) {
    throw DomainError("posterior_prob_delta: requires max-mixture samples");
  }
  if (samples.draws.empty()) throw DomainError("posterior_prob_delta: no draws");
  double s = 0.0;
  for (const PosteriorDraw& d : samples.draws) s += d.delta;
  return s / static_cast<double>(samples.draws.size());
}

double loglik(const ModelState& state, const Dataset& data, const ChainConfig& cfg) {
  const KnotSet knots =
      cfg.knots.size() > 0 ? cfg.knots : make_knot_set(data.sites);
  const WeightMatrix wm = kernel_weights(data.sites, knots, state.tau);
  const int n = data.n;
  const int T = data.T;
  const int L = static_cast<int>(knots.size());
  const double alpha = state.alpha;
  std::vector<double> wa(wm.w.size());
  for (std::size_t idx = 0; idx < wm.w.size(); ++idx) {
    wa[idx] = wm.w[idx] > 0.0 ? std::pow(wm.w[idx], 1.0 / alpha) : 0.0;
  }
  auto spatial_sum = [&](const double* coeff, int i) {
    double s = 0.0;
    for (int l = 0; l < L; ++l) s += coeff[l] * wa[static_cast<std::size_t>(i) * L + l];
    return std::max(s, 1e-250);
  };
  double total = 0.0;
  for (int t = 0; t < T; ++t) {
    for (int i = 0; i < n; ++i) {
      const GevParams p{state.gev.mu[i], std::exp(state.gev.log_sigma[i]),
                        state.gev.xi[i]};
      const double lx = gev_log_residual(data.at(t, i), p);
      if (!std::isfinite(lx)) return -kInf;
      const double lsig = state.gev.log_sigma[i];
      const double xi = state.gev.xi[i];
      auto frechet_comp = [&](double S) {
        return -S * std::exp(-lx / alpha) + std::log(S) - std::log(alpha) - lsig -
               (1.0 / alpha + xi) * lx;
      };
      switch (cfg.kind) {
        case ModelKind::Hevp:
          total += frechet_comp(spatial_sum(&state.A[static_cast<std::size_t>(t) * L], i));
          break;
        case ModelKind::Sb:
          total += frechet_comp(spatial_sum(
              &state.gamma[static_cast<std::size_t>(state.labels[t]) * L], i));
          break;
        case ModelKind::Mm: {
          const double q = state.q;
          const double s_til =
              spatial_sum(&state.A[static_cast<std::size_t>(t) * L], i);
          const double s_hat = spatial_sum(
              &state.gamma[static_cast<std::size_t>(state.labels[t]) * L], i);
          if (q >= 1.0 - kQBoundaryEps) {
            total += frechet_comp(s_til);
          } else if (q <= kQBoundaryEps) {
            total += frechet_comp(s_hat);
          } else {
            const double kk1 = 1.0 / (alpha * q);
            const double kk2 = 1.0 / (alpha * (1.0 - q));
            const double lbq1 = std::log(q) * kk1;
            const double lbq2 = std::log1p(-q) * kk2;
            const double Ht = s_til * std::exp(lbq1 - kk1 * lx);
            const double Hh = s_hat * std::exp(lbq2 - kk2 * lx);
            const double lrt =
                std::log(s_til) + lbq1 + std::log(kk1) - (kk1 + 1.0) * lx;
            const double lrh =
                std::log(s_hat) + lbq2 + std::log(kk2) - (kk2 + 1.0) * lx;
            total += -Ht - Hh + log_sum_exp(lrt, lrh) + (1.0 - xi) * lx - lsig;
          }
          break;
        }
      }
    }
  }
  return total;
}

void validate_state(const ModelState& state, const ChainConfig& cfg, int T, int n) {
  if (!(state.tau > 0.0)) throw DomainError("state: tau must be > 0");
  if (!(state.alpha > 0.0 && state.alpha < 1.0)) {
    throw DomainError("state: alpha must lie in (0,1)");
  }
  if (cfg.kind == ModelKind::Mm && !(state.q >= 0.0 && state.q <= 1.0)) {
    throw DomainError("state: q must lie in [0,1]");
  }
  if (static_cast<int>(state.gev.mu.size()) != n) throw DomainError("state: bad field size");
  for (int i = 0; i < n; ++i) {
    if (!std::isfinite(state.gev.mu[i]) || !std::isfinite(state.gev.log_sigma[i]) ||
        !std::isfinite(state.gev.xi[i])) {
      throw DomainError("state: non-finite GEV fields");
    }
  }
  for (double a : state.A) {
    if (!(a > 0.0)) throw DomainError("state: A entries must be > 0");
  }
  for (double b : state.B) {
    if (!(b >= 0.0 && b <= 1.0)) throw DomainError("state: B entries must be in [0,1]");
  }
  for (double g : state.gamma) {
    if (!(g > 0.0)) throw DomainError("state: gamma entries must be > 0");
  }
  for (double l : state.lambda) {
    if (!(l >= 0.0 && l <= 1.0)) throw DomainError("state: lambda must be in [0,1]");
  }
  if (!state.pi.empty()) {
    double s = 0.0;
    for (double p : state.pi) {
      if (!(p >= 0.0)) throw DomainError("state: negative stick weight");
      s += p;
    }
    if (std::fabs(s - 1.0) > 1e-9) throw DomainError("state: pi must sum to 1");
    if (state.v.back() != 1.0) throw DomainError("state: v_J must be pinned to 1");
    const int J = static_cast<int>(state.pi.size());
    for (int t = 0; t < T; ++t) {
      if (state.labels[t] < 0 || state.labels[t] >= J) {
        throw DomainError("state: label out of range");
      }
    }
  }
}

GevParams gev_moment_fit(std::span<const double> values) {
  std::vector<double> x(values.begin(), values.end());
  std::sort(x.begin(), x.end());
  const std::size_t m = x.size();
  if (m < 3) return GevParams{m ? x[0] : 0.0, 1.0, 0.0};
  double b0 = 0.0, b1 = 0.0, b2 = 0.0;
  for (std::size_t r = 1; r <= m; ++r) {
    const double v = x[r - 1];
    b0 += v;
    b1 += v * (r - 1.0) / (m - 1.0);
    b2 += v * (r - 1.0) * (r - 2.0) / ((m - 1.0) * (m - 2.0));
  }
  b0 /= m;
  b1 /= m;
  b2 /= m;
  const double l1 = b0;
  const double l2 = 2.0 * b1 - b0;
  const double l3 = 6.0 * b2 - 6.0 * b1 + b0;
  if (!(l2 > 0.0)) return GevParams{l1, 1.0, 0.0};
  const double t3 = l3 / l2;
  const double c = 2.0 / (3.0 + t3) - std::log(2.0) / std::log(3.0);
  const double k = 7.8590 * c + 2.9554 * c * c;  // Hosking's shape (k = -xi)
  GevParams p;
  if (std::fabs(k) < 1e-6) {
    p.sigma = l2 / std::log(2.0);
    p.mu = l1 - 0.5772156649015329 * p.sigma;
    p.xi = 0.0;
  } else {
    const double g = std::tgamma(1.0 + k);
    p.sigma = l2 * k / ((1.0 - std::pow(2.0, -k)) * g);
    p.mu = l1 - p.sigma * (1.0 - g) / k;
    p.xi = -k;
  }
  if (!std::isfinite(p.mu) || !std::isfinite(p.sigma) || !(p.sigma > 0.0) ||
      !std::isfinite(p.xi)) {
    double mean = 0.0, var = 0.0;
    for (double v : x) mean += v;
    mean /= m;
    for (double v : x) var += (v - mean) * (v - mean);
    var /= m;
    return GevParams{mean, std::max(1e-6, std::sqrt(var)), 0.0};
  }
  p.xi = std::clamp(p.xi, -0.4, 0.9);
  return p;
}

}  // namespace maxmix
