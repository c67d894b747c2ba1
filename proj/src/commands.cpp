#include "commands.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "errors.hpp"
#include "io.hpp"

namespace maxmix {

namespace {

const std::vector<double> kPaperLevels = {0.1,  0.2, 0.3,  0.4,  0.5,  0.6,
                                          0.7,  0.8, 0.9,  0.95, 0.99, 0.995};

void validate_simulation_keys(const ConfigDoc& doc) {
  doc.require_known_keys(
      "simulation",
      {"setting", "grid_nx", "grid_ny", "domain_min", "domain_max", "sites_file",
       "T", "mu", "sigma", "xi", "alpha", "tau", "J", "pi", "q", "skew_lambda",
       "skew_mu", "sigma2_shape", "sigma2_scale", "gp_mean", "gp_var", "gp_range",
       "truth", "truth_levels", "truth_chi_levels"});
}

void validate_model_keys(const ConfigDoc& doc) {
  doc.require_known_keys("model", {"kind", "J", "nu", "gev_mode", "knots_file"});
  doc.require_known_keys(
      "priors", {"mu_mean", "mu_sd", "logsigma_mean", "logsigma_sd", "xi_mean",
                 "xi_sd", "tau_shape", "tau_rate", "fix_alpha", "fix_tau", "fix_q",
                 "fix_gev", "gp_variance_shape", "gp_variance_rate",
                 "gp_range_scale", "gp_smoothness", "gp_beta_sd"});
  doc.require_known_keys("mcmc",
                         {"iterations", "burnin", "thinning", "target_accept",
                          "adapt_window", "prior_only", "checkpoint_every",
                          "validate", "quiet"});
}

std::vector<Site> sites_from_simulation(const ConfigDoc& doc) {
  if (doc.has("simulation", "sites_file")) {
    return read_sites_csv(doc.get("simulation", "sites_file"));
  }
  const int nx = doc.get_int_or("simulation", "grid_nx", 7);
  const int ny = doc.get_int_or("simulation", "grid_ny", 7);
  const double lo = doc.get_double_or("simulation", "domain_min", 1.0);
  const double hi = doc.get_double_or("simulation", "domain_max", 7.0);
  if (nx < 1 || ny < 1) throw ConfigError("simulation.grid_nx/grid_ny must be >= 1");
  return grid_sites(nx, ny, lo, hi, lo, hi);
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw DataError("cannot create output directory: " + dir);
}

}  // namespace

SimConfig sim_config_from(const ConfigDoc& doc, std::uint64_t seed) {
  validate_simulation_keys(doc);
  SimConfig cfg;
  cfg.setting = sim_setting_from_name(doc.get_or("simulation", "setting", "MS"));
  cfg.sites = sites_from_simulation(doc);
  cfg.T = doc.get_int_or("simulation", "T", 50);
  if (cfg.T < 1) throw ConfigError("simulation.T must be >= 1");
  cfg.gev.mu = doc.get_double_or("simulation", "mu", 0.1);
  cfg.gev.sigma = doc.get_double_or("simulation", "sigma", 1.0);
  cfg.gev.xi = doc.get_double_or("simulation", "xi", 0.1);
  if (!(cfg.gev.sigma > 0.0)) throw ConfigError("simulation.sigma must be > 0");
  cfg.alpha = doc.get_double_or("simulation", "alpha", 0.3);
  cfg.tau = doc.get_double_or("simulation", "tau", 1.0);
  cfg.J = doc.get_int_or("simulation", "J", 3);
  cfg.pi = doc.get_doubles_or("simulation", "pi", {0.5, 0.3, 0.2});
  cfg.q = doc.get_double_or("simulation", "q", 0.5);
  cfg.skew_lambda = doc.get_double_or("simulation", "skew_lambda", 3.0);
  cfg.skew_mu = doc.get_double_or("simulation", "skew_mu", 1.0);
  cfg.sigma2_shape = doc.get_double_or("simulation", "sigma2_shape", 4.0);
  cfg.sigma2_scale = doc.get_double_or("simulation", "sigma2_scale", 1.0);
  cfg.gp_mean = doc.get_double_or("simulation", "gp_mean", 0.1);
  cfg.gp_var = doc.get_double_or("simulation", "gp_var", 1.0);
  cfg.gp_range = doc.get_double_or("simulation", "gp_range", 1.0);
  cfg.seed = seed;
  return cfg;
}

ChainConfig chain_config_from(const ConfigDoc& doc, std::uint64_t seed) {
  validate_model_keys(doc);
  ChainConfig cfg;
  cfg.kind = model_kind_from_name(doc.get_or("model", "kind", "mm"));
  cfg.J = doc.get_int_or("model", "J", 0);
  cfg.nu = doc.get_double_or("model", "nu", 1.0);
  const std::string mode = doc.get_or("model", "gev_mode", "constant");
  if (mode == "constant") {
    cfg.gev_mode = SurfaceMode::Constant;
  } else if (mode == "gp") {
    cfg.gev_mode = SurfaceMode::Gp;
  } else {
    throw ConfigError("model.gev_mode must be 'constant' or 'gp'");
  }
  if (doc.has("model", "knots_file")) {
    cfg.knots = make_knot_set(read_sites_csv(doc.get("model", "knots_file")));
  }

  cfg.priors.mu_mean = doc.get_double_or("priors", "mu_mean", 0.0);
  cfg.priors.mu_sd = doc.get_double_or("priors", "mu_sd", 10.0);
  cfg.priors.logsigma_mean = doc.get_double_or("priors", "logsigma_mean", 0.0);
  cfg.priors.logsigma_sd = doc.get_double_or("priors", "logsigma_sd", 1.0);
  cfg.priors.xi_mean = doc.get_double_or("priors", "xi_mean", 0.0);
  cfg.priors.xi_sd = doc.get_double_or("priors", "xi_sd", 0.25);
  cfg.priors.tau_shape = doc.get_double_or("priors", "tau_shape", 0.1);
  cfg.priors.tau_rate = doc.get_double_or("priors", "tau_rate", 0.1);
  cfg.fix_alpha = doc.get_double_or("priors", "fix_alpha", NAN);
  cfg.fix_tau = doc.get_double_or("priors", "fix_tau", NAN);
  cfg.fix_q = doc.get_double_or("priors", "fix_q", NAN);
  cfg.fix_gev = doc.get_bool_or("priors", "fix_gev", false);
  cfg.gp_variance_shape = doc.get_double_or("priors", "gp_variance_shape", 2.0);
  cfg.gp_variance_rate = doc.get_double_or("priors", "gp_variance_rate", 1.0);
  cfg.gp_range_scale = doc.get_double_or("priors", "gp_range_scale", 0.0);
  cfg.gp_smoothness = doc.get_double_or("priors", "gp_smoothness", 0.5);
  cfg.gp_beta_sd = doc.get_double_or("priors", "gp_beta_sd", 10.0);

  cfg.iterations = doc.get_int_or("mcmc", "iterations", 10000);
  cfg.burnin = doc.get_int_or("mcmc", "burnin", 2500);
  cfg.thinning = doc.get_int_or("mcmc", "thinning", 5);
  cfg.target_accept = doc.get_double_or("mcmc", "target_accept", 0.4);
  cfg.adapt_window = doc.get_double_or("mcmc", "adapt_window", 50.0);
  cfg.prior_only = doc.get_bool_or("mcmc", "prior_only", false);
  cfg.checkpoint_every = doc.get_int_or("mcmc", "checkpoint_every", 0);
  cfg.validate = doc.get_bool_or("mcmc", "validate", false);
  cfg.quiet = doc.get_bool_or("mcmc", "quiet", true);
  cfg.seed = seed;
  return cfg;
}

void write_truth_tables(const TruthTables& t, const std::string& dir) {
  {
    std::ostringstream os;
    os << "site_id,level,quantile\n";
    const std::size_t nq = t.q_levels.size();
    const std::size_t n = nq ? t.quantiles.size() / nq : 0;
    for (std::size_t s = 0; s < n; ++s) {
      for (std::size_t k = 0; k < nq; ++k) {
        os << s << ',' << format_g17(t.q_levels[k]) << ','
           << format_g17(t.quantiles[s * nq + k]) << '\n';
      }
    }
    write_text_file(dir + "/truth_quantiles.csv", os.str());
  }
  {
    std::ostringstream os;
    os << "site_i,site_j,level,chi\n";
    const std::size_t nu = t.chi_levels.size();
    for (std::size_t p = 0; p < t.pairs.size(); ++p) {
      for (std::size_t k = 0; k < nu; ++k) {
        os << t.pairs[p].first << ',' << t.pairs[p].second << ','
           << format_g17(t.chi_levels[k]) << ',' << format_g17(t.chi[p * nu + k])
           << '\n';
      }
    }
    write_text_file(dir + "/truth_chi.csv", os.str());
  }
}

namespace {

std::vector<std::vector<double>> read_csv_rows(const std::string& path,
                                               std::size_t n_fields,
                                               const std::string& header) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open file: " + path);
  std::string line;
  if (!std::getline(is, line) || line != header) {
    throw DataError(path + ": expected header '" + header + "'");
  }
  std::vector<std::vector<double>> rows;
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::vector<double> row;
    std::string tok;
    while (std::getline(ls, tok, ',')) {
      try {
        row.push_back(std::stod(tok));
      } catch (const std::exception&) {
        throw DataError(path + ":" + std::to_string(lineno) + ": bad number '" +
                        tok + "'");
      }
    }
    if (row.size() != n_fields) {
      throw DataError(path + ":" + std::to_string(lineno) + ": bad field count");
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

TruthTables read_truth_tables(const std::string& dir) {
  TruthTables t;
  const auto qrows = read_csv_rows(dir + "/truth_quantiles.csv", 3,
                                   "site_id,level,quantile");
  std::set<double> qlv;
  std::size_t n = 0;
  for (const auto& r : qrows) {
    qlv.insert(r[1]);
    n = std::max(n, static_cast<std::size_t>(r[0]) + 1);
  }
  t.q_levels.assign(qlv.begin(), qlv.end());
  t.quantiles.assign(n * t.q_levels.size(), NAN);
  auto q_index = [&](double level) {
    return std::lower_bound(t.q_levels.begin(), t.q_levels.end(), level) -
           t.q_levels.begin();
  };
  for (const auto& r : qrows) {
    t.quantiles[static_cast<std::size_t>(r[0]) * t.q_levels.size() + q_index(r[1])] =
        r[2];
  }
  const auto crows =
      read_csv_rows(dir + "/truth_chi.csv", 4, "site_i,site_j,level,chi");
  std::set<double> clv;
  std::set<std::pair<int, int>> pairset;
  for (const auto& r : crows) {
    clv.insert(r[2]);
    pairset.emplace(static_cast<int>(r[0]), static_cast<int>(r[1]));
  }
  t.chi_levels.assign(clv.begin(), clv.end());
  t.pairs.assign(pairset.begin(), pairset.end());
  t.chi.assign(t.pairs.size() * t.chi_levels.size(), NAN);
  auto c_index = [&](double level) {
    return std::lower_bound(t.chi_levels.begin(), t.chi_levels.end(), level) -
           t.chi_levels.begin();
  };
  for (const auto& r : crows) {
    const std::pair<int, int> key{static_cast<int>(r[0]), static_cast<int>(r[1])};
    const std::size_t p =
        std::lower_bound(t.pairs.begin(), t.pairs.end(), key) - t.pairs.begin();
    t.chi[p * t.chi_levels.size() + c_index(r[2])] = r[3];
  }
  for (double v : t.quantiles) {
    if (std::isnan(v)) throw DataError(dir + ": incomplete truth_quantiles.csv");
  }
  for (double v : t.chi) {
    if (std::isnan(v)) throw DataError(dir + ": incomplete truth_chi.csv");
  }
  return t;
}

void cmd_simulate(const ConfigDoc& doc, std::uint64_t seed, const std::string& out_dir) {
  const SimConfig cfg = sim_config_from(doc, seed);
  ensure_dir(out_dir);
  const Dataset ds = simulate(cfg);
  write_dataset_csv(ds, out_dir + "/dataset.csv");
  if (doc.get_bool_or("simulation", "truth", true)) {
    const auto q_levels =
        doc.get_doubles_or("simulation", "truth_levels", kPaperLevels);
    const auto chi_levels =
        doc.get_doubles_or("simulation", "truth_chi_levels", kPaperLevels);
    const TruthTables t = truth_tables_from_sim(ds, q_levels, chi_levels);
    write_truth_tables(t, out_dir);
  }
  write_manifest(out_dir + "/manifest.ini", "simulate", seed, doc,
                 {{"dataset", out_dir + "/dataset.csv"}});
}

void cmd_fit(const ConfigDoc& doc, const std::string& data_path, std::uint64_t seed,
             const std::string& out_dir, const std::string& resume_checkpoint) {
  const Dataset ds = read_dataset_csv(data_path);
  ensure_dir(out_dir);
  PosteriorSamples samples;
  if (resume_checkpoint.empty()) {
    ChainConfig cfg = chain_config_from(doc, seed);
    if (cfg.checkpoint_every > 0) cfg.checkpoint_path = out_dir + "/checkpoint.bin";
    Chain chain(cfg, ds);
    chain.run();
    chain.save_checkpoint(out_dir + "/checkpoint.bin");
    samples = chain.samples();
  } else {
    samples = resume_chain(resume_checkpoint, ds, out_dir + "/checkpoint.bin");
  }
  write_samples_dir(samples, out_dir);
  write_manifest(out_dir + "/manifest.ini", "fit", seed, doc,
                 {{"data", data_path}});
}

void cmd_predict(const ConfigDoc& doc, const std::string& fit_dir,
                 const std::string& sites_path, const std::string& out_dir) {
  doc.require_known_keys("prediction", {"levels", "seed"});
  const PosteriorSamples samples = read_samples_dir(fit_dir);
  if (doc.has("model", "kind") &&
      model_kind_from_name(doc.get("model", "kind")) != samples.kind) {
    throw ConfigError("prediction: samples were fit with model '" +
                      std::string(model_kind_name(samples.kind)) +
                      "' but the config requests '" + doc.get("model", "kind") + "'");
  }
  const std::vector<Site> sites = read_sites_csv(sites_path);
  auto levels = doc.get_doubles_or("prediction", "levels", {0.5, 0.95, 0.99});
  std::sort(levels.begin(), levels.end());
  const std::uint64_t seed = static_cast<std::uint64_t>(
      doc.get_double_or("prediction", "seed", static_cast<double>(samples.seed)));
  const QuantileGrid grid = predict_quantiles(samples, sites, levels, seed);
  ensure_dir(out_dir);
  std::ostringstream os;
  os << "site_id,x,y,level,mean,sd\n";
  for (std::size_t s = 0; s < sites.size(); ++s) {
    for (std::size_t k = 0; k < levels.size(); ++k) {
      os << s << ',' << format_g17(sites[s].x) << ',' << format_g17(sites[s].y)
         << ',' << format_g17(levels[k]) << ',' << format_g17(grid.mean_at(s, k))
         << ',' << format_g17(grid.sd_at(s, k)) << '\n';
    }
  }
  write_text_file(out_dir + "/quantiles.csv", os.str());
  write_manifest(out_dir + "/manifest.ini", "predict", samples.seed, doc,
                 {{"samples", fit_dir + "/samples.csv"}, {"sites", sites_path}});
}

void cmd_evaluate(const ConfigDoc& doc, const std::vector<std::string>& data_paths,
                  std::uint64_t seed, const std::string& out_dir, int threads) {
  doc.require_known_keys("evaluation",
                         {"models", "levels", "chi_levels", "cv_folds", "threads"});
  if (data_paths.empty()) throw ConfigError("evaluate: no datasets given");
  std::vector<ModelKind> models;
  for (const std::string& w :
       doc.get_words_or("evaluation", "models", {"hevp", "sb", "mm"})) {
    models.push_back(model_kind_from_name(w));
  }
  auto q_levels = doc.get_doubles_or("evaluation", "levels", kPaperLevels);
  auto chi_levels = doc.get_doubles_or("evaluation", "chi_levels", kPaperLevels);
  std::sort(q_levels.begin(), q_levels.end());
  std::sort(chi_levels.begin(), chi_levels.end());
  const int k = doc.get_int_or("evaluation", "cv_folds", 0);
  if (threads <= 0) threads = doc.get_int_or("evaluation", "threads", 1);
  const ChainConfig chain_cfg = chain_config_from(doc, seed);

  std::vector<Dataset> datasets;
  datasets.reserve(data_paths.size());
  for (const std::string& p : data_paths) datasets.push_back(read_dataset_csv(p));

  CvScores scores;
  if (k == 0) {
    std::vector<TruthTables> truths;
    truths.reserve(data_paths.size());
    for (const std::string& p : data_paths) {
      const auto dir = std::filesystem::path(p).parent_path().string();
      truths.push_back(read_truth_tables(dir.empty() ? "." : dir));
    }
    scores = evaluate_against_tables(datasets, truths, models, chain_cfg, seed,
                                     threads);
  } else {
    if (datasets.size() != 1) {
      throw ConfigError("evaluate: cross validation expects exactly one dataset");
    }
    scores = cross_validate(datasets[0], models, k, chain_cfg, q_levels, chi_levels,
                            seed, threads);
  }

  ensure_dir(out_dir);
  auto write_table = [&](const std::string& path, const std::vector<double>& levels,
                         const std::vector<double>& table) {
    std::ostringstream os;
    os << "model,level,mmse\n";
    for (std::size_t mi = 0; mi < models.size(); ++mi) {
      for (std::size_t kl = 0; kl < levels.size(); ++kl) {
        os << model_kind_name(models[mi]) << ',' << format_g17(levels[kl]) << ','
           << format_g17(table[mi * levels.size() + kl]) << '\n';
      }
    }
    write_text_file(path, os.str());
  };
  write_table(out_dir + "/mmse_quantiles.csv", scores.q_levels, scores.mmse_q);
  write_table(out_dir + "/mmse_chi.csv", scores.chi_levels, scores.mmse_chi);
  std::vector<std::pair<std::string, std::string>> inputs;
  for (std::size_t b = 0; b < data_paths.size(); ++b) {
    inputs.emplace_back("data" + std::to_string(b), data_paths[b]);
  }
  write_manifest(out_dir + "/manifest.ini", "evaluate", seed, doc, inputs);
}

}  // namespace maxmix
