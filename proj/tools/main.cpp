// maxmix command-line front end.  Thin argument layer over the shared
// library's C interface; all modeling work happens behind maxmix.h.

#include <cstdint>
#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <maxmix.h>

namespace {

struct ConfigHandle {
  mx_config* ptr = nullptr;
  ~ConfigHandle() { mx_config_free(ptr); }
};

int report(int rc, const char* what) {
  if (rc != MX_OK) {
    std::fprintf(stderr, "maxmix: %s failed: %s\n", what, mx_last_error());
  }
  return rc;
}

int load_config(const std::string& path, const std::vector<std::string>& overrides,
                ConfigHandle& out) {
  int rc = path.empty() ? mx_config_create(&out.ptr)
                        : mx_config_load(path.c_str(), &out.ptr);
  if (rc != MX_OK) return report(rc, "loading config");
  for (const std::string& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      std::fprintf(stderr, "maxmix: bad --set '%s' (want section.key=value)\n",
                   kv.c_str());
      return MX_ERR_CONFIG;
    }
    rc = mx_config_set(out.ptr, kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str());
    if (rc != MX_OK) return report(rc, "applying --set override");
  }
  return MX_OK;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian spatial extremes: HEVP, stick-breaking and max-mixture "
               "models (simulation, MCMC fitting, prediction, evaluation)"};
  app.require_subcommand(1);

  std::string config_path, out_dir, data_path, sites_path, fit_dir, resume_path;
  std::vector<std::string> data_paths, overrides;
  std::uint64_t seed = 0;
  int threads = 1;

  auto* sim = app.add_subcommand("simulate", "draw a dataset from one of the six "
                                             "simulation settings");
  sim->add_option("-c,--config", config_path, "config file (.ini)");
  sim->add_option("--seed", seed, "RNG seed")->required();
  sim->add_option("-o,--out", out_dir, "output directory")->required();
  sim->add_option("--set", overrides, "override config keys (section.key=value)");

  auto* fit = app.add_subcommand("fit", "run the Metropolis-within-Gibbs sampler");
  fit->add_option("-c,--config", config_path, "config file (.ini)");
  fit->add_option("-d,--data", data_path, "dataset CSV")->required();
  fit->add_option("--seed", seed, "RNG seed")->required();
  fit->add_option("-o,--out", out_dir, "output directory")->required();
  fit->add_option("--resume", resume_path, "resume from a checkpoint file");
  fit->add_option("--set", overrides, "override config keys");

  auto* pred = app.add_subcommand("predict", "posterior predictive quantiles at "
                                             "new sites");
  pred->add_option("-c,--config", config_path, "config file (.ini)");
  pred->add_option("--samples", fit_dir, "fit output directory")->required();
  pred->add_option("--sites", sites_path, "sites CSV (site_id,x,y)")->required();
  pred->add_option("-o,--out", out_dir, "output directory")->required();
  pred->add_option("--set", overrides, "override config keys");

  auto* eval = app.add_subcommand("evaluate", "fit models and score quantile / "
                                              "tail-dependence estimates");
  eval->add_option("-c,--config", config_path, "config file (.ini)");
  eval->add_option("-d,--data", data_paths, "dataset CSV(s)")->required();
  eval->add_option("--seed", seed, "RNG seed")->required();
  eval->add_option("-o,--out", out_dir, "output directory")->required();
  eval->add_option("--threads", threads, "worker thread cap (results identical)");
  eval->add_option("--set", overrides, "override config keys");

  CLI11_PARSE(app, argc, argv);

  ConfigHandle cfg;
  if (int rc = load_config(config_path, overrides, cfg)) return rc;

  if (sim->parsed()) {
    return report(mx_cmd_simulate(cfg.ptr, seed, out_dir.c_str()), "simulate");
  }
  if (fit->parsed()) {
    return report(mx_cmd_fit(cfg.ptr, data_path.c_str(), seed, out_dir.c_str(),
                             resume_path.empty() ? nullptr : resume_path.c_str()),
                  "fit");
  }
  if (pred->parsed()) {
    return report(mx_cmd_predict(cfg.ptr, fit_dir.c_str(), sites_path.c_str(),
                                 out_dir.c_str()),
                  "predict");
  }
  if (eval->parsed()) {
    std::vector<const char*> ptrs;
    for (const std::string& p : data_paths) ptrs.push_back(p.c_str());
    return report(mx_cmd_evaluate(cfg.ptr, ptrs.data(),
                                  static_cast<int>(ptrs.size()), seed,
                                  out_dir.c_str(), threads),
                  "evaluate");
  }
  return MX_ERR;
}
