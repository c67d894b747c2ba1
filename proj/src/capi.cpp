#include "maxmix.h"

#include <cstring>
#include <string>

#include "commands.hpp"
#include "config.hpp"
#include "errors.hpp"
#include "io.hpp"
#include "mcmc.hpp"
#include "simulators.hpp"

using namespace maxmix;

struct mx_config {
  ConfigDoc doc;
};
struct mx_dataset {
  Dataset ds;
};
struct mx_samples {
  PosteriorSamples samples;
};

namespace {

thread_local std::string g_last_error;

int fail(int code, const char* what) {
  g_last_error = what ? what : "";
  return code;
}

template <typename Fn>
int guarded(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return MX_OK;
  } catch (const ConfigError& e) {
    return fail(MX_ERR_CONFIG, e.what());
  } catch (const DomainError& e) {
    return fail(MX_ERR_CONFIG, e.what());
  } catch (const DataError& e) {
    return fail(MX_ERR_DATA, e.what());
  } catch (const NumericError& e) {
    return fail(MX_ERR_NUMERIC, e.what());
  } catch (const std::exception& e) {
    return fail(MX_ERR, e.what());
  } catch (...) {
    return fail(MX_ERR, "unknown error");
  }
}

int require(bool ok, const char* what) {
  return ok ? MX_OK : fail(MX_ERR_CONFIG, what);
}

}  // namespace

extern "C" {

const char* mx_version(void) {
  static const std::string v = version_string();
  return v.c_str();
}

const char* mx_last_error(void) { return g_last_error.c_str(); }

int mx_config_create(mx_config** out) {
  if (int rc = require(out != nullptr, "mx_config_create: out is null")) return rc;
  return guarded([&] { *out = new mx_config{}; });
}

int mx_config_load(const char* path, mx_config** out) {
  if (int rc = require(path && out, "mx_config_load: null argument")) return rc;
  return guarded([&] { *out = new mx_config{ConfigDoc::parse_file(path)}; });
}

int mx_config_set(mx_config* cfg, const char* key, const char* value) {
  if (int rc = require(cfg && key && value, "mx_config_set: null argument")) return rc;
  return guarded([&] {
    cfg->doc.set_dotted(std::string(key) + "=" + value);
  });
}

void mx_config_free(mx_config* cfg) { delete cfg; }

int mx_dataset_read_csv(const char* path, mx_dataset** out) {
  if (int rc = require(path && out, "mx_dataset_read_csv: null argument")) return rc;
  return guarded([&] { *out = new mx_dataset{read_dataset_csv(path)}; });
}

int mx_dataset_write_csv(const mx_dataset* ds, const char* path) {
  if (int rc = require(ds && path, "mx_dataset_write_csv: null argument")) return rc;
  return guarded([&] { write_dataset_csv(ds->ds, path); });
}

int mx_dataset_dims(const mx_dataset* ds, int* n_sites, int* n_times) {
  if (int rc = require(ds && n_sites && n_times, "mx_dataset_dims: null argument")) {
    return rc;
  }
  *n_sites = ds->ds.n;
  *n_times = ds->ds.T;
  return MX_OK;
}

int mx_dataset_value(const mx_dataset* ds, int t, int site, double* out) {
  if (int rc = require(ds && out, "mx_dataset_value: null argument")) return rc;
  if (t < 0 || t >= ds->ds.T || site < 0 || site >= ds->ds.n) {
    return fail(MX_ERR_CONFIG, "mx_dataset_value: index out of range");
  }
  *out = ds->ds.at(t, site);
  return MX_OK;
}

void mx_dataset_free(mx_dataset* ds) { delete ds; }

int mx_simulate(const mx_config* cfg, uint64_t seed, mx_dataset** out) {
  if (int rc = require(cfg && out, "mx_simulate: null argument")) return rc;
  return guarded([&] {
    const SimConfig sim = sim_config_from(cfg->doc, seed);
    *out = new mx_dataset{simulate(sim)};
  });
}

int mx_fit(const mx_config* cfg, const mx_dataset* ds, uint64_t seed,
           mx_samples** out) {
  if (int rc = require(cfg && ds && out, "mx_fit: null argument")) return rc;
  return guarded([&] {
    const ChainConfig chain_cfg = chain_config_from(cfg->doc, seed);
    *out = new mx_samples{run_chain(chain_cfg, ds->ds)};
  });
}

int mx_samples_read_dir(const char* fit_dir, mx_samples** out) {
  if (int rc = require(fit_dir && out, "mx_samples_read_dir: null argument")) return rc;
  return guarded([&] { *out = new mx_samples{read_samples_dir(fit_dir)}; });
}

int mx_samples_write_dir(const mx_samples* s, const char* dir) {
  if (int rc = require(s && dir, "mx_samples_write_dir: null argument")) return rc;
  return guarded([&] { write_samples_dir(s->samples, dir); });
}

int mx_samples_count(const mx_samples* s, int* out) {
  if (int rc = require(s && out, "mx_samples_count: null argument")) return rc;
  *out = static_cast<int>(s->samples.draws.size());
  return MX_OK;
}

int mx_samples_prob_delta(const mx_samples* s, double* out) {
  if (int rc = require(s && out, "mx_samples_prob_delta: null argument")) return rc;
  return guarded([&] { *out = posterior_prob_delta(s->samples); });
}

void mx_samples_free(mx_samples* s) { delete s; }

int mx_cmd_simulate(const mx_config* cfg, uint64_t seed, const char* out_dir) {
  if (int rc = require(cfg && out_dir, "mx_cmd_simulate: null argument")) return rc;
  return guarded([&] { cmd_simulate(cfg->doc, seed, out_dir); });
}

int mx_cmd_fit(const mx_config* cfg, const char* data_csv, uint64_t seed,
               const char* out_dir, const char* resume_checkpoint_or_null) {
  if (int rc = require(cfg && data_csv && out_dir, "mx_cmd_fit: null argument")) {
    return rc;
  }
  return guarded([&] {
    cmd_fit(cfg->doc, data_csv, seed, out_dir,
            resume_checkpoint_or_null ? resume_checkpoint_or_null : "");
  });
}

int mx_cmd_predict(const mx_config* cfg, const char* fit_dir, const char* sites_csv,
                   const char* out_dir) {
  if (int rc = require(cfg && fit_dir && sites_csv && out_dir,
                       "mx_cmd_predict: null argument")) {
    return rc;
  }
  return guarded([&] { cmd_predict(cfg->doc, fit_dir, sites_csv, out_dir); });
}

int mx_cmd_evaluate(const mx_config* cfg, const char* const* data_csvs,
                    int n_datasets, uint64_t seed, const char* out_dir,
                    int threads) {
  if (int rc = require(cfg && data_csvs && n_datasets > 0 && out_dir,
                       "mx_cmd_evaluate: null or empty argument")) {
    return rc;
  }
  return guarded([&] {
    std::vector<std::string> paths;
    paths.reserve(n_datasets);
    for (int i = 0; i < n_datasets; ++i) {
      if (!data_csvs[i]) throw ConfigError("mx_cmd_evaluate: null dataset path");
      paths.emplace_back(data_csvs[i]);
    }
    cmd_evaluate(cfg->doc, paths, seed, out_dir, threads);
  });
}

}  // extern "C"
