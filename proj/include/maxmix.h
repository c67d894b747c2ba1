/* maxmix — Bayesian spatial extremes: hierarchical extreme-value process,
 * stick-breaking extension and the max-mixture hybrid.
 *
 * C interface to the shared library.  All functions return a status code
 * (MX_OK on success); objects are opaque handles released with the matching
 * _free call.  The last error message of the calling thread is available via
 * mx_last_error().
 */
#ifndef MAXMIX_H
#define MAXMIX_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

enum {
  MX_OK = 0,
  MX_ERR = 1,         /* unexpected failure */
  MX_ERR_CONFIG = 2,  /* invalid configuration / arguments */
  MX_ERR_DATA = 3,    /* unreadable, malformed or inconsistent data */
  MX_ERR_NUMERIC = 4  /* numerical failure */
};

typedef struct mx_config mx_config;
typedef struct mx_dataset mx_dataset;
typedef struct mx_samples mx_samples;

const char* mx_version(void);
/* message of the most recent failure on this thread ("" if none) */
const char* mx_last_error(void);

/* ---- configuration ---------------------------------------------------- */
int mx_config_create(mx_config** out);
int mx_config_load(const char* path, mx_config** out);
/* key is "section.key"; value is the textual form used in config files */
int mx_config_set(mx_config* cfg, const char* key, const char* value);
void mx_config_free(mx_config* cfg);

/* ---- datasets ---------------------------------------------------------- */
int mx_dataset_read_csv(const char* path, mx_dataset** out);
int mx_dataset_write_csv(const mx_dataset* ds, const char* path);
int mx_dataset_dims(const mx_dataset* ds, int* n_sites, int* n_times);
int mx_dataset_value(const mx_dataset* ds, int t, int site, double* out);
void mx_dataset_free(mx_dataset* ds);

/* simulate one dataset from the [simulation] section of the config */
int mx_simulate(const mx_config* cfg, uint64_t seed, mx_dataset** out);

/* ---- model fitting ----------------------------------------------------- */
/* Metropolis-within-Gibbs fit driven by [model], [priors] and [mcmc] */
int mx_fit(const mx_config* cfg, const mx_dataset* ds, uint64_t seed,
           mx_samples** out);
int mx_samples_read_dir(const char* fit_dir, mx_samples** out);
int mx_samples_write_dir(const mx_samples* s, const char* dir);
int mx_samples_count(const mx_samples* s, int* out);
/* posterior probability of asymptotic dependence, P(delta = 1 | data);
 * max-mixture samples only */
int mx_samples_prob_delta(const mx_samples* s, double* out);
void mx_samples_free(mx_samples* s);

/* ---- whole commands (the CLI surface) ---------------------------------- */
int mx_cmd_simulate(const mx_config* cfg, uint64_t seed, const char* out_dir);
int mx_cmd_fit(const mx_config* cfg, const char* data_csv, uint64_t seed,
               const char* out_dir, const char* resume_checkpoint_or_null);
int mx_cmd_predict(const mx_config* cfg, const char* fit_dir,
                   const char* sites_csv, const char* out_dir);
int mx_cmd_evaluate(const mx_config* cfg, const char* const* data_csvs,
                    int n_datasets, uint64_t seed, const char* out_dir,
                    int threads);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* MAXMIX_H */
