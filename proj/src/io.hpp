#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "config.hpp"
#include "mcmc.hpp"
#include "simulators.hpp"

namespace maxmix {

// long-format dataset CSV: header `site_id,x,y,t,value`, dense, no NaN
void write_dataset_csv(const Dataset& ds, const std::string& path);
Dataset read_dataset_csv(const std::string& path);

// `site_id,x,y`
void write_sites_csv(const std::vector<Site>& sites, const std::string& path);
std::vector<Site> read_sites_csv(const std::string& path);

// posterior samples: one row per stored draw, flattened fields
void write_samples_csv(const PosteriorSamples& samples, const std::string& path);

// fit output directory: samples.csv + model.ini + sites.csv + knots.csv
void write_samples_dir(const PosteriorSamples& samples, const std::string& dir);
PosteriorSamples read_samples_dir(const std::string& dir);

void write_acceptance_csv(const PosteriorSamples& samples, const std::string& path);

std::uint64_t fnv1a64_file(const std::string& path);

// run manifest: command, seed, artifact version, input digests, full config
void write_manifest(const std::string& path, const std::string& command,
                    std::uint64_t seed, const ConfigDoc& config,
                    const std::vector<std::pair<std::string, std::string>>& inputs);

void write_text_file(const std::string& path, const std::string& text);
std::string version_string();

}  // namespace maxmix
