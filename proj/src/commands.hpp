#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "config.hpp"
#include "mcmc.hpp"
#include "prediction.hpp"
#include "simulators.hpp"

namespace maxmix {

// config -> typed objects (unknown keys rejected)
SimConfig sim_config_from(const ConfigDoc& doc, std::uint64_t seed);
ChainConfig chain_config_from(const ConfigDoc& doc, std::uint64_t seed);

// truth-table CSVs written next to simulated datasets
void write_truth_tables(const TruthTables& t, const std::string& dir);
TruthTables read_truth_tables(const std::string& dir);

// command implementations behind the CLI / C API
void cmd_simulate(const ConfigDoc& doc, std::uint64_t seed, const std::string& out_dir);
void cmd_fit(const ConfigDoc& doc, const std::string& data_path, std::uint64_t seed,
             const std::string& out_dir, const std::string& resume_checkpoint);
void cmd_predict(const ConfigDoc& doc, const std::string& fit_dir,
                 const std::string& sites_path, const std::string& out_dir);
void cmd_evaluate(const ConfigDoc& doc, const std::vector<std::string>& data_paths,
                  std::uint64_t seed, const std::string& out_dir, int threads);

}  // namespace maxmix
