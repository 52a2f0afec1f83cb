#pragma once

#include <map>
#include <string>
#include <vector>

#include "streamad/config.hpp"
#include "streamad/metrics.hpp"

namespace streamad {

struct RunRecord {
  ExperimentConfig config;  // resolved
  std::uint64_t seed = 0;
  std::map<std::string, ResultMatrix> matrices;  // keyed by metric name
  MemoryReport memory;
  TimingReport timing;
  std::string provenance;  // hash of (resolved config, seed)

  std::string run_dir_name() const;
};

TaskStream build_stream(const ExperimentConfig& cfg);

// One (config, seed) cell: strategy loop over the stream, row t of every
// metric matrix filled after training through task t. Training never reads a
// test split.
RunRecord run_experiment(const ExperimentConfig& cfg, std::uint64_t seed);

void save_run_record(const RunRecord& record, const std::string& results_dir);
RunRecord load_run_record(const std::string& run_dir);
std::vector<RunRecord> load_all_records(const std::string& results_dir);

// Table-1-shaped grid (one column per record) plus per-method SVG curves of
// average-so-far pixel f1 vs tasks seen, one line per strategy. Records over
// different streams are refused.
void write_report(const std::vector<RunRecord>& records,
                  const std::string& out_dir);

std::string provenance_hash(const std::string& resolved_config,
                            std::uint64_t seed);

}  // namespace streamad
