#pragma once

#include <map>
#include <string>
#include <vector>

#include "marlab/config.hpp"

namespace marlab {

struct RunRecord {
  std::string experiment;
  std::uint64_t seed = 0;
  std::uint64_t fingerprint = 0;
  std::string run_dir;
  std::vector<std::string> files;  // paths relative to run_dir
  double duration_s = 0.0;
  bool aborted = false;
  std::string abort_reason;
  std::map<std::string, double> summary;
};

// Output root: MARLAB_OUT_ROOT environment variable overrides relative
// out_dir locations.
std::string resolve_out_dir(const std::string& out_dir);

// One deterministic training run: same config and seed give byte-identical
// metric CSVs. Metrics stream to <out>/<experiment>/seed<N>/ incrementally;
// a checkpoint and a JSON manifest are written at the end. Training aborts
// (non-finite losses) are recorded, not rethrown.
RunRecord run_one_seed(const ExperimentConfig& cfg, std::uint64_t seed);

// All seeds; runs are fully independent, so up to max_parallel of them may
// execute concurrently (each writes its own subdirectory).
std::vector<RunRecord> run_experiment(const ExperimentConfig& cfg, int max_parallel = 1);

std::string model_tag(const ExperimentConfig& cfg);

}  // namespace marlab
