#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace mrlab {

// Experiment selector; to_experiment_kind accepts the snake_case names used
// in config files: smsr, smr, holder, coercivity, mfcq, growth, ab_check,
// euler_study, solve.
enum class ExperimentKind {
  Smsr,
  Smr,
  Holder,
  Coercivity,
  Mfcq,
  Growth,
  AbCheck,
  EulerStudy,
  Solve,
};

ExperimentKind to_experiment_kind(const std::string& name);
std::string to_string(ExperimentKind kind);

// Parsed run configuration.  `tolerances` carries optional named reals that
// tune the experiment (solver tolerances, sample counts, thresholds); the
// recognised names are documented in the README.  Integers passed there are
// rounded to the nearest whole number where an integer is expected.
struct ExperimentConfig {
  std::string problem_id;
  ExperimentKind experiment = ExperimentKind::Solve;
  std::uint64_t seed = 0;
  std::vector<double> magnitudes;      // sweep experiments; ascending
  int N = 0;                           // trajectory grid; 0 = problem default
  int Nx = 0, Nt = 0;                  // space-time grid; 0 = problem default
  std::vector<int> grids;              // euler_study ladder
  std::map<std::string, double> tolerances;
  std::vector<std::string> components; // disturbance blocks; empty = default
  bool rho_constant = true;            // constant-in-time stationarity shift
  std::string variant = "AA2p";        // growth sampling variant (affine)
  int directions = 10;                 // samples per magnitude
  std::string output_dir;
};

// Parse and validate a JSON config.  Throws std::invalid_argument with a
// field-specific message on schema violations (missing seed, descending
// magnitudes, unknown keys, wrong types).
ExperimentConfig parse_experiment_config(const std::string& json_text);
ExperimentConfig load_experiment_config(const std::string& path);

struct RunOutcome {
  // 0 success (possibly with warnings), 2 configuration error,
  // 3 reference solve or output failure
  int exit_code = 0;
  std::string message;
  std::vector<std::string> warnings;
};

// Execute the experiment and write records.csv, report.json and any
// study-specific CSVs into config.output_dir.  `jobs` caps worker threads;
// outputs are assembled in sample-index order and do not depend on it.
// When `json_records` is set a records.json copy accompanies the CSV.
RunOutcome run_experiment(const ExperimentConfig& config, int jobs = 1,
                          bool json_records = false);

}  // namespace mrlab
