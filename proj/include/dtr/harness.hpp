#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dtr/environment.hpp"
#include "dtr/policies.hpp"
#include "dtr/replay.hpp"

namespace dtr {

struct SweepGrid {
  std::vector<int> q;
  std::vector<double> h;  // applied to both h1 and h2
};

struct ReplaySettings {
  std::filesystem::path dataset;
  DatasetSchema schema;
  PropensitySpec propensity;
  long T = 500;
  int bootstrap_reps = 50;
};

struct ExperimentConfig {
  ProblemInstance instance;
  bool has_instance = false;
  std::vector<PolicyConfig> policies;
  long T = 10000;
  int paths = 192;
  std::uint64_t base_seed = 1;
  double regret_precision = kDefaultOraclePrecision;
  std::filesystem::path output_dir = "out";
  long record_every = 50;
  int threads = 0;  // 0: OpenMP default
  std::optional<SweepGrid> sweep;
  std::optional<ReplaySettings> replay;
};

// Parses a config document. Relative `instance` and `replay.dataset` paths
// are resolved against `base_dir`. Throws ConfigError naming the field.
ExperimentConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);

// Seed of the environment stream for a path; shared by every policy so the
// policies face the same contexts and noise draws as far as their actions
// allow.
inline std::uint64_t path_seed(std::uint64_t base_seed, int path_index) {
  return base_seed + static_cast<std::uint64_t>(path_index);
}
std::uint64_t policy_seed(std::uint64_t base_seed, int path_index, int policy_index);

// Cumulative regret of one path at the recorded rounds.
struct PathResult {
  std::vector<double> cumulative;  // aligned with recorded_rounds()
  long imprecise_steps = 0;        // oracle evaluations that missed the precision
  double min_step_regret = 0.0;
  bool failed = false;
  std::string error;
};

// Rounds at which curves are recorded: multiples of `every`, plus T.
std::vector<long> recorded_rounds(long T, long every);

PathResult simulate_path(const ProblemInstance& inst, Policy& policy, long T, std::uint64_t env_seed,
                         double precision, const std::vector<long>& rounds);

struct PolicyCurve {
  std::string name;
  PolicyVariant variant;
  std::vector<long> t;
  std::vector<double> mean;
  std::vector<double> stderr_;
  std::vector<PathResult> paths;  // in path-index order
  int failed_paths = 0;
};

struct SimulationResult {
  std::vector<PolicyCurve> curves;
  int failed_paths = 0;
};

enum class Execution { serial, parallel };

// Runs every (policy, path) pair; the reduction always runs in path order so
// the result does not depend on the execution mode or thread count.
SimulationResult run_simulation(const ExperimentConfig& config, Execution mode = Execution::parallel);

// Mean and standard error (n - 1 denominator; 0 for a single value).
std::pair<double, double> mean_and_stderr(const std::vector<double>& values);

// regret_<name>.csv, summary.json and, with dump_paths, paths_<name>.csv.
void write_simulation(const SimulationResult& result, const ExperimentConfig& config,
                      const std::filesystem::path& dir, bool dump_paths);

struct SweepCell {
  int q;
  double h;
  std::filesystem::path dir;
  int failed_paths = 0;
};

// Runs the grid; every cell is written below output_dir/q<q>_h<h>/ and an
// index sweep_index.csv is written to output_dir.
std::vector<SweepCell> run_sweep(const ExperimentConfig& config, bool dump_paths = false);
// Config of one grid cell: q and h overwritten for every policy.
ExperimentConfig sweep_cell_config(const ExperimentConfig& config, int q, double h);

struct ReplayRep {
  int rep = 0;
  bool failed = false;
  std::string error;
  ReplayResult result;
};

struct PolicyReplayReport {
  std::string name;
  std::vector<ReplayRep> reps;
  double mean = 0.0;
  double stderr_ = 0.0;
  int failed_reps = 0;
};

struct ReplayReport {
  PropensityReport propensity;
  std::vector<std::string> warnings;
  std::vector<PolicyReplayReport> policies;
  std::size_t records = 0;
  int failed_reps = 0;
};

ReplayReport run_replay(const ExperimentConfig& config);
void write_replay(const ReplayReport& report, const ExperimentConfig& config, const std::filesystem::path& dir);

// Loads everything the config refers to without running anything. Returns
// human-readable notes; throws on the first error.
std::vector<std::string> validate_config(const ExperimentConfig& config);

}  // namespace dtr
