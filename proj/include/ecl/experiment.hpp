#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ecl/analysis.hpp"
#include "ecl/problems.hpp"
#include "ecl/training.hpp"

namespace ecl {

// Thrown for malformed or inconsistent experiment configs.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ExperimentSeeds {
  std::uint64_t init = 7;
  std::uint64_t sampling = 11;
  std::uint64_t landscape = 13;
};

struct ExperimentConfig {
  std::string name;
  std::string problem = "poisson1d";  // poisson1d | poisson2d
  int omega = 5;                      // poisson1d only
  ObjectiveKind objective = ObjectiveKind::Supervised;
  int hidden_layers = 8;
  int hidden_width = 20;
  int n_domain = 600;
  int n_boundary = 2;
  int epochs = 30000;
  ExperimentSeeds seeds;
  AdamSettings optimizer;
  SchedulerSettings scheduler;
  AlmSettings alm;
  bool resample_every_epoch = false;
  double landscape_half_range = 1.0;
  int landscape_resolution = 51;
  int histogram_bins = 81;
  int eval_resolution = 0;  // 0 = problem default
  std::string output_dir;   // optional; the CLI --out flag wins
};

// Defaults for a problem/objective pair: 600/2 points and 30000 epochs in
// 1-D, 600/600 points and 50000 epochs in 2-D.
ExperimentConfig default_config(const std::string& problem, ObjectiveKind objective,
                                int omega = 5);

// Missing keys take the per-problem defaults, so {"problem": ..., "objective": ...}
// is a complete config. Unknown keys are rejected.
ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const ExperimentConfig& config);
ExperimentConfig load_config(const std::filesystem::path& path);
// Canonical text form; parse(serialize(c)) serializes to the same bytes.
std::string serialize_config(const ExperimentConfig& config);

// Parsed value of ECL_SEED, if set. Throws ConfigError on a malformed value.
std::optional<std::uint64_t> seed_override_from_env();
void apply_seed_override(ExperimentConfig& config, std::uint64_t seed);

Problem make_problem(const ExperimentConfig& config);
TrainConfig make_train_config(const ExperimentConfig& config);
LandscapeSettings make_landscape_settings(const ExperimentConfig& config);

// The training objective at fixed batch and ALM state, as used for the
// final loss. Owns copies of its inputs.
LossFunction training_loss(ObjectiveKind kind, const SampleBatch& batch, const AlmState& alm);

// Batch seen by the last training epoch.
SampleBatch final_batch(const ExperimentConfig& config);

enum class RunStatus { Converged, Diverged, Error };
std::string to_string(RunStatus status);
// 0 converged, 3 diverged, 1 error.
int exit_code(RunStatus status);

struct RunSummary {
  RunStatus status = RunStatus::Converged;
  std::optional<double> relative_l2;
  std::optional<double> final_loss;
  int epochs_completed = 0;
  std::string divergence_reason;
  std::string error;
  std::filesystem::path output_dir;
};

// Trains, evaluates, scans the landscape and writes every artifact into
// out_dir. A diverged run still writes what it can.
RunSummary run(const ExperimentConfig& config, const std::filesystem::path& out_dir);

struct MatrixResult {
  std::vector<ExperimentConfig> configs;
  std::vector<RunSummary> runs;  // matrix order
  bool all_succeeded() const;
};

// Reads {"runs": [...]} or a bare array of configs.
std::vector<ExperimentConfig> load_matrix(const std::filesystem::path& path);

// Directory name for entry `index`, e.g. 003_poisson1d_w15_pecann.
std::string run_directory_name(std::size_t index, const ExperimentConfig& config);

// Runs every entry under out_root with up to `jobs` runs at a time and
// writes out_root/matrix_summary.csv. A failing run is recorded and the
// batch continues.
MatrixResult run_matrix(const std::vector<ExperimentConfig>& configs,
                        const std::filesystem::path& out_root, int jobs = 1);

}  // namespace ecl
