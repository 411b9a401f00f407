#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "ecl/analysis.hpp"
#include "ecl/artifacts.hpp"
#include "ecl/experiment.hpp"

namespace fs = std::filesystem;
using namespace ecl;

namespace {

constexpr int kUsageError = 2;

ExperimentConfig load_with_overrides(const fs::path& path) {
  ExperimentConfig config = load_config(path);
  if (const auto seed = seed_override_from_env()) apply_seed_override(config, *seed);
  return config;
}

ParameterVector load_params_for(const fs::path& path, const ExperimentConfig& config) {
  ParameterVector params = read_params_binary(path);
  const MlpConfig expected = make_train_config(config).network;
  if (!(params.config() == expected)) {
    throw ConfigError(path.string() + ": network shape does not match the config");
  }
  return params;
}

int cmd_train(const fs::path& config_path, fs::path out) {
  const ExperimentConfig config = load_with_overrides(config_path);
  if (out.empty()) out = config.output_dir;
  if (out.empty()) throw ConfigError("no output directory: pass --out or set output_dir");
  const RunSummary s = run(config, out);
  std::printf("%s: %s", out.string().c_str(), to_string(s.status).c_str());
  if (s.relative_l2) std::printf(", relative L2 %s", format_double(*s.relative_l2).c_str());
  std::printf("\n");
  return exit_code(s.status);
}

int cmd_evaluate(const fs::path& params_path, const fs::path& config_path, const fs::path& out) {
  const ExperimentConfig config = load_with_overrides(config_path);
  const ParameterVector params = load_params_for(params_path, config);
  const Problem problem = make_problem(config);
  const ModelEvaluation eval = evaluate_model(params, problem, config.eval_resolution);
  write_prediction_csv(out / "prediction.csv", eval);
  write_exact_grid_csv(out / "exact_grid.csv", problem, config.eval_resolution);
  nlohmann::json j;
  j["relative_l2"] = eval.relative_l2;
  j["grid_points"] = eval.points.cols();
  std::ofstream(out / "evaluation.json") << j.dump(2) << '\n';
  std::printf("relative L2 %s\n", format_double(eval.relative_l2).c_str());
  return 0;
}

int cmd_landscape(const fs::path& params_path, const fs::path& config_path,
                  std::optional<std::uint64_t> seed, std::optional<double> half_range,
                  std::optional<int> resolution, fs::path alm_path, const fs::path& out) {
  ExperimentConfig config = load_config(config_path);
  if (seed) config.seeds.landscape = *seed;
  if (half_range) config.landscape_half_range = *half_range;
  if (resolution) config.landscape_resolution = *resolution;
  if (const auto env = seed_override_from_env()) apply_seed_override(config, *env);
  config = config_from_json(config_to_json(config));

  const ParameterVector params = load_params_for(params_path, config);
  AlmState alm;
  if (config.objective == ObjectiveKind::Pecann) {
    if (alm_path.empty()) alm_path = params_path.parent_path() / "alm.json";
    alm = read_alm_state(alm_path);
  }
  const LandscapeGrid grid = scan_landscape(
      params, training_loss(config.objective, final_batch(config), alm),
      make_landscape_settings(config));
  write_landscape(out / "landscape.csv", out / "landscape.json", grid);
  std::printf("center loss %s\n", format_double(grid.center_loss).c_str());
  return 0;
}

int cmd_histogram(const fs::path& params_path, int bins, const fs::path& out) {
  const ParameterVector params = read_params_binary(params_path);
  write_histograms(out / "histogram.csv", out / "histogram_summary.csv",
                   weight_histograms(params, bins));
  return 0;
}

int cmd_matrix(const fs::path& file, const fs::path& out, int jobs) {
  std::vector<ExperimentConfig> configs = load_matrix(file);
  if (const auto seed = seed_override_from_env()) {
    for (auto& c : configs) apply_seed_override(c, *seed);
  }
  const MatrixResult result = run_matrix(configs, out, jobs);
  for (std::size_t k = 0; k < result.runs.size(); ++k) {
    const RunSummary& r = result.runs[k];
    std::printf("%s %s", run_directory_name(k, configs[k]).c_str(), to_string(r.status).c_str());
    if (r.relative_l2) std::printf(" %s", format_double(*r.relative_l2).c_str());
    if (!r.error.empty()) std::printf(" (%s)", r.error.c_str());
    std::printf("\n");
  }
  return result.all_succeeded() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Train and diagnose PINN, PECANN and supervised Poisson solvers"};
  app.require_subcommand(1);

  fs::path config_path, params_path, out, alm_path, matrix_file;
  int bins = 81;
  int jobs = 1;
  std::optional<std::uint64_t> seed;
  std::optional<double> half_range;
  std::optional<int> resolution;

  auto* train = app.add_subcommand("train", "Train one configuration and write all artifacts");
  train->add_option("--config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  train->add_option("--out", out, "Output directory (defaults to the config's output_dir)");

  auto* evaluate = app.add_subcommand("evaluate", "Relative L2 and prediction CSV for saved parameters");
  evaluate->add_option("--params", params_path, "params.bin")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--out", out, "Output directory")->required();

  auto* landscape = app.add_subcommand("landscape", "Scan the loss landscape around saved parameters");
  landscape->add_option("--params", params_path, "params.bin")->required()->check(CLI::ExistingFile);
  landscape->add_option("--config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  landscape->add_option("--seed", seed, "Direction seed (overrides the config)");
  landscape->add_option("--half-range", half_range, "Grid half width");
  landscape->add_option("--resolution", resolution, "Grid nodes per axis (odd)");
  landscape->add_option("--alm", alm_path, "ALM state for PECANN (default: alm.json beside params)");
  landscape->add_option("--out", out, "Output directory")->required();

  auto* histogram = app.add_subcommand("histogram", "Per-layer weight histograms of saved parameters");
  histogram->add_option("--params", params_path, "params.bin")->required()->check(CLI::ExistingFile);
  histogram->add_option("--bins", bins, "Bins per layer")->check(CLI::PositiveNumber);
  histogram->add_option("--out", out, "Output directory")->required();

  auto* matrix = app.add_subcommand("matrix", "Run a batch of configurations");
  matrix->add_option("--file", matrix_file, "Matrix file (JSON)")->required()->check(CLI::ExistingFile);
  matrix->add_option("--out", out, "Output root")->required();
  matrix->add_option("--jobs", jobs, "Concurrent runs")->check(CLI::PositiveNumber);

  CLI11_PARSE(app, argc, argv);

  try {
    if (!out.empty() && !train->parsed()) fs::create_directories(out);
    if (train->parsed()) return cmd_train(config_path, out);
    if (evaluate->parsed()) return cmd_evaluate(params_path, config_path, out);
    if (landscape->parsed()) {
      return cmd_landscape(params_path, config_path, seed, half_range, resolution, alm_path, out);
    }
    if (histogram->parsed()) return cmd_histogram(params_path, bins, out);
    if (matrix->parsed()) return cmd_matrix(matrix_file, out, jobs);
  } catch (const ConfigError& e) {
    std::cerr << "ecl: " << e.what() << '\n';
    return kUsageError;
  } catch (const std::exception& e) {
    std::cerr << "ecl: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
