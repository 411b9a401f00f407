#include "ecl/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <initializer_list>
#include <set>
#include <sstream>
#include <thread>

#include "ecl/artifacts.hpp"
#include "ecl/random.hpp"

namespace ecl {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  const std::set<std::string> known(allowed.begin(), allowed.end());
  for (const auto& item : j.items()) {
    if (known.count(item.key()) == 0) {
      throw ConfigError("unknown key '" + item.key() + "' in " + where);
    }
  }
}

template <typename T>
void read_if(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + "." + key + " has the wrong type");
  }
}

void read_seed(const json& j, const char* key, std::uint64_t& out) {
  if (!j.contains(key)) return;
  const json& v = j.at(key);
  if (!v.is_number_unsigned()) {
    throw ConfigError(std::string("seeds.") + key + " must be a non-negative integer");
  }
  out = v.get<std::uint64_t>();
}

void validate(const ExperimentConfig& c) {
  const bool one_d = c.problem == "poisson1d";
  if (!one_d && c.problem != "poisson2d") {
    throw ConfigError("problem must be poisson1d or poisson2d, got '" + c.problem + "'");
  }
  if (one_d && c.omega <= 0) throw ConfigError("omega must be positive");
  if (!one_d && c.omega != 15) throw ConfigError("poisson2d has a fixed wave number of 15");
  if (c.hidden_layers < 1 || c.hidden_width < 1) throw ConfigError("network sizes must be >= 1");
  if (c.n_domain < 1) throw ConfigError("points.domain must be >= 1");
  if (one_d && c.n_boundary != 2) throw ConfigError("poisson1d uses exactly 2 boundary points");
  if (!one_d && c.n_boundary < 4) throw ConfigError("poisson2d needs at least 4 boundary points");
  if (c.epochs < 0) throw ConfigError("epochs must be >= 0");
  if (!(c.optimizer.lr > 0.0)) throw ConfigError("optimizer.lr must be positive");
  if (c.scheduler.patience < 0 || !(c.scheduler.factor > 0.0 && c.scheduler.factor <= 1.0)) {
    throw ConfigError("scheduler needs patience >= 0 and 0 < factor <= 1");
  }
  if (!(c.alm.mu_initial > 0.0) || !(c.alm.mu_max >= c.alm.mu_initial) || !(c.alm.growth >= 1.0)) {
    throw ConfigError("alm needs 0 < mu_initial <= mu_max and growth >= 1");
  }
  if (!(c.landscape_half_range > 0.0)) throw ConfigError("landscape.half_range must be positive");
  if (c.landscape_resolution < 1 || c.landscape_resolution % 2 == 0) {
    throw ConfigError("landscape.resolution must be odd");
  }
  if (c.histogram_bins < 1) throw ConfigError("histogram_bins must be >= 1");
  if (c.eval_resolution < 0 || c.eval_resolution == 1) {
    throw ConfigError("eval_resolution must be 0 (default) or >= 2");
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  out << text;
  out.flush();
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

json optional_number(const std::optional<double>& v) {
  if (v && std::isfinite(*v)) return *v;
  return nullptr;
}

json decision_values(const ExperimentConfig& c) {
  json d;
  d["weight_init"] = "glorot_uniform";
  d["bias_init"] = "zero";
  d["float"] = "float64";
  d["derivatives"] = "forward value/gradient/laplacian streams, reverse parameter adjoints";
  d["parameter_layout"] = "per layer: row-major W (fan_out x fan_in), then b";
  d["sampling"] = "uniform on the open domain";
  d["resample_every_epoch"] = c.resample_every_epoch;
  d["boundary_assignment"] = c.problem == "poisson2d" ? "round-robin faces" : "endpoints";
  d["forcing"] = "closed form";
  d["epochs"] = c.epochs;
  d["alm_update"] = "once per epoch, after the optimizer step";
  d["penalty_schedule"] = {{"mu_initial", c.alm.mu_initial},
                           {"growth", c.alm.growth},
                           {"mu_max", c.alm.mu_max},
                           {"shrink_factor", c.alm.shrink_factor},
                           {"first_update_grows", false}};
  d["adam"] = {{"beta1", c.optimizer.beta1}, {"beta2", c.optimizer.beta2},
               {"epsilon", c.optimizer.epsilon}};
  d["scheduler"] = {{"threshold", c.scheduler.threshold},
                    {"threshold_mode", "relative"},
                    {"min_lr", c.scheduler.min_lr},
                    {"monitor", "total training loss"}};
  d["batching"] = "full batch";
  d["pecann_domain_loss"] = "sum";
  d["landscape_grid"] = {{"half_range", c.landscape_half_range},
                         {"resolution", c.landscape_resolution}};
  d["landscape_normalization"] = "filter: neuron weight row plus bias";
  d["landscape_loss"] = "training objective, final batch, frozen multipliers";
  d["histogram_range"] = "per-layer min/max";
  return d;
}

json summary_json(const ExperimentConfig& c, const RunSummary& s) {
  json j;
  j["name"] = c.name;
  j["problem"] = c.problem;
  j["omega"] = c.omega;
  j["objective"] = to_string(c.objective);
  j["status"] = to_string(s.status);
  j["diverged"] = s.status == RunStatus::Diverged;
  j["divergence_reason"] = s.divergence_reason;
  j["relative_l2"] = optional_number(s.relative_l2);
  j["final_loss"] = optional_number(s.final_loss);
  j["epochs_completed"] = s.epochs_completed;
  return j;
}

}  // namespace

ExperimentConfig default_config(const std::string& problem, ObjectiveKind objective, int omega) {
  ExperimentConfig c;
  c.problem = problem;
  c.objective = objective;
  if (problem == "poisson2d") {
    c.omega = 15;
    c.n_boundary = 600;
    c.epochs = 50000;
  } else {
    c.omega = omega;
  }
  return c;
}

ExperimentConfig config_from_json(const json& j) {
  check_keys(j,
             {"name", "problem", "omega", "objective", "network", "points", "epochs", "seeds",
              "optimizer", "scheduler", "alm", "resample_every_epoch", "landscape",
              "histogram_bins", "eval_resolution", "output_dir"},
             "config");
  if (!j.contains("problem") || !j.contains("objective")) {
    throw ConfigError("config must name at least 'problem' and 'objective'");
  }
  std::string problem;
  std::string objective;
  read_if(j, "problem", problem, "config");
  read_if(j, "objective", objective, "config");
  ObjectiveKind kind;
  try {
    kind = parse_objective(objective);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  int omega = 5;
  read_if(j, "omega", omega, "config");
  ExperimentConfig c = default_config(problem, kind, omega);
  if (problem == "poisson2d") read_if(j, "omega", c.omega, "config");

  read_if(j, "name", c.name, "config");
  read_if(j, "epochs", c.epochs, "config");
  read_if(j, "resample_every_epoch", c.resample_every_epoch, "config");
  read_if(j, "histogram_bins", c.histogram_bins, "config");
  read_if(j, "eval_resolution", c.eval_resolution, "config");
  read_if(j, "output_dir", c.output_dir, "config");

  if (j.contains("network")) {
    const json& n = j.at("network");
    check_keys(n, {"hidden_layers", "hidden_width"}, "network");
    read_if(n, "hidden_layers", c.hidden_layers, "network");
    read_if(n, "hidden_width", c.hidden_width, "network");
  }
  if (j.contains("points")) {
    const json& p = j.at("points");
    check_keys(p, {"domain", "boundary"}, "points");
    read_if(p, "domain", c.n_domain, "points");
    read_if(p, "boundary", c.n_boundary, "points");
  }
  if (j.contains("seeds")) {
    const json& s = j.at("seeds");
    check_keys(s, {"init", "sampling", "landscape"}, "seeds");
    read_seed(s, "init", c.seeds.init);
    read_seed(s, "sampling", c.seeds.sampling);
    read_seed(s, "landscape", c.seeds.landscape);
  }
  if (j.contains("optimizer")) {
    const json& o = j.at("optimizer");
    check_keys(o, {"lr", "beta1", "beta2", "epsilon"}, "optimizer");
    read_if(o, "lr", c.optimizer.lr, "optimizer");
    read_if(o, "beta1", c.optimizer.beta1, "optimizer");
    read_if(o, "beta2", c.optimizer.beta2, "optimizer");
    read_if(o, "epsilon", c.optimizer.epsilon, "optimizer");
  }
  if (j.contains("scheduler")) {
    const json& s = j.at("scheduler");
    check_keys(s, {"patience", "factor", "threshold", "min_lr"}, "scheduler");
    read_if(s, "patience", c.scheduler.patience, "scheduler");
    read_if(s, "factor", c.scheduler.factor, "scheduler");
    read_if(s, "threshold", c.scheduler.threshold, "scheduler");
    read_if(s, "min_lr", c.scheduler.min_lr, "scheduler");
  }
  if (j.contains("alm")) {
    const json& a = j.at("alm");
    check_keys(a, {"mu_initial", "growth", "mu_max", "shrink_factor"}, "alm");
    read_if(a, "mu_initial", c.alm.mu_initial, "alm");
    read_if(a, "growth", c.alm.growth, "alm");
    read_if(a, "mu_max", c.alm.mu_max, "alm");
    read_if(a, "shrink_factor", c.alm.shrink_factor, "alm");
  }
  if (j.contains("landscape")) {
    const json& l = j.at("landscape");
    check_keys(l, {"half_range", "resolution"}, "landscape");
    read_if(l, "half_range", c.landscape_half_range, "landscape");
    read_if(l, "resolution", c.landscape_resolution, "landscape");
  }
  validate(c);
  return c;
}

json config_to_json(const ExperimentConfig& c) {
  json j;
  j["name"] = c.name;
  j["problem"] = c.problem;
  j["omega"] = c.omega;
  j["objective"] = to_string(c.objective);
  j["network"] = {{"hidden_layers", c.hidden_layers}, {"hidden_width", c.hidden_width}};
  j["points"] = {{"domain", c.n_domain}, {"boundary", c.n_boundary}};
  j["epochs"] = c.epochs;
  j["seeds"] = {{"init", c.seeds.init}, {"sampling", c.seeds.sampling},
                {"landscape", c.seeds.landscape}};
  j["optimizer"] = {{"lr", c.optimizer.lr},
                    {"beta1", c.optimizer.beta1},
                    {"beta2", c.optimizer.beta2},
                    {"epsilon", c.optimizer.epsilon}};
  j["scheduler"] = {{"patience", c.scheduler.patience},
                    {"factor", c.scheduler.factor},
                    {"threshold", c.scheduler.threshold},
                    {"min_lr", c.scheduler.min_lr}};
  j["alm"] = {{"mu_initial", c.alm.mu_initial},
              {"growth", c.alm.growth},
              {"mu_max", c.alm.mu_max},
              {"shrink_factor", c.alm.shrink_factor}};
  j["resample_every_epoch"] = c.resample_every_epoch;
  j["landscape"] = {{"half_range", c.landscape_half_range},
                    {"resolution", c.landscape_resolution}};
  j["histogram_bins"] = c.histogram_bins;
  j["eval_resolution"] = c.eval_resolution;
  j["output_dir"] = c.output_dir;
  return j;
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

std::string serialize_config(const ExperimentConfig& config) {
  return config_to_json(config).dump(2) + "\n";
}

std::optional<std::uint64_t> seed_override_from_env() {
  const char* raw = std::getenv("ECL_SEED");
  if (raw == nullptr || *raw == '\0') return std::nullopt;
  if (*raw == '-') throw ConfigError("ECL_SEED must be a non-negative integer");
  errno = 0;
  char* end = nullptr;
  const unsigned long long value = std::strtoull(raw, &end, 10);
  if (errno != 0 || end == raw || *end != '\0') {
    throw ConfigError(std::string("ECL_SEED must be a non-negative integer, got '") + raw + "'");
  }
  return static_cast<std::uint64_t>(value);
}

void apply_seed_override(ExperimentConfig& config, std::uint64_t seed) {
  config.seeds.init = seed;
  config.seeds.sampling = seed;
  config.seeds.landscape = seed;
}

Problem make_problem(const ExperimentConfig& config) {
  validate(config);
  return config.problem == "poisson2d" ? Problem::poisson2d() : Problem::poisson1d(config.omega);
}

TrainConfig make_train_config(const ExperimentConfig& config) {
  TrainConfig t;
  t.network.input_dim = config.problem == "poisson2d" ? 2 : 1;
  t.network.hidden_layers = config.hidden_layers;
  t.network.hidden_width = config.hidden_width;
  t.epochs = config.epochs;
  t.n_domain = config.n_domain;
  t.n_boundary = config.n_boundary;
  t.init_seed = config.seeds.init;
  t.sample_seed = config.seeds.sampling;
  t.resample_every_epoch = config.resample_every_epoch;
  t.adam = config.optimizer;
  t.scheduler = config.scheduler;
  t.alm = config.alm;
  return t;
}

LandscapeSettings make_landscape_settings(const ExperimentConfig& config) {
  LandscapeSettings s;
  s.seed = config.seeds.landscape;
  s.half_range = config.landscape_half_range;
  s.resolution = config.landscape_resolution;
  return s;
}

LossFunction training_loss(ObjectiveKind kind, const SampleBatch& batch, const AlmState& alm) {
  return [kind, batch, alm](const ParameterVector& params) {
    return objective_total(kind, params, batch,
                           kind == ObjectiveKind::Pecann ? &alm : nullptr);
  };
}

SampleBatch final_batch(const ExperimentConfig& config) {
  return batch_for_epoch(make_problem(config), make_train_config(config),
                         std::max(config.epochs - 1, 0));
}

std::string to_string(RunStatus status) {
  switch (status) {
    case RunStatus::Converged:
      return "converged";
    case RunStatus::Diverged:
      return "diverged";
    case RunStatus::Error:
      return "error";
  }
  return "error";
}

int exit_code(RunStatus status) {
  switch (status) {
    case RunStatus::Converged:
      return 0;
    case RunStatus::Diverged:
      return 3;
    case RunStatus::Error:
      return 1;
  }
  return 1;
}

RunSummary run(const ExperimentConfig& config, const fs::path& out_dir) {
  validate(config);
  fs::create_directories(out_dir);
  write_text(out_dir / "config.json", serialize_config(config));

  const Problem problem = make_problem(config);
  const TrainResult result = train(problem, config.objective, make_train_config(config));

  RunSummary summary;
  summary.output_dir = out_dir;
  summary.epochs_completed = static_cast<int>(result.record.epochs.size());
  if (result.record.diverged) {
    summary.status = RunStatus::Diverged;
    summary.divergence_reason = result.record.divergence_reason;
  } else {
    summary.final_loss = result.final_loss;
  }

  write_train_record_csv(out_dir / "train_record.csv", result.record);
  write_params_binary(out_dir / "params.bin", result.params);
  write_params_csv(out_dir / "params.csv", result.params);
  write_alm_state(out_dir / "alm.json", result.alm);

  std::size_t landscape_events = 0;
  if (result.params.all_finite()) {
    const ModelEvaluation eval = evaluate_model(result.params, problem, config.eval_resolution);
    if (std::isfinite(eval.relative_l2)) summary.relative_l2 = eval.relative_l2;
    write_prediction_csv(out_dir / "prediction.csv", eval);
    write_exact_grid_csv(out_dir / "exact_grid.csv", problem, config.eval_resolution);
    write_histograms(out_dir / "histogram.csv", out_dir / "histogram_summary.csv",
                     weight_histograms(result.params, config.histogram_bins));
    if (!result.record.diverged) {
      const LandscapeGrid grid =
          scan_landscape(result.params, training_loss(config.objective, result.batch, result.alm),
                         make_landscape_settings(config));
      landscape_events = grid.events.size();
      write_landscape(out_dir / "landscape.csv", out_dir / "landscape.json", grid);
    }
  }

  json meta;
  meta["config"] = config_to_json(config);
  meta["seeds"] = {{"init", config.seeds.init},
                   {"sampling", config.seeds.sampling},
                   {"landscape", config.seeds.landscape},
                   {"domain_stream", derive_seed(config.seeds.sampling, 0)},
                   {"boundary_stream", derive_seed(config.seeds.sampling, 1)}};
  meta["decisions"] = decision_values(config);
  meta["parameter_count"] = result.params.size();
  meta["adam_steps"] = result.adam_steps;
  meta["landscape_zeroed_slices"] = landscape_events;
  meta["wall_seconds"] = result.record.wall_seconds;
  write_text(out_dir / "metadata.json", meta.dump(2) + "\n");
  write_text(out_dir / "summary.json", summary_json(config, summary).dump(2) + "\n");
  return summary;
}

bool MatrixResult::all_succeeded() const {
  return std::none_of(runs.begin(), runs.end(),
                      [](const RunSummary& r) { return r.status == RunStatus::Error; });
}

std::vector<ExperimentConfig> load_matrix(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open matrix " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  if (j.is_object()) {
    check_keys(j, {"runs"}, "matrix");
    if (!j.contains("runs")) throw ConfigError("matrix object needs a 'runs' array");
    j = j.at("runs");
  }
  if (!j.is_array()) throw ConfigError("matrix must be an array of configs or {\"runs\": [...]}");
  std::vector<ExperimentConfig> configs;
  for (std::size_t k = 0; k < j.size(); ++k) {
    try {
      configs.push_back(config_from_json(j.at(k)));
    } catch (const ConfigError& e) {
      throw ConfigError("matrix entry " + std::to_string(k) + ": " + e.what());
    }
  }
  return configs;
}

std::string run_directory_name(std::size_t index, const ExperimentConfig& config) {
  char prefix[16];
  std::snprintf(prefix, sizeof prefix, "%03zu", index);
  std::string name = std::string(prefix) + "_" + config.problem;
  if (config.problem == "poisson1d") name += "_w" + std::to_string(config.omega);
  return name + "_" + to_string(config.objective);
}

MatrixResult run_matrix(const std::vector<ExperimentConfig>& configs, const fs::path& out_root,
                        int jobs) {
  fs::create_directories(out_root);
  MatrixResult result;
  result.configs = configs;
  result.runs.resize(configs.size());

  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t k = next++; k < configs.size(); k = next++) {
      const fs::path dir = out_root / run_directory_name(k, configs[k]);
      try {
        result.runs[k] = run(configs[k], dir);
      } catch (const std::exception& e) {
        RunSummary failed;
        failed.status = RunStatus::Error;
        failed.error = e.what();
        failed.output_dir = dir;
        result.runs[k] = failed;
      }
    }
  };
  const int threads = std::clamp<int>(jobs, 1, static_cast<int>(std::max<std::size_t>(configs.size(), 1)));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  std::ostringstream csv;
  csv << "name,problem,omega,objective,status,relative_l2,final_loss,epochs_completed\n";
  for (std::size_t k = 0; k < configs.size(); ++k) {
    const ExperimentConfig& c = configs[k];
    const RunSummary& r = result.runs[k];
    csv << c.name << ',' << c.problem << ',' << c.omega << ',' << to_string(c.objective) << ','
        << to_string(r.status) << ',' << (r.relative_l2 ? format_double(*r.relative_l2) : "")
        << ',' << (r.final_loss ? format_double(*r.final_loss) : "") << ','
        << r.epochs_completed << '\n';
  }
  write_text(out_root / "matrix_summary.csv", csv.str());
  return result;
}

}  // namespace ecl
