#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ecl/field_model.hpp"
#include "ecl/problems.hpp"

namespace ecl {

enum class ObjectiveKind { Supervised, Pinn, Pecann };

std::string to_string(ObjectiveKind kind);
// Accepts "supervised", "pinn", "pecann" (case-insensitive).
ObjectiveKind parse_objective(const std::string& name);

struct AlmSettings {
  double mu_initial = 1.0;
  double growth = 2.0;
  double mu_max = 500.0;
  // mu grows unless mean(C) drops below shrink_factor * previous mean(C).
  double shrink_factor = 0.25;
};

// Augmented Lagrangian state for the boundary equality constraints.
struct AlmState {
  Eigen::VectorXd lambda;
  double mu = 1.0;
  double mu_max = 500.0;
  double growth = 2.0;
  double shrink_factor = 0.25;
  // Mean violation seen at the previous update; +inf before the first one.
  double previous_mean_violation = std::numeric_limits<double>::infinity();
};

AlmState make_alm_state(Eigen::Index boundary_points, const AlmSettings& settings);

// lambda += mu * C, then the safeguarded penalty update. Constraints must be
// elementwise >= 0.
AlmState alm_update(const AlmState& alm, const Eigen::VectorXd& constraints);

struct AdamSettings {
  double lr = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  std::int64_t t = 0;
  double lr = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

AdamState make_adam_state(Eigen::Index parameter_count, const AdamSettings& settings);

// One bias-corrected Adam update of `params` in place. Throws
// DivergenceError on a non-finite gradient.
void adam_step(AdamState& adam, Eigen::VectorXd& params, const Eigen::VectorXd& grad);

struct SchedulerSettings {
  int patience = 100;
  double factor = 0.90;
  double threshold = 1e-4;  // relative
  double min_lr = 1e-6;
};

// Reduce-on-plateau learning-rate control monitoring the training loss.
class PlateauScheduler {
 public:
  explicit PlateauScheduler(const SchedulerSettings& settings = {}) : settings_(settings) {}

  // Feeds one epoch loss and returns the (possibly reduced) learning rate.
  double step(double epoch_loss, double lr);

  double best() const { return best_; }
  int stall_count() const { return stall_; }
  const SchedulerSettings& settings() const { return settings_; }

 private:
  SchedulerSettings settings_;
  double best_ = std::numeric_limits<double>::infinity();
  int stall_ = 0;
};

// Loss value with its decomposition and parameter gradient. `grad` is empty
// for value-only evaluations; `constraints` is only filled for PECANN.
struct ObjectiveValue {
  double total = 0.0;
  double domain = 0.0;
  double boundary = 0.0;
  Eigen::VectorXd constraints;
  Eigen::VectorXd grad;
};

// mean (u_theta - u)^2 over domain points + mean (u_theta - g)^2 over boundary points.
ObjectiveValue supervised_loss(const ParameterVector& params, const SampleBatch& batch);
// mean (lap u_theta - f)^2 over domain points + mean (g - u_theta)^2 over boundary points.
ObjectiveValue pinn_loss(const ParameterVector& params, const SampleBatch& batch);
// sum (lap u_theta - f)^2 + lambda^T C + mu/2 |C|^2 with C_j = (g_j - u_theta(x_j))^2.
ObjectiveValue pecann_loss(const ParameterVector& params, const SampleBatch& batch,
                           const AlmState& alm);

// Same objective as the functions above, packaged for the generic engine.
// `parts`, when non-null, receives the decomposition on every evaluation.
// `alm` is required for PECANN and must outlive the returned objective.
BatchObjective make_objective(ObjectiveKind kind, const SampleBatch& batch, const AlmState* alm,
                              ObjectiveValue* parts = nullptr);

// Total objective without a gradient; identical arithmetic to the training
// path, used for the final loss and for landscape scans.
double objective_total(ObjectiveKind kind, const ParameterVector& params, const SampleBatch& batch,
                       const AlmState* alm);

struct TrainConfig {
  MlpConfig network;
  int epochs = 30000;
  int n_domain = 600;
  int n_boundary = 2;
  std::uint64_t init_seed = 7;
  std::uint64_t sample_seed = 11;
  bool resample_every_epoch = false;
  AdamSettings adam;
  SchedulerSettings scheduler;
  AlmSettings alm;
};

struct EpochRecord {
  int epoch = 0;
  double total_loss = 0.0;
  double domain_loss = 0.0;
  double boundary_loss = 0.0;
  double lr = 0.0;
  // PECANN only.
  double mu = 0.0;
  double mean_lambda = 0.0;
  double mean_constraint = 0.0;
};

struct TrainRecord {
  ObjectiveKind objective = ObjectiveKind::Supervised;
  std::vector<EpochRecord> epochs;
  bool diverged = false;
  std::string divergence_reason;
  double wall_seconds = 0.0;
};

struct TrainResult {
  ParameterVector params;
  TrainRecord record;
  AlmState alm;           // final multipliers and penalty (PECANN)
  SampleBatch batch;      // batch used by the last epoch
  double final_loss = 0.0;  // objective at the final parameters; NaN if diverged
  std::int64_t adam_steps = 0;
};

// Observer called after every completed epoch with the post-update state.
struct EpochSnapshot {
  const EpochRecord& record;
  const ParameterVector& params;
  const AlmState& alm;
};
using EpochObserver = std::function<void(const EpochSnapshot&)>;

// Batch used at `epoch`: the fixed batch, or a fresh one when resampling.
SampleBatch batch_for_epoch(const Problem& problem, const TrainConfig& config, int epoch);

TrainResult train(const Problem& problem, ObjectiveKind objective, const TrainConfig& config,
                  const EpochObserver& observer = {});

}  // namespace ecl
