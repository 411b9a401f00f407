#include "ecl/training.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <stdexcept>

#include "ecl/random.hpp"

namespace ecl {

std::string to_string(ObjectiveKind kind) {
  switch (kind) {
    case ObjectiveKind::Supervised:
      return "supervised";
    case ObjectiveKind::Pinn:
      return "pinn";
    case ObjectiveKind::Pecann:
      return "pecann";
  }
  return "unknown";
}

ObjectiveKind parse_objective(const std::string& name) {
  std::string lower = name;
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "supervised") return ObjectiveKind::Supervised;
  if (lower == "pinn") return ObjectiveKind::Pinn;
  if (lower == "pecann") return ObjectiveKind::Pecann;
  throw std::invalid_argument("unknown objective '" + name + "' (expected supervised, pinn or pecann)");
}

// ---------------------------------------------------------------------------
// Augmented Lagrangian

AlmState make_alm_state(Eigen::Index boundary_points, const AlmSettings& settings) {
  if (!(settings.mu_initial > 0.0) || !(settings.mu_max >= settings.mu_initial)) {
    throw std::invalid_argument("ALM settings need 0 < mu_initial <= mu_max");
  }
  if (!(settings.growth >= 1.0)) throw std::invalid_argument("ALM growth factor must be >= 1");
  AlmState alm;
  alm.lambda = Eigen::VectorXd::Zero(boundary_points);
  alm.mu = settings.mu_initial;
  alm.mu_max = settings.mu_max;
  alm.growth = settings.growth;
  alm.shrink_factor = settings.shrink_factor;
  return alm;
}

AlmState alm_update(const AlmState& alm, const Eigen::VectorXd& constraints) {
  if (constraints.size() != alm.lambda.size()) {
    throw std::invalid_argument("alm_update: constraint count does not match multipliers");
  }
  AlmState next = alm;
  next.lambda += alm.mu * constraints;
  const double mean_violation = constraints.size() > 0 ? constraints.mean() : 0.0;
  if (std::isfinite(alm.previous_mean_violation) &&
      mean_violation > alm.shrink_factor * alm.previous_mean_violation) {
    next.mu = std::min(alm.growth * alm.mu, alm.mu_max);
  }
  next.previous_mean_violation = mean_violation;
  return next;
}

// ---------------------------------------------------------------------------
// Adam and the plateau scheduler

AdamState make_adam_state(Eigen::Index parameter_count, const AdamSettings& settings) {
  AdamState adam;
  adam.m = Eigen::VectorXd::Zero(parameter_count);
  adam.v = Eigen::VectorXd::Zero(parameter_count);
  adam.lr = settings.lr;
  adam.beta1 = settings.beta1;
  adam.beta2 = settings.beta2;
  adam.epsilon = settings.epsilon;
  return adam;
}

void adam_step(AdamState& adam, Eigen::VectorXd& params, const Eigen::VectorXd& grad) {
  if (grad.size() != params.size() || adam.m.size() != params.size()) {
    throw std::invalid_argument("adam_step: shape mismatch");
  }
  if (!grad.allFinite()) throw DivergenceError("adam_step: non-finite gradient");
  adam.t += 1;
  adam.m = adam.beta1 * adam.m + (1.0 - adam.beta1) * grad;
  adam.v = adam.beta2 * adam.v + (1.0 - adam.beta2) * grad.cwiseAbs2();
  const double correction1 = 1.0 - std::pow(adam.beta1, static_cast<double>(adam.t));
  const double correction2 = 1.0 - std::pow(adam.beta2, static_cast<double>(adam.t));
  params.array() -= adam.lr * (adam.m.array() / correction1) /
                    ((adam.v.array() / correction2).sqrt() + adam.epsilon);
}

double PlateauScheduler::step(double epoch_loss, double lr) {
  if (epoch_loss < best_ * (1.0 - settings_.threshold)) {
    best_ = epoch_loss;
    stall_ = 0;
    return lr;
  }
  ++stall_;
  if (stall_ > settings_.patience) {
    stall_ = 0;
    return std::max(lr * settings_.factor, settings_.min_lr);
  }
  return lr;
}

// ---------------------------------------------------------------------------
// Objectives

BatchObjective make_objective(ObjectiveKind kind, const SampleBatch& batch, const AlmState* alm,
                              ObjectiveValue* parts) {
  if (kind == ObjectiveKind::Pecann) {
    if (alm == nullptr) throw std::invalid_argument("PECANN objective needs an ALM state");
    if (alm->lambda.size() != batch.boundary_points.cols()) {
      throw std::invalid_argument("multiplier count does not match boundary points");
    }
  }
  const bool physics = kind != ObjectiveKind::Supervised;
  BatchObjective objective;
  objective.batches.push_back(
      {batch.domain_points, physics ? DerivativeOrder::Laplacian : DerivativeOrder::Value});
  objective.batches.push_back({batch.boundary_points, DerivativeOrder::Value});

  const SampleBatch* b = &batch;
  objective.loss = [kind, b, alm, parts](std::span<const FieldBatch> fields,
                                         std::span<FieldSeed> seeds) {
    const FieldBatch& domain = fields[0];
    const FieldBatch& boundary = fields[1];
    const double n_domain = static_cast<double>(domain.value.size());
    const double n_boundary = static_cast<double>(boundary.value.size());
    const bool want_grad = !seeds.empty();
    ObjectiveValue out;

    switch (kind) {
      case ObjectiveKind::Supervised: {
        const Eigen::VectorXd rd = domain.value - b->domain_exact;
        const Eigen::VectorXd rb = boundary.value - b->boundary_values;
        out.domain = rd.squaredNorm() / n_domain;
        out.boundary = rb.squaredNorm() / n_boundary;
        out.total = out.domain + out.boundary;
        if (want_grad) {
          seeds[0].value += (2.0 / n_domain) * rd;
          seeds[1].value += (2.0 / n_boundary) * rb;
        }
        break;
      }
      case ObjectiveKind::Pinn: {
        const Eigen::VectorXd r = domain.laplacian - b->domain_forcing;
        const Eigen::VectorXd e = b->boundary_values - boundary.value;
        out.domain = r.squaredNorm() / n_domain;
        out.boundary = e.squaredNorm() / n_boundary;
        out.total = out.domain + out.boundary;
        if (want_grad) {
          seeds[0].laplacian += (2.0 / n_domain) * r;
          seeds[1].value += (-2.0 / n_boundary) * e;
        }
        break;
      }
      case ObjectiveKind::Pecann: {
        const Eigen::VectorXd r = domain.laplacian - b->domain_forcing;
        const Eigen::VectorXd e = b->boundary_values - boundary.value;
        const Eigen::VectorXd c = e.cwiseAbs2();
        out.domain = r.squaredNorm();
        out.boundary = alm->lambda.dot(c) + 0.5 * alm->mu * c.squaredNorm();
        out.total = out.domain + out.boundary;
        out.constraints = c;
        if (want_grad) {
          seeds[0].laplacian += 2.0 * r;
          // dL/dC_j = lambda_j + mu C_j, dC_j/du_j = -2 e_j
          seeds[1].value += (-2.0 * (alm->lambda + alm->mu * c).array() * e.array()).matrix();
        }
        break;
      }
    }
    const double total = out.total;
    if (parts != nullptr) *parts = std::move(out);
    return total;
  };
  return objective;
}

namespace {

ObjectiveValue evaluate_with_gradient(LossEvaluator& evaluator, ObjectiveKind kind,
                                      const ParameterVector& params, const SampleBatch& batch,
                                      const AlmState* alm) {
  ObjectiveValue parts;
  const BatchObjective objective = make_objective(kind, batch, alm, &parts);
  LossGradient lg = evaluator.gradient(params, objective);
  parts.grad = std::move(lg.grad);
  return parts;
}

ObjectiveValue evaluate_with_gradient(ObjectiveKind kind, const ParameterVector& params,
                                      const SampleBatch& batch, const AlmState* alm) {
  LossEvaluator evaluator;
  return evaluate_with_gradient(evaluator, kind, params, batch, alm);
}

}  // namespace

ObjectiveValue supervised_loss(const ParameterVector& params, const SampleBatch& batch) {
  return evaluate_with_gradient(ObjectiveKind::Supervised, params, batch, nullptr);
}

ObjectiveValue pinn_loss(const ParameterVector& params, const SampleBatch& batch) {
  return evaluate_with_gradient(ObjectiveKind::Pinn, params, batch, nullptr);
}

ObjectiveValue pecann_loss(const ParameterVector& params, const SampleBatch& batch,
                           const AlmState& alm) {
  return evaluate_with_gradient(ObjectiveKind::Pecann, params, batch, &alm);
}

double objective_total(ObjectiveKind kind, const ParameterVector& params, const SampleBatch& batch,
                       const AlmState* alm) {
  return loss_value(params, make_objective(kind, batch, alm));
}

// ---------------------------------------------------------------------------
// Epoch loop

SampleBatch batch_for_epoch(const Problem& problem, const TrainConfig& config, int epoch) {
  const std::uint64_t seed =
      config.resample_every_epoch
          ? derive_seed(config.sample_seed, static_cast<std::uint64_t>(std::max(epoch, 0)))
          : config.sample_seed;
  return make_batch(problem, config.n_domain, config.n_boundary, seed);
}

TrainResult train(const Problem& problem, ObjectiveKind objective, const TrainConfig& config,
                  const EpochObserver& observer) {
  config.network.validate();
  if (config.network.input_dim != problem.input_dim()) {
    throw std::invalid_argument("network input_dim does not match the problem dimension");
  }
  if (config.epochs < 0) throw std::invalid_argument("epochs must be >= 0");

  const auto started = std::chrono::steady_clock::now();
  TrainResult result{init_params(config.network, config.init_seed), {}, {}, {}, 0.0, 0};
  result.record.objective = objective;
  result.batch = batch_for_epoch(problem, config, 0);
  result.alm = make_alm_state(result.batch.boundary_points.cols(), config.alm);
  const AlmState* alm = objective == ObjectiveKind::Pecann ? &result.alm : nullptr;

  AdamState adam = make_adam_state(static_cast<Eigen::Index>(result.params.size()), config.adam);
  PlateauScheduler scheduler(config.scheduler);
  LossEvaluator evaluator;
  result.record.epochs.reserve(static_cast<std::size_t>(config.epochs));

  try {
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
      if (config.resample_every_epoch && epoch > 0) {
        result.batch = batch_for_epoch(problem, config, epoch);
      }
      ObjectiveValue value =
          evaluate_with_gradient(evaluator, objective, result.params, result.batch, alm);

      EpochRecord rec;
      rec.epoch = epoch;
      rec.total_loss = value.total;
      rec.domain_loss = value.domain;
      rec.boundary_loss = value.boundary;
      rec.lr = adam.lr;
      if (objective == ObjectiveKind::Pecann) {
        rec.mu = result.alm.mu;
        rec.mean_lambda = result.alm.lambda.size() > 0 ? result.alm.lambda.mean() : 0.0;
        rec.mean_constraint = value.constraints.size() > 0 ? value.constraints.mean() : 0.0;
      }

      adam_step(adam, result.params.values(), value.grad);
      result.adam_steps = adam.t;
      adam.lr = scheduler.step(value.total, adam.lr);
      if (objective == ObjectiveKind::Pecann) {
        result.alm = alm_update(result.alm, value.constraints);
      }
      result.record.epochs.push_back(rec);
      if (observer) observer(EpochSnapshot{result.record.epochs.back(), result.params, result.alm});
    }
    if (!result.params.all_finite()) throw DivergenceError("parameters became non-finite");
    result.final_loss = objective_total(objective, result.params, result.batch, alm);
  } catch (const DivergenceError& e) {
    result.record.diverged = true;
    result.record.divergence_reason = e.what();
    result.final_loss = std::numeric_limits<double>::quiet_NaN();
  }
  result.record.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return result;
}

}  // namespace ecl
