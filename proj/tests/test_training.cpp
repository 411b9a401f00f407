#include <doctest.h>

#include <cmath>
#include <limits>
#include <numbers>

#include "ecl/training.hpp"
#include "oracles.hpp"

using namespace ecl;
using std::numbers::pi;

namespace {

MlpConfig net(int dim) {
  MlpConfig c;
  c.input_dim = dim;
  return c;
}

AlmState alm_with(Eigen::VectorXd lambda, double mu) {
  AlmState a;
  a.lambda = std::move(lambda);
  a.mu = mu;
  return a;
}

Eigen::VectorXd random_nonneg(Eigen::Index n, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::VectorXd v(n);
  for (Eigen::Index k = 0; k < n; ++k) v(k) = rng.uniform(0.0, 3.0);
  return v;
}

}  // namespace

TEST_CASE("objective names parse case-insensitively") {
  CHECK(parse_objective("PECANN") == ObjectiveKind::Pecann);
  CHECK(parse_objective("Pinn") == ObjectiveKind::Pinn);
  CHECK(parse_objective("supervised") == ObjectiveKind::Supervised);
  CHECK_THROWS_AS(parse_objective("adam"), std::invalid_argument);
  CHECK(to_string(ObjectiveKind::Pecann) == "pecann");
}

TEST_CASE("zero network: supervised and PINN terms reduce to data moments") {
  const Problem p = Problem::poisson1d(5);
  const SampleBatch b = make_batch(p, 600, 2, 11);
  const ParameterVector zero(net(1));

  const ObjectiveValue sup = supervised_loss(zero, b);
  double mean_u2 = 0.0, mean_f2 = 0.0;
  for (int j = 0; j < 600; ++j) {
    const double x = b.domain_points(0, j);
    mean_u2 += std::pow(std::sin(5 * pi * x), 2) / 600;
    mean_f2 += std::pow(25 * pi * pi * std::sin(5 * pi * x), 2) / 600;
  }
  CHECK(sup.domain == doctest::Approx(mean_u2).epsilon(1e-13));
  CHECK(sup.domain == doctest::Approx(0.5).epsilon(0.1));
  CHECK(sup.boundary == doctest::Approx(std::pow(std::sin(5 * pi), 2) / 2).epsilon(1e-12));

  const ObjectiveValue pinn = pinn_loss(zero, b);
  CHECK(pinn.domain == doctest::Approx(mean_f2).epsilon(1e-13));
  CHECK(pinn.domain == doctest::Approx(std::pow(25 * pi * pi, 2) / 2).epsilon(0.1));
  CHECK(pinn.domain / sup.domain == doctest::Approx(std::pow(25 * pi * pi, 2)).epsilon(1e-12));
}

TEST_CASE("losses match a pointwise recomputation") {
  const Problem p = Problem::poisson2d();
  const SampleBatch b = make_batch(p, 16, 8, 3);
  const ParameterVector theta = init_params(net(2), 5);
  const AlmState alm = alm_with(random_nonneg(8, 1), 7.5);

  double sup_d = 0, sup_b = 0, res2 = 0, bnd2 = 0, lam_c = 0, c2 = 0;
  for (int j = 0; j < 16; ++j) {
    const FieldEvaluation e = evaluate_field(theta, b.domain_points.col(j));
    sup_d += std::pow(e.value - p.exact(b.domain_points.col(j)), 2);
    res2 += std::pow(e.laplacian - p.forcing(b.domain_points.col(j)), 2);
  }
  for (int j = 0; j < 8; ++j) {
    const double e = p.boundary_value(b.boundary_points.col(j)) - forward(theta, b.boundary_points.col(j));
    sup_b += e * e;
    bnd2 += e * e;
    lam_c += alm.lambda(j) * e * e;
    c2 += std::pow(e, 4);
  }
  CHECK(supervised_loss(theta, b).total == doctest::Approx(sup_d / 16 + sup_b / 8).epsilon(1e-12));
  CHECK(pinn_loss(theta, b).total == doctest::Approx(res2 / 16 + bnd2 / 8).epsilon(1e-12));
  const ObjectiveValue pec = pecann_loss(theta, b, alm);
  CHECK(pec.total == doctest::Approx(res2 + lam_c + 0.5 * alm.mu * c2).epsilon(1e-12));
  CHECK(pec.domain == doctest::Approx(res2).epsilon(1e-12));
  CHECK(pec.constraints.size() == 8);
  CHECK(pec.constraints.minCoeff() >= 0.0);
}

TEST_CASE("loss gradients match finite differences on 16-point batches") {
  for (int dim : {1, 2}) {
    const Problem p = dim == 1 ? Problem::poisson1d(5) : Problem::poisson2d();
    const SampleBatch b = make_batch(p, 16, dim == 1 ? 2 : 8, 17);
    const ParameterVector theta = init_params(net(dim), 23);
    const AlmState alm = alm_with(random_nonneg(b.boundary_points.cols(), 2), 3.0);
    for (ObjectiveKind kind : {ObjectiveKind::Supervised, ObjectiveKind::Pinn, ObjectiveKind::Pecann}) {
      const AlmState* a = kind == ObjectiveKind::Pecann ? &alm : nullptr;
      const LossGradient lg = loss_gradient(theta, make_objective(kind, b, a));
      const Eigen::VectorXd fd = oracle::parameter_gradient(
          [&](const ParameterVector& q) { return objective_total(kind, q, b, a); }, theta);
      INFO("dim " << dim << " objective " << to_string(kind));
      CHECK(oracle::relative_error(lg.grad, fd) < 1e-4);
    }
  }
}

TEST_CASE("doubling every supervised residual quadruples the loss") {
  const Problem p = Problem::poisson1d(10);
  SampleBatch b = make_batch(p, 40, 2, 1);
  const ParameterVector theta = init_params(net(1), 2);
  const double base = supervised_loss(theta, b).total;
  const Eigen::VectorXd ud = evaluate_batch(theta, b.domain_points, DerivativeOrder::Value).value;
  const Eigen::VectorXd ub = evaluate_batch(theta, b.boundary_points, DerivativeOrder::Value).value;
  b.domain_exact = ud - 2 * (ud - b.domain_exact);
  b.boundary_values = ub - 2 * (ub - b.boundary_values);
  CHECK(supervised_loss(theta, b).total == doctest::Approx(4 * base).epsilon(1e-12));
}

TEST_CASE("PECANN with lambda = 1/N_b and no penalty is a rescaled PINN") {
  const Problem p = Problem::poisson2d();
  const SampleBatch b = make_batch(p, 50, 20, 9);
  const ParameterVector theta = init_params(net(2), 4);
  const ObjectiveValue pinn = pinn_loss(theta, b);
  const ObjectiveValue pec = pecann_loss(theta, b, alm_with(Eigen::VectorXd::Constant(20, 1.0 / 20), 0.0));
  CHECK(pec.total == doctest::Approx(50 * pinn.domain + pinn.boundary).epsilon(1e-12));
}

TEST_CASE("PECANN with lambda = 0 and mu = 2/N_b penalizes the fourth power") {
  // The penalty acts on C_j = e_j^2, so it contributes mean(e^4), not mean(e^2).
  const Problem p = Problem::poisson2d();
  const SampleBatch b = make_batch(p, 50, 20, 9);
  const ParameterVector theta = init_params(net(2), 4);
  const ObjectiveValue pinn = pinn_loss(theta, b);
  const ObjectiveValue pec = pecann_loss(theta, b, alm_with(Eigen::VectorXd::Zero(20), 2.0 / 20));
  const Eigen::VectorXd e = b.boundary_values - evaluate_batch(theta, b.boundary_points, DerivativeOrder::Value).value;
  CHECK(pec.total == doctest::Approx(50 * pinn.domain + e.array().pow(4).mean()).epsilon(1e-12));
}

TEST_CASE("PECANN tends to the domain term as lambda = 0 and mu -> 0") {
  const SampleBatch b = make_batch(Problem::poisson1d(5), 30, 2, 1);
  const ParameterVector theta = init_params(net(1), 1);
  const ObjectiveValue pec = pecann_loss(theta, b, alm_with(Eigen::VectorXd::Zero(2), 1e-300));
  CHECK(pec.total == pec.domain);
}

TEST_CASE("ALM update examples") {
  SUBCASE("zero violation leaves the multipliers") {
    const AlmState next = alm_update(alm_with(Eigen::Vector2d(0.3, 1.2), 4.0), Eigen::Vector2d::Zero());
    CHECK(next.lambda == Eigen::Vector2d(0.3, 1.2));
  }
  SUBCASE("direct substitution") {
    const AlmState next = alm_update(alm_with(Eigen::Vector2d::Zero(), 1.0), Eigen::Vector2d(0.5, 0.25));
    CHECK(next.lambda == Eigen::Vector2d(0.5, 0.25));
  }
  SUBCASE("first update has no previous violation and keeps mu") {
    const AlmState next = alm_update(alm_with(Eigen::Vector2d::Zero(), 1.0), Eigen::Vector2d(1.0, 1.0));
    CHECK(next.mu == 1.0);
    CHECK(next.previous_mean_violation == 1.0);
  }
  SUBCASE("stagnant violation grows mu up to the cap") {
    AlmState a = alm_with(Eigen::Vector2d::Zero(), 400.0);
    a.previous_mean_violation = 1.0;
    const AlmState next = alm_update(a, Eigen::Vector2d(1.0, 1.0));
    CHECK(next.mu == 500.0);
    CHECK(alm_update(next, Eigen::Vector2d(1.0, 1.0)).mu == 500.0);
  }
  SUBCASE("a fourfold drop keeps mu, anything less grows it") {
    AlmState a = alm_with(Eigen::Vector2d::Zero(), 2.0);
    a.previous_mean_violation = 1.0;
    CHECK(alm_update(a, Eigen::Vector2d(0.25, 0.25)).mu == 2.0);
    CHECK(alm_update(a, Eigen::Vector2d(0.3, 0.25)).mu == 4.0);
  }
  CHECK_THROWS_AS(alm_update(alm_with(Eigen::Vector2d::Zero(), 1.0), Eigen::Vector3d::Zero()),
                  std::invalid_argument);
}

TEST_CASE("Adam matches a scalar reference implementation") {
  AdamState adam = make_adam_state(3, AdamSettings{});
  Eigen::VectorXd x(3);
  x << 1.0, -2.0, 0.5;
  std::array<double, 3> rx = {1.0, -2.0, 0.5}, rm{}, rv{};
  for (int t = 1; t <= 10; ++t) {
    Eigen::VectorXd g(3);
    g << std::sin(t), 0.1 * t, -std::cos(2.0 * t);
    adam_step(adam, x, g);
    for (int k = 0; k < 3; ++k) {
      rm[k] = 0.9 * rm[k] + 0.1 * g(k);
      rv[k] = 0.999 * rv[k] + 0.001 * g(k) * g(k);
      const double mh = rm[k] / (1 - std::pow(0.9, t));
      const double vh = rv[k] / (1 - std::pow(0.999, t));
      rx[k] -= 1e-2 * mh / (std::sqrt(vh) + 1e-8);
    }
  }
  CHECK(adam.t == 10);
  for (int k = 0; k < 3; ++k) CHECK(x(k) == doctest::Approx(rx[k]).epsilon(1e-14));
}

TEST_CASE("Adam first step moves by lr against the gradient sign") {
  AdamState adam = make_adam_state(3, AdamSettings{});
  Eigen::VectorXd x = Eigen::VectorXd::Zero(3);
  adam_step(adam, x, Eigen::Vector3d(3.0, -0.01, 1e-3));
  CHECK(x(0) == doctest::Approx(-1e-2 * 3.0 / (3.0 + 1e-8)).epsilon(1e-15));
  CHECK(x(1) == doctest::Approx(1e-2 * 0.01 / (0.01 + 1e-8)).epsilon(1e-15));
  CHECK(x(2) == doctest::Approx(-1e-2 * 1e-3 / (1e-3 + 1e-8)).epsilon(1e-15));
}

TEST_CASE("Adam with zero gradient leaves parameters unchanged") {
  AdamState adam = make_adam_state(2, AdamSettings{});
  Eigen::VectorXd x(2);
  x << 0.7, -0.2;
  const Eigen::VectorXd before = x;
  adam_step(adam, x, Eigen::VectorXd::Zero(2));
  CHECK(x == before);
}

TEST_CASE("Adam rejects non-finite gradients") {
  AdamState adam = make_adam_state(2, AdamSettings{});
  Eigen::VectorXd x = Eigen::VectorXd::Zero(2);
  CHECK_THROWS_AS(adam_step(adam, x, Eigen::Vector2d(1.0, std::numeric_limits<double>::infinity())),
                  DivergenceError);
  CHECK(x.isZero(0.0));
}

TEST_CASE("plateau scheduler") {
  SUBCASE("steady improvement keeps lr") {
    PlateauScheduler s;
    double lr = 1e-2;
    for (int e = 0; e < 500; ++e) lr = s.step(100.0 * std::pow(0.99, e), lr);
    CHECK(lr == 1e-2);
  }
  SUBCASE("102 constant epochs give exactly one reduction") {
    PlateauScheduler s;
    double lr = 1e-2;
    for (int e = 0; e < 101; ++e) lr = s.step(1.0, lr);
    CHECK(lr == 1e-2);
    lr = s.step(1.0, lr);
    CHECK(lr == doctest::Approx(9e-3).epsilon(1e-15));
    CHECK(s.stall_count() == 0);
  }
  SUBCASE("improvements below the relative threshold count as stalls") {
    PlateauScheduler s;
    s.step(1.0, 1e-2);
    s.step(1.0 - 0.5e-4, 1e-2);
    CHECK(s.stall_count() == 1);
    s.step(0.9, 1e-2);
    CHECK(s.stall_count() == 0);
    CHECK(s.best() == 0.9);
  }
  SUBCASE("lr floors at min_lr and never increases") {
    PlateauScheduler s;
    double lr = 1.2e-6;
    double prev = lr;
    for (int e = 0; e < 1000; ++e) {
      lr = s.step(1.0, lr);
      CHECK(lr <= prev);
      CHECK(lr >= 1e-6);
      prev = lr;
    }
    CHECK(lr == 1e-6);
  }
}

TEST_CASE("zero epochs return the initial parameters") {
  TrainConfig cfg;
  cfg.epochs = 0;
  const Problem p = Problem::poisson1d(5);
  const TrainResult r = train(p, ObjectiveKind::Pinn, cfg);
  CHECK(r.record.epochs.empty());
  CHECK(r.params.values() == init_params(cfg.network, cfg.init_seed).values());
  CHECK(r.final_loss == objective_total(ObjectiveKind::Pinn, r.params, r.batch, nullptr));
}

TEST_CASE("short PECANN run keeps the ALM and scheduler invariants") {
  TrainConfig cfg;
  cfg.epochs = 300;
  cfg.n_domain = 64;
  const Problem p = Problem::poisson1d(10);
  Eigen::VectorXd last_lambda = Eigen::VectorXd::Zero(2);
  double last_lr = cfg.adam.lr;
  int calls = 0;
  const TrainResult r = train(p, ObjectiveKind::Pecann, cfg, [&](const EpochSnapshot& s) {
    CHECK(s.record.epoch == calls++);
    CHECK((s.alm.lambda.array() >= last_lambda.array()).all());
    CHECK(s.alm.mu <= 500.0);
    CHECK(s.record.lr <= last_lr);
    last_lambda = s.alm.lambda;
    last_lr = s.record.lr;
  });
  CHECK(calls == 300);
  CHECK(r.adam_steps == 300);
  CHECK(r.record.epochs.size() == 300);
  CHECK(!r.record.diverged);
  CHECK(r.final_loss == objective_total(ObjectiveKind::Pecann, r.params, r.batch, &r.alm));
}

TEST_CASE("training is deterministic") {
  TrainConfig cfg;
  cfg.epochs = 40;
  cfg.n_domain = 32;
  cfg.n_boundary = 8;
  cfg.network.input_dim = 2;
  cfg.resample_every_epoch = true;
  const Problem p = Problem::poisson2d();
  const TrainResult a = train(p, ObjectiveKind::Pinn, cfg);
  const TrainResult b = train(p, ObjectiveKind::Pinn, cfg);
  CHECK(a.params.values() == b.params.values());
  for (std::size_t e = 0; e < a.record.epochs.size(); ++e) {
    CHECK(a.record.epochs[e].total_loss == b.record.epochs[e].total_loss);
  }
}

TEST_CASE("resampling changes the batch per epoch, the fixed batch does not") {
  TrainConfig cfg;
  const Problem p = Problem::poisson1d(5);
  CHECK(batch_for_epoch(p, cfg, 0).domain_points == batch_for_epoch(p, cfg, 7).domain_points);
  cfg.resample_every_epoch = true;
  CHECK(batch_for_epoch(p, cfg, 0).domain_points != batch_for_epoch(p, cfg, 7).domain_points);
  CHECK(batch_for_epoch(p, cfg, 7).domain_points == batch_for_epoch(p, cfg, 7).domain_points);
}

TEST_CASE("mismatched network and problem dimensions are rejected") {
  TrainConfig cfg;
  cfg.network.input_dim = 2;
  CHECK_THROWS_AS(train(Problem::poisson1d(5), ObjectiveKind::Pinn, cfg), std::invalid_argument);
  CHECK_THROWS_AS(make_objective(ObjectiveKind::Pecann, make_batch(Problem::poisson1d(5), 4, 2, 1), nullptr),
                  std::invalid_argument);
}
