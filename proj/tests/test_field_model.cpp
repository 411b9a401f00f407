#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "ecl/field_model.hpp"
#include "oracles.hpp"

using namespace ecl;

namespace {

MlpConfig net(int dim, int layers = 8, int width = 20) {
  MlpConfig c;
  c.input_dim = dim;
  c.hidden_layers = layers;
  c.hidden_width = width;
  return c;
}

Eigen::MatrixXd random_points(int dim, int n, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd p(dim, n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < dim; ++i) p(i, j) = rng.uniform();
  return p;
}

}  // namespace

TEST_CASE("parameter count matches a layer-by-layer tally") {
  for (int dim : {1, 2}) {
    const MlpConfig cfg = net(dim);
    std::vector<int> widths = {dim};
    for (int l = 0; l < 8; ++l) widths.push_back(20);
    widths.push_back(1);
    std::size_t total = 0;
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) total += widths[l] * widths[l + 1] + widths[l + 1];
    CHECK(cfg.parameter_count() == total);
  }
  CHECK(net(1).parameter_count() == 3001);
  CHECK(net(2).parameter_count() == 3021);
}

TEST_CASE("layout is contiguous: weights then bias, layer after layer") {
  const MlpConfig cfg = net(2);
  CHECK(cfg.weight_offset(0) == 0);
  for (int l = 0; l < cfg.layer_count(); ++l) {
    CHECK(cfg.bias_offset(l) == cfg.weight_offset(l) + std::size_t(cfg.fan_in(l) * cfg.fan_out(l)));
    CHECK(cfg.weight_offset(l + 1) == cfg.bias_offset(l) + std::size_t(cfg.fan_out(l)));
  }

  ParameterVector p(cfg);
  p.weights(1)(3, 4) = 7.0;
  p.bias(1)(3) = 9.0;
  CHECK(p.values()(Eigen::Index(cfg.weight_offset(1) + 3 * 20 + 4)) == 7.0);
  CHECK(p.values()(Eigen::Index(cfg.bias_offset(1) + 3)) == 9.0);
}

TEST_CASE("invalid shapes are rejected") {
  CHECK_THROWS(net(0).validate());
  CHECK_THROWS(net(1, 0).validate());
  CHECK_THROWS(net(1, 8, 0).validate());
  CHECK_THROWS(ParameterVector(net(1), Eigen::VectorXd::Zero(10)));
}

TEST_CASE("Glorot-uniform init: zero biases, bounded weights, seeded") {
  const MlpConfig cfg = net(1);
  const ParameterVector p = init_params(cfg, 7);
  for (int l = 0; l < cfg.layer_count(); ++l) {
    CHECK(p.bias(l).isZero(0.0));
    const double limit = std::sqrt(6.0 / (cfg.fan_in(l) + cfg.fan_out(l)));
    CHECK(p.weights(l).cwiseAbs().maxCoeff() <= limit);
  }
  CHECK(init_params(cfg, 7).values() == p.values());
  CHECK(init_params(cfg, 8).values() != p.values());

  // Variance of U(-a, a) is a^2 / 3 = 2 / (fan_in + fan_out); 7 hidden 20x20 layers pooled.
  Eigen::VectorXd pooled(7 * 400);
  for (int l = 1; l <= 7; ++l) pooled.segment((l - 1) * 400, 400) = p.weights(l).reshaped<Eigen::RowMajor>();
  const double var = pooled.squaredNorm() / pooled.size();
  CHECK(var == doctest::Approx(2.0 / 40.0).epsilon(0.1));
}

TEST_CASE("zero parameters give a zero field") {
  const ParameterVector p(net(2));
  const FieldBatch f = evaluate_batch(p, random_points(2, 10, 1), DerivativeOrder::Laplacian);
  CHECK(f.value.isZero(0.0));
  CHECK(f.gradient.isZero(0.0));
  CHECK(f.laplacian.isZero(0.0));
}

TEST_CASE("single tanh unit has closed-form derivatives") {
  ParameterVector p(net(1, 1, 1));
  p.weights(0)(0, 0) = 1.0;
  p.weights(1)(0, 0) = 1.0;
  const FieldEvaluation e = evaluate_field(p, Eigen::VectorXd::Constant(1, 1.0));
  CHECK(e.value == doctest::Approx(0.7615941559557649).epsilon(1e-15));
  const double t = std::tanh(1.0);
  CHECK(e.gradient(0) == doctest::Approx(1 - t * t).epsilon(1e-14));
  CHECK(e.laplacian == doctest::Approx(-2 * t * (1 - t * t)).epsilon(1e-14));
}

TEST_CASE("forward pass agrees with the std::tanh reference") {
  for (int dim : {1, 2}) {
    // Scales 0.01 and 0.05 keep most pre-activations in the small-argument branch.
    for (double scale : {0.01, 0.05, 0.5, 2.0}) {
      const ParameterVector p = oracle::random_params(net(dim), 100 + dim, scale);
      const Eigen::MatrixXd pts = random_points(dim, 50, 3);
      const FieldBatch f = evaluate_batch(p, pts, DerivativeOrder::Value);
      for (int j = 0; j < pts.cols(); ++j) {
        const double ref = oracle::network(p, pts.col(j));
        CHECK(f.value(j) == doctest::Approx(ref).epsilon(1e-12).scale(1e-14));
      }
    }
  }
}

TEST_CASE("input derivatives match finite differences") {
  for (int dim : {1, 2}) {
    Rng rng(dim);
    for (int trial = 0; trial < 20; ++trial) {
      const ParameterVector p = oracle::random_params(net(dim), rng.next());
      Eigen::VectorXd x(dim);
      for (int i = 0; i < dim; ++i) x(i) = rng.uniform();
      auto u = [&](const Eigen::VectorXd& y) { return oracle::network(p, y); };
      const FieldEvaluation e = evaluate_field(p, x);
      CHECK(oracle::relative_error(e.gradient, oracle::input_gradient(u, x)) < 1e-6);
      CHECK(oracle::relative_error(e.laplacian, oracle::input_laplacian(u, x)) < 1e-4);
    }
  }
}

TEST_CASE("batch evaluation matches pointwise evaluation") {
  const ParameterVector p = oracle::random_params(net(2), 9);
  const Eigen::MatrixXd pts = random_points(2, 37, 4);
  const FieldBatch f = evaluate_batch(p, pts, DerivativeOrder::Laplacian);
  for (int j = 0; j < pts.cols(); ++j) {
    const FieldEvaluation e = evaluate_field(p, pts.col(j));
    CHECK(f.value(j) == doctest::Approx(e.value).epsilon(1e-12));
    CHECK(f.gradient(0, j) == doctest::Approx(e.gradient(0)).epsilon(1e-12));
    CHECK(f.gradient(1, j) == doctest::Approx(e.gradient(1)).epsilon(1e-12));
    CHECK(f.laplacian(j) == doctest::Approx(e.laplacian).epsilon(1e-12));
  }
}

TEST_CASE("lower derivative orders leave the higher fields empty") {
  const ParameterVector p = init_params(net(2), 1);
  const Eigen::MatrixXd pts = random_points(2, 5, 1);
  const FieldBatch v = evaluate_batch(p, pts, DerivativeOrder::Value);
  CHECK(v.gradient.rows() == 0);
  CHECK(v.laplacian.size() == 0);
  const FieldBatch g = evaluate_batch(p, pts, DerivativeOrder::Gradient);
  CHECK(g.gradient.rows() == 2);
  CHECK(g.gradient.cols() == 5);
  CHECK(g.laplacian.size() == 0);
  const FieldBatch l = evaluate_batch(p, pts, DerivativeOrder::Laplacian);
  // Wider stacked products may round differently in the last bits.
  CHECK((l.value - v.value).norm() <= 1e-13 * v.value.norm());
}

namespace {

// sum_j (u + 0.3 du/dx_0 - 0.2 lap)^2 over one batch plus sum_j u^2 over a second.
BatchObjective mixed_objective(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  BatchObjective obj;
  obj.batches = {{a, DerivativeOrder::Laplacian}, {b, DerivativeOrder::Value}};
  obj.loss = [](std::span<const FieldBatch> f, std::span<FieldSeed> s) {
    const Eigen::VectorXd r = f[0].value + 0.3 * f[0].gradient.row(0).transpose() - 0.2 * f[0].laplacian;
    if (!s.empty()) {
      s[0].value += 2 * r;
      s[0].gradient.row(0) += (0.6 * r).transpose();
      s[0].laplacian += -0.4 * r;
      s[1].value += 2 * f[1].value;
    }
    return r.squaredNorm() + f[1].value.squaredNorm();
  };
  return obj;
}

}  // namespace

TEST_CASE("parameter gradient through input derivatives matches finite differences") {
  for (int dim : {1, 2}) {
    const ParameterVector p = oracle::random_params(net(dim, 3, 6), 21 + dim);
    const BatchObjective obj = mixed_objective(random_points(dim, 8, 5), random_points(dim, 4, 6));
    const LossGradient lg = loss_gradient(p, obj);
    CHECK(lg.value == loss_value(p, obj));
    const Eigen::VectorXd fd =
        oracle::parameter_gradient([&](const ParameterVector& q) { return loss_value(q, obj); }, p);
    CHECK(oracle::relative_error(lg.grad, fd) < 1e-6);
  }
}

TEST_CASE("tape backward accumulates into the gradient") {
  const ParameterVector p = oracle::random_params(net(1, 2, 4), 3);
  FieldTape tape(p, random_points(1, 6, 2), DerivativeOrder::Laplacian);
  FieldSeed seed = zero_seed_like(tape.fields());
  seed.laplacian.setOnes();
  Eigen::VectorXd once = Eigen::VectorXd::Zero(Eigen::Index(p.size()));
  tape.backward(seed, once);
  Eigen::VectorXd twice = once;
  tape.backward(seed, twice);
  CHECK((twice - 2 * once).norm() <= 1e-14 * once.norm());
}

TEST_CASE("evaluator reuse gives bit-identical results") {
  const ParameterVector p = oracle::random_params(net(2), 4);
  const BatchObjective obj = mixed_objective(random_points(2, 30, 1), random_points(2, 10, 2));
  LossEvaluator ev;
  const LossGradient first = ev.gradient(p, obj);
  const LossGradient second = ev.gradient(p, obj);
  CHECK(first.value == second.value);
  CHECK(first.grad == second.grad);
  CHECK(loss_gradient(p, obj).grad == first.grad);
}

TEST_CASE("non-finite parameters raise a divergence error") {
  ParameterVector p = init_params(net(1), 1);
  p.values()(0) = std::numeric_limits<double>::quiet_NaN();
  const BatchObjective obj = mixed_objective(random_points(1, 4, 1), random_points(1, 2, 2));
  CHECK_THROWS_AS(loss_value(p, obj), DivergenceError);
  CHECK_THROWS_AS(loss_gradient(p, obj), DivergenceError);
}
