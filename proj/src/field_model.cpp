#include "ecl/field_model.hpp"

#include <cmath>
#include <string>

#include "ecl/random.hpp"

namespace ecl {

void MlpConfig::validate() const {
  if (input_dim != 1 && input_dim != 2) {
    throw std::invalid_argument("input_dim must be 1 or 2, got " + std::to_string(input_dim));
  }
  if (hidden_layers < 1) {
    throw std::invalid_argument("hidden_layers must be >= 1");
  }
  if (hidden_width < 1) {
    throw std::invalid_argument("hidden_width must be >= 1");
  }
}

std::size_t MlpConfig::weight_offset(int layer) const {
  std::size_t offset = 0;
  for (int l = 0; l < layer; ++l) {
    const auto in = static_cast<std::size_t>(fan_in(l));
    const auto out = static_cast<std::size_t>(fan_out(l));
    offset += in * out + out;
  }
  return offset;
}

ParameterVector::ParameterVector(const MlpConfig& config) : config_(config) {
  config_.validate();
  values_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(config_.parameter_count()));
}

ParameterVector::ParameterVector(const MlpConfig& config, Eigen::VectorXd values)
    : config_(config), values_(std::move(values)) {
  config_.validate();
  if (static_cast<std::size_t>(values_.size()) != config_.parameter_count()) {
    throw std::invalid_argument("parameter vector length " + std::to_string(values_.size()) +
                                " does not match architecture (" +
                                std::to_string(config_.parameter_count()) + ")");
  }
}

ParameterVector::ConstMatrixMap ParameterVector::weights(int layer) const {
  return ConstMatrixMap(values_.data() + config_.weight_offset(layer), config_.fan_out(layer),
                        config_.fan_in(layer));
}

ParameterVector::MatrixMap ParameterVector::weights(int layer) {
  return MatrixMap(values_.data() + config_.weight_offset(layer), config_.fan_out(layer),
                   config_.fan_in(layer));
}

ParameterVector::ConstVectorMap ParameterVector::bias(int layer) const {
  return ConstVectorMap(values_.data() + config_.bias_offset(layer), config_.fan_out(layer));
}

ParameterVector::VectorMap ParameterVector::bias(int layer) {
  return VectorMap(values_.data() + config_.bias_offset(layer), config_.fan_out(layer));
}

ParameterVector init_params(const MlpConfig& config, std::uint64_t seed) {
  ParameterVector params(config);
  Rng rng(seed);
  for (int l = 0; l < config.layer_count(); ++l) {
    const double limit = std::sqrt(6.0 / (config.fan_in(l) + config.fan_out(l)));
    auto w = params.weights(l);
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) {
        w(r, c) = rng.uniform(-limit, limit);
      }
    }
  }
  return params;
}

namespace {

// Eigen evaluates tanh for doubles one scalar at a time; this form uses
// the vectorized exp (exp overflow still yields +-1) and switches to the
// odd Taylor series near zero, where 1 - 2/(e^2x + 1) loses relative
// precision.
template <typename In>
void tanh_into(const In& x, Eigen::ArrayXXd& t) {
  constexpr double kSeriesBound = 0.0625;
  t = 1.0 - 2.0 / ((2.0 * x).exp() + 1.0);
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      const double v = x(r, c);
      if (std::abs(v) < kSeriesBound) {
        const double v2 = v * v;
        t(r, c) = v * (1.0 + v2 * (-1.0 / 3.0 +
                                   v2 * (2.0 / 15.0 +
                                         v2 * (-17.0 / 315.0 +
                                               v2 * (62.0 / 2835.0 + v2 * (-1382.0 / 155925.0))))));
      }
    }
  }
}

int stream_count(DerivativeOrder order, int dim) {
  switch (order) {
    case DerivativeOrder::Value:
      return 1;
    case DerivativeOrder::Gradient:
      return 1 + dim;
    case DerivativeOrder::Laplacian:
      return 1 + 2 * dim;
  }
  return 1;
}

}  // namespace

void FieldTape::record(const ParameterVector& params, const Eigen::MatrixXd& points,
                       DerivativeOrder order) {
  const MlpConfig& cfg = params.config();
  params_ = &params;
  order_ = order;
  points_ = points.cols();
  dim_ = cfg.input_dim;
  streams_ = stream_count(order, dim_);
  if (points.rows() != dim_) {
    throw std::invalid_argument("point dimension " + std::to_string(points.rows()) +
                                " does not match network input_dim " + std::to_string(dim_));
  }
  const Eigen::Index n = points_;
  const Eigen::Index cols = streams_ * n;
  const bool first = order != DerivativeOrder::Value;
  const bool second = order == DerivativeOrder::Laplacian;
  const int hidden = cfg.hidden_layers;
  // Column block s of a stacked matrix holds stream s for all N points:
  // 0 is the value, 1..dim the first derivatives, dim+1..2*dim the second.
  auto stream = [n](auto& m, Eigen::Index s) { return m.middleCols(s * n, n); };

  inputs_.resize(hidden + 1);
  preacts_.resize(hidden);
  tanh_.resize(hidden);
  slope_.resize(hidden);

  Eigen::MatrixXd& input = inputs_[0];
  input.setZero(dim_, cols);
  input.leftCols(n) = points;
  if (first) {
    for (int i = 0; i < dim_; ++i) stream(input, 1 + i).row(i).setOnes();
  }

  for (int l = 0; l < hidden; ++l) {
    const auto w = params.weights(l);
    Eigen::MatrixXd& z = preacts_[l];
    Eigen::ArrayXXd& t = tanh_[l];
    Eigen::ArrayXXd& s1 = slope_[l];
    Eigen::MatrixXd& a = inputs_[l + 1];
    z.resize(w.rows(), cols);
    a.resize(w.rows(), cols);

    z.noalias() = w * inputs_[l];
    z.leftCols(n).colwise() += params.bias(l);
    tanh_into(z.leftCols(n).array(), t);
    s1 = 1.0 - t.square();

    a.leftCols(n) = t.matrix();
    if (first) {
      for (int i = 0; i < dim_; ++i) {
        stream(a, 1 + i) = (s1 * stream(z, 1 + i).array()).matrix();
      }
    }
    if (second) {
      for (int i = 0; i < dim_; ++i) {
        stream(a, 1 + dim_ + i) =
            (-2.0 * t * s1 * stream(z, 1 + i).array().square() +
             s1 * stream(z, 1 + dim_ + i).array())
                .matrix();
      }
    }
  }

  output_.resize(cols);
  output_.noalias() = params.weights(hidden) * inputs_[hidden];
  const double b_out = params.bias(hidden)(0);

  fields_.value = output_.head(n).transpose().array() + b_out;
  fields_.gradient.resize(first ? dim_ : 0, n);
  for (int i = 0; first && i < dim_; ++i) {
    fields_.gradient.row(i) = output_.segment((1 + i) * n, n);
  }
  fields_.laplacian.resize(second ? n : 0);
  if (second) {
    fields_.laplacian.setZero();
    for (int i = 0; i < dim_; ++i) {
      fields_.laplacian += output_.segment((1 + dim_ + i) * n, n).transpose();
    }
  }
}

void FieldTape::backward(const FieldSeed& seed, Eigen::VectorXd& grad) {
  if (params_ == nullptr) throw std::logic_error("backward() on an empty tape");
  const MlpConfig& cfg = params_->config();
  const Eigen::Index n = points_;
  const Eigen::Index cols = streams_ * n;
  const bool first = order_ != DerivativeOrder::Value;
  const bool second = order_ == DerivativeOrder::Laplacian;
  auto stream = [n](auto& m, Eigen::Index s) { return m.middleCols(s * n, n); };

  if (seed.value.size() != n ||
      (first && (seed.gradient.rows() != dim_ || seed.gradient.cols() != n)) ||
      (second && seed.laplacian.size() != n)) {
    throw std::invalid_argument("field seed shape does not match tape");
  }
  if (static_cast<std::size_t>(grad.size()) != cfg.parameter_count()) {
    throw std::invalid_argument("gradient buffer has wrong length");
  }

  // Adjoint of the stacked output row.
  output_bar_.resize(cols);
  output_bar_.head(n) = seed.value.transpose();
  for (int i = 0; first && i < dim_; ++i) {
    output_bar_.segment((1 + i) * n, n) = seed.gradient.row(i);
  }
  for (int i = 0; second && i < dim_; ++i) {
    output_bar_.segment((1 + dim_ + i) * n, n) = seed.laplacian.transpose();
  }

  const int hidden = cfg.hidden_layers;
  Eigen::Map<RowMatrix> gw_out(grad.data() + cfg.weight_offset(hidden), 1, cfg.hidden_width);
  gw_out.noalias() += output_bar_ * inputs_[hidden].transpose();
  grad(static_cast<Eigen::Index>(cfg.bias_offset(hidden))) += seed.value.sum();

  input_bar_.resize(cfg.hidden_width, cols);
  input_bar_.noalias() = params_->weights(hidden).transpose() * output_bar_;

  for (int l = hidden - 1; l >= 0; --l) {
    const Eigen::MatrixXd& z = preacts_[l];
    const Eigen::ArrayXXd& t = tanh_[l];
    const Eigen::ArrayXXd& s1 = slope_[l];
    const Eigen::MatrixXd& a_bar = input_bar_;
    preact_bar_.resize(z.rows(), cols);

    auto value_bar = stream(preact_bar_, 0).array();
    value_bar = stream(a_bar, 0).array() * s1;
    if (first) {
      slope_bar_.setZero(z.rows(), n);
      for (int i = 0; i < dim_; ++i) {
        slope_bar_ += stream(a_bar, 1 + i).array() * stream(z, 1 + i).array();
        stream(preact_bar_, 1 + i) = (s1 * stream(a_bar, 1 + i).array()).matrix();
      }
    }
    if (second) {
      curvature_bar_.setZero(z.rows(), n);
      for (int i = 0; i < dim_; ++i) {
        const auto dz = stream(z, 1 + i).array();
        const auto d2a_bar = stream(a_bar, 1 + dim_ + i).array();
        slope_bar_ += d2a_bar * stream(z, 1 + dim_ + i).array();
        curvature_bar_ += d2a_bar * dz.square();
        stream(preact_bar_, 1 + i).array() += -4.0 * t * s1 * dz * d2a_bar;
        stream(preact_bar_, 1 + dim_ + i) = (s1 * d2a_bar).matrix();
      }
      // d(s1)/dz = s2 = -2 t s1,  d(s2)/dz = -2 s1^2 + 4 t^2 s1
      value_bar += curvature_bar_ * (-2.0 * s1.square() + 4.0 * t.square() * s1);
    }
    if (first) value_bar += slope_bar_ * (-2.0 * t * s1);

    Eigen::Map<RowMatrix> gw(grad.data() + cfg.weight_offset(l), cfg.fan_out(l), cfg.fan_in(l));
    gw.noalias() += preact_bar_ * inputs_[l].transpose();
    Eigen::Map<Eigen::VectorXd> gb(grad.data() + cfg.bias_offset(l), cfg.fan_out(l));
    gb += stream(preact_bar_, 0).rowwise().sum();

    if (l > 0) input_bar_.noalias() = params_->weights(l).transpose() * preact_bar_;
  }
}

FieldSeed zero_seed_like(const FieldBatch& batch) {
  FieldSeed seed;
  seed.value = Eigen::VectorXd::Zero(batch.value.size());
  seed.gradient = Eigen::MatrixXd::Zero(batch.gradient.rows(), batch.gradient.cols());
  seed.laplacian = Eigen::VectorXd::Zero(batch.laplacian.size());
  return seed;
}

double forward(const ParameterVector& params, const Eigen::Ref<const Eigen::VectorXd>& x) {
  const Eigen::MatrixXd point = x;
  return FieldTape(params, point, DerivativeOrder::Value).fields().value(0);
}

FieldEvaluation evaluate_field(const ParameterVector& params,
                               const Eigen::Ref<const Eigen::VectorXd>& x) {
  const Eigen::MatrixXd point = x;
  const FieldTape tape(params, point, DerivativeOrder::Laplacian);
  const FieldBatch& f = tape.fields();
  return FieldEvaluation{f.value(0), f.gradient.col(0), f.laplacian(0)};
}

FieldBatch evaluate_batch(const ParameterVector& params, const Eigen::MatrixXd& points,
                          DerivativeOrder order) {
  return FieldTape(params, points, order).fields();
}

void LossEvaluator::record(const ParameterVector& params, const BatchObjective& objective) {
  const std::size_t count = objective.batches.size();
  tapes_.resize(count);
  fields_.resize(count);
  for (std::size_t k = 0; k < count; ++k) {
    tapes_[k].record(params, objective.batches[k].points, objective.batches[k].order);
    fields_[k] = tapes_[k].fields();
  }
}

LossGradient LossEvaluator::gradient(const ParameterVector& params,
                                     const BatchObjective& objective) {
  record(params, objective);
  seeds_.resize(fields_.size());
  for (std::size_t k = 0; k < fields_.size(); ++k) {
    seeds_[k].value.setZero(fields_[k].value.size());
    seeds_[k].gradient.setZero(fields_[k].gradient.rows(), fields_[k].gradient.cols());
    seeds_[k].laplacian.setZero(fields_[k].laplacian.size());
  }

  LossGradient out;
  out.value = objective.loss(fields_, seeds_);
  if (!std::isfinite(out.value)) {
    throw DivergenceError("objective evaluated to a non-finite value");
  }
  out.grad = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(params.size()));
  for (std::size_t k = 0; k < tapes_.size(); ++k) tapes_[k].backward(seeds_[k], out.grad);
  if (!out.grad.allFinite()) {
    throw DivergenceError("objective gradient is not finite");
  }
  return out;
}

double LossEvaluator::value(const ParameterVector& params, const BatchObjective& objective) {
  record(params, objective);
  const double value = objective.loss(fields_, {});
  if (!std::isfinite(value)) {
    throw DivergenceError("objective evaluated to a non-finite value");
  }
  return value;
}

LossGradient loss_gradient(const ParameterVector& params, const BatchObjective& objective) {
  return LossEvaluator().gradient(params, objective);
}

double loss_value(const ParameterVector& params, const BatchObjective& objective) {
  return LossEvaluator().value(params, objective);
}

}  // namespace ecl
