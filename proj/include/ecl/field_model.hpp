#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace ecl {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Raised when a loss or gradient evaluates to a non-finite value.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Fully connected tanh network R^input_dim -> R with `hidden_layers` hidden
/// layers of `hidden_width` neurons and a linear output neuron.
///
/// Layer l (0-based, hidden layers first, output layer last) owns a weight
/// matrix of shape fan_out x fan_in stored row-major, followed by its bias
/// vector. Layers are laid out in order inside the flat parameter vector.
struct MlpConfig {
  int input_dim = 1;
  int hidden_layers = 8;
  int hidden_width = 20;

  // Throws std::invalid_argument on an unsupported shape.
  void validate() const;

  int layer_count() const { return hidden_layers + 1; }
  int fan_in(int layer) const { return layer == 0 ? input_dim : hidden_width; }
  int fan_out(int layer) const { return layer == hidden_layers ? 1 : hidden_width; }
  std::size_t weight_offset(int layer) const;
  std::size_t bias_offset(int layer) const {
    return weight_offset(layer) + static_cast<std::size_t>(fan_in(layer)) * fan_out(layer);
  }
  std::size_t parameter_count() const { return weight_offset(layer_count()); }

  bool operator==(const MlpConfig&) const = default;
};

// The flat parameter vector together with the architecture that gives it
// meaning. Per-layer views address the canonical layout directly.
class ParameterVector {
 public:
  using ConstMatrixMap = Eigen::Map<const RowMatrix>;
  using MatrixMap = Eigen::Map<RowMatrix>;
  using ConstVectorMap = Eigen::Map<const Eigen::VectorXd>;
  using VectorMap = Eigen::Map<Eigen::VectorXd>;

  // All-zero parameters.
  explicit ParameterVector(const MlpConfig& config);
  ParameterVector(const MlpConfig& config, Eigen::VectorXd values);

  const MlpConfig& config() const { return config_; }
  const Eigen::VectorXd& values() const { return values_; }
  Eigen::VectorXd& values() { return values_; }
  std::size_t size() const { return static_cast<std::size_t>(values_.size()); }

  ConstMatrixMap weights(int layer) const;
  MatrixMap weights(int layer);
  ConstVectorMap bias(int layer) const;
  VectorMap bias(int layer);

  bool all_finite() const { return values_.allFinite(); }

 private:
  MlpConfig config_;
  Eigen::VectorXd values_;
};

// Glorot-uniform weights, zero biases.
ParameterVector init_params(const MlpConfig& config, std::uint64_t seed);

enum class DerivativeOrder {
  Value,      // u only
  Gradient,   // u and du/dx_i
  Laplacian,  // u, du/dx_i and sum_i d2u/dx_i^2
};

struct FieldEvaluation {
  double value = 0.0;
  Eigen::VectorXd gradient;
  double laplacian = 0.0;
};

// Network outputs for a batch of N points. `gradient` is input_dim x N and
// is empty (0 rows) below DerivativeOrder::Gradient; `laplacian` is empty
// below DerivativeOrder::Laplacian.
struct FieldBatch {
  Eigen::VectorXd value;
  Eigen::MatrixXd gradient;
  Eigen::VectorXd laplacian;
};

// Adjoint seeds dLoss/d(output) with the same shapes as a FieldBatch.
using FieldSeed = FieldBatch;

// Zero seeds shaped like `batch`.
FieldSeed zero_seed_like(const FieldBatch& batch);

/// Forward sweep over a batch of points that keeps what the reverse sweep
/// needs.
///
/// Every hidden layer propagates the value stream and, per input coordinate
/// i, the streams da/dx_i and d2a/dx_i^2. All streams are stacked column-wise
/// so each layer costs a single matrix product:
///
///   z = W a + b,  dz_i = W da_i,  d2z_i = W d2a_i
///   a' = tanh z,  da'_i = s1 dz_i,  d2a'_i = s2 dz_i^2 + s1 d2z_i
///
/// with s1 = 1 - tanh^2 z and s2 = -2 tanh z s1. backward() runs the adjoint
/// of exactly this recurrence, so parameter gradients include the paths
/// through input derivatives.
///
/// A tape owns its buffers; calling record() again with the same shapes
/// reuses them without allocating.
class FieldTape {
 public:
  FieldTape() = default;
  // `points` is input_dim x N. `params` must outlive the tape.
  FieldTape(const ParameterVector& params, const Eigen::MatrixXd& points, DerivativeOrder order) {
    record(params, points, order);
  }

  void record(const ParameterVector& params, const Eigen::MatrixXd& points, DerivativeOrder order);

  const FieldBatch& fields() const { return fields_; }
  DerivativeOrder order() const { return order_; }

  // Accumulates dLoss/dtheta into `grad` (length = parameter count).
  void backward(const FieldSeed& seed, Eigen::VectorXd& grad);

 private:
  const ParameterVector* params_ = nullptr;
  DerivativeOrder order_ = DerivativeOrder::Value;
  Eigen::Index points_ = 0;
  int dim_ = 0;
  int streams_ = 0;
  std::vector<Eigen::MatrixXd> inputs_;   // stacked input of each layer
  std::vector<Eigen::MatrixXd> preacts_;  // stacked pre-activations of hidden layers
  std::vector<Eigen::ArrayXXd> tanh_;     // tanh of the value pre-activation
  std::vector<Eigen::ArrayXXd> slope_;    // 1 - tanh^2
  Eigen::RowVectorXd output_;
  FieldBatch fields_;

  // Reverse-sweep scratch.
  Eigen::RowVectorXd output_bar_;
  Eigen::MatrixXd input_bar_;
  Eigen::MatrixXd preact_bar_;
  Eigen::ArrayXXd slope_bar_;
  Eigen::ArrayXXd curvature_bar_;
};

double forward(const ParameterVector& params, const Eigen::Ref<const Eigen::VectorXd>& x);
FieldEvaluation evaluate_field(const ParameterVector& params,
                               const Eigen::Ref<const Eigen::VectorXd>& x);
FieldBatch evaluate_batch(const ParameterVector& params, const Eigen::MatrixXd& points,
                          DerivativeOrder order);

struct BatchSpec {
  Eigen::MatrixXd points;
  DerivativeOrder order = DerivativeOrder::Value;
};

// A scalar objective over the network's outputs on a set of point batches.
// `loss` receives one FieldBatch per BatchSpec and returns the objective
// value. When `seeds` is non-empty it holds zeroed seeds shaped like the
// fields, and `loss` must add the partial derivatives of the objective
// into them.
struct BatchObjective {
  std::vector<BatchSpec> batches;
  std::function<double(std::span<const FieldBatch> fields, std::span<FieldSeed> seeds)> loss;
};

struct LossGradient {
  double value = 0.0;
  Eigen::VectorXd grad;
};

// Evaluates BatchObjectives with tapes and seeds that persist between
// calls, so repeated evaluation on same-sized batches does not allocate.
// Both methods throw DivergenceError when the objective (or its gradient)
// is not finite.
class LossEvaluator {
 public:
  LossGradient gradient(const ParameterVector& params, const BatchObjective& objective);
  double value(const ParameterVector& params, const BatchObjective& objective);

 private:
  void record(const ParameterVector& params, const BatchObjective& objective);

  std::vector<FieldTape> tapes_;
  std::vector<FieldBatch> fields_;
  std::vector<FieldSeed> seeds_;
};

LossGradient loss_gradient(const ParameterVector& params, const BatchObjective& objective);
double loss_value(const ParameterVector& params, const BatchObjective& objective);

}  // namespace ecl
