#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ecl/field_model.hpp"
#include "ecl/problems.hpp"

namespace ecl {

// |predicted - exact|_2 / |exact|_2. Throws std::domain_error when |exact| is
// zero and std::invalid_argument on a length mismatch.
double relative_l2(const Eigen::VectorXd& predicted, const Eigen::VectorXd& exact);

struct ModelEvaluation {
  Eigen::MatrixXd points;  // input_dim x M evaluation grid
  Eigen::VectorXd predicted;
  Eigen::VectorXd exact;
  double relative_l2 = 0.0;
};

// Predicted and exact fields on the uniform grid over the closed domain.
// grid_resolution <= 0 selects the default (1001 in 1-D, 201 x 201 in 2-D).
ModelEvaluation evaluate_model(const ParameterVector& params, const Problem& problem,
                               int grid_resolution = 0);

struct LandscapeSettings {
  std::uint64_t seed = 13;
  double half_range = 1.0;
  int resolution = 51;  // odd, so the origin is a grid node
};

struct LandscapeDirections {
  Eigen::VectorXd delta;
  Eigen::VectorXd eta;
  // One line per neuron slice whose direction was zeroed.
  std::vector<std::string> events;
};

// Loss values over theta + alpha * delta + beta * eta.
// losses(i, j) belongs to (alphas(i), betas(j)).
struct LandscapeGrid {
  Eigen::VectorXd alphas;
  Eigen::VectorXd betas;
  Eigen::MatrixXd losses;
  double center_loss = 0.0;
  std::uint64_t direction_seed = 0;
  double half_range = 0.0;
  std::string normalization = "filter";
  std::vector<std::string> events;

  Eigen::Index center_index() const { return alphas.size() / 2; }
};

using LossFunction = std::function<double(const ParameterVector&)>;

// Rescales every neuron slice of `direction` (one weight row plus its bias
// entry) to the Euclidean norm of the matching slice of `params`. Slices
// where params has zero norm are zeroed and reported in `events`.
void filter_normalize(Eigen::VectorXd& direction, const ParameterVector& params,
                      std::vector<std::string>* events = nullptr);

// Two seeded Gaussian directions, filter-normalized against `params`.
LandscapeDirections landscape_directions(const ParameterVector& params, std::uint64_t seed);

// Evaluates `loss` over the (2 half_range)-wide grid along two random
// filter-normalized directions. Non-finite cells are stored as +inf.
LandscapeGrid scan_landscape(const ParameterVector& params, const LossFunction& loss,
                             const LandscapeSettings& settings = {});

// Same scan along caller-supplied directions (used as-is, no normalization).
LandscapeGrid scan_landscape_along(const ParameterVector& params, const LossFunction& loss,
                                   const Eigen::VectorXd& delta, const Eigen::VectorXd& eta,
                                   const LandscapeSettings& settings = {});

struct LayerHistogram {
  int layer_index = 0;  // 1-based; the output layer is hidden_layers + 1
  Eigen::VectorXd bin_edges;
  Eigen::VectorXi counts;
  double mean = 0.0;
  double variance = 0.0;  // population variance
};

// One histogram per weight matrix (biases excluded), binned over the
// layer's own [min, max]. A constant layer gets a unit-wide range centred
// on its value.
std::vector<LayerHistogram> weight_histograms(const ParameterVector& params, int bins = 81);

}  // namespace ecl
