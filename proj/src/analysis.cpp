#include "ecl/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "ecl/random.hpp"

namespace ecl {

double relative_l2(const Eigen::VectorXd& predicted, const Eigen::VectorXd& exact) {
  if (predicted.size() != exact.size()) {
    throw std::invalid_argument("relative_l2: length mismatch");
  }
  const double denom = exact.norm();
  if (!(denom > 0.0)) throw std::domain_error("relative_l2: exact vector has zero norm");
  return (predicted - exact).norm() / denom;
}

ModelEvaluation evaluate_model(const ParameterVector& params, const Problem& problem,
                               int grid_resolution) {
  ModelEvaluation out;
  out.points = evaluation_grid(problem, grid_resolution);
  out.predicted = evaluate_batch(params, out.points, DerivativeOrder::Value).value;
  out.exact.resize(out.points.cols());
  for (Eigen::Index j = 0; j < out.points.cols(); ++j) {
    out.exact(j) = problem.exact(out.points.col(j));
  }
  out.relative_l2 = relative_l2(out.predicted, out.exact);
  return out;
}

void filter_normalize(Eigen::VectorXd& direction, const ParameterVector& params,
                      std::vector<std::string>* events) {
  const MlpConfig& cfg = params.config();
  if (static_cast<std::size_t>(direction.size()) != params.size()) {
    throw std::invalid_argument("filter_normalize: direction length does not match parameters");
  }
  ParameterVector dir(cfg, std::move(direction));
  for (int l = 0; l < cfg.layer_count(); ++l) {
    auto w_dir = dir.weights(l);
    auto b_dir = dir.bias(l);
    const auto w = params.weights(l);
    const auto b = params.bias(l);
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      const double target = std::sqrt(w.row(r).squaredNorm() + b(r) * b(r));
      const double current = std::sqrt(w_dir.row(r).squaredNorm() + b_dir(r) * b_dir(r));
      if (target == 0.0 || current == 0.0) {
        w_dir.row(r).setZero();
        b_dir(r) = 0.0;
        if (events != nullptr) {
          events->push_back("layer " + std::to_string(l + 1) + " neuron " + std::to_string(r) +
                            ": zero-norm slice, direction zeroed");
        }
        continue;
      }
      const double scale = target / current;
      w_dir.row(r) *= scale;
      b_dir(r) *= scale;
    }
  }
  direction = std::move(dir.values());
}

LandscapeDirections landscape_directions(const ParameterVector& params, std::uint64_t seed) {
  LandscapeDirections out;
  const auto n = static_cast<Eigen::Index>(params.size());
  Rng rng(seed);
  out.delta.resize(n);
  out.eta.resize(n);
  for (Eigen::Index k = 0; k < n; ++k) out.delta(k) = rng.normal();
  for (Eigen::Index k = 0; k < n; ++k) out.eta(k) = rng.normal();
  filter_normalize(out.delta, params, &out.events);
  filter_normalize(out.eta, params, &out.events);
  return out;
}

namespace {

Eigen::VectorXd grid_axis(double half_range, int resolution) {
  Eigen::VectorXd axis(resolution);
  // Integer numerator keeps the middle node at exactly 0.
  for (int k = 0; k < resolution; ++k) {
    axis(k) = half_range * static_cast<double>(2 * k - (resolution - 1)) / (resolution - 1);
  }
  return axis;
}

}  // namespace

LandscapeGrid scan_landscape_along(const ParameterVector& params, const LossFunction& loss,
                                   const Eigen::VectorXd& delta, const Eigen::VectorXd& eta,
                                   const LandscapeSettings& settings) {
  if (settings.resolution < 1 || settings.resolution % 2 == 0) {
    throw std::invalid_argument("landscape resolution must be odd");
  }
  if (!(settings.half_range > 0.0)) throw std::invalid_argument("half_range must be positive");
  if (delta.size() != params.values().size() || eta.size() != params.values().size()) {
    throw std::invalid_argument("landscape direction length does not match parameters");
  }
  LandscapeGrid grid;
  grid.direction_seed = settings.seed;
  grid.half_range = settings.half_range;
  grid.alphas = grid_axis(settings.half_range, settings.resolution);
  grid.betas = grid.alphas;
  grid.losses.resize(settings.resolution, settings.resolution);

  const Eigen::Index mid = grid.center_index();
  ParameterVector probe = params;
  for (Eigen::Index i = 0; i < grid.alphas.size(); ++i) {
    for (Eigen::Index j = 0; j < grid.betas.size(); ++j) {
      if (i == mid && j == mid) {
        probe.values() = params.values();
      } else {
        probe.values() = params.values() + grid.alphas(i) * delta + grid.betas(j) * eta;
      }
      double value = std::numeric_limits<double>::infinity();
      try {
        value = loss(probe);
      } catch (const DivergenceError&) {
      }
      grid.losses(i, j) = std::isfinite(value) ? value : std::numeric_limits<double>::infinity();
    }
  }
  grid.center_loss = grid.losses(mid, mid);
  return grid;
}

LandscapeGrid scan_landscape(const ParameterVector& params, const LossFunction& loss,
                             const LandscapeSettings& settings) {
  LandscapeDirections dirs = landscape_directions(params, settings.seed);
  LandscapeGrid grid = scan_landscape_along(params, loss, dirs.delta, dirs.eta, settings);
  grid.events = std::move(dirs.events);
  return grid;
}

std::vector<LayerHistogram> weight_histograms(const ParameterVector& params, int bins) {
  if (bins < 1) throw std::invalid_argument("weight_histograms: bins must be >= 1");
  const MlpConfig& cfg = params.config();
  std::vector<LayerHistogram> out;
  out.reserve(static_cast<std::size_t>(cfg.layer_count()));
  for (int l = 0; l < cfg.layer_count(); ++l) {
    const Eigen::ArrayXd w = params.weights(l).reshaped<Eigen::RowMajor>().array();
    LayerHistogram h;
    h.layer_index = l + 1;
    h.mean = w.mean();
    h.variance = (w - h.mean).square().mean();

    double lo = w.minCoeff();
    double hi = w.maxCoeff();
    if (lo == hi) {
      lo -= 0.5;
      hi += 0.5;
    }
    h.bin_edges = Eigen::VectorXd::LinSpaced(bins + 1, lo, hi);
    h.bin_edges(bins) = hi;
    h.counts = Eigen::VectorXi::Zero(bins);
    const double width = (hi - lo) / bins;
    for (const double v : w) {
      auto k = static_cast<Eigen::Index>(std::floor((v - lo) / width));
      k = std::clamp<Eigen::Index>(k, 0, bins - 1);
      h.counts(k) += 1;
    }
    out.push_back(std::move(h));
  }
  return out;
}

}  // namespace ecl
