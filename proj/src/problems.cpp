#include "ecl/problems.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "ecl/random.hpp"

namespace ecl {

namespace {
constexpr double kPi = std::numbers::pi;
constexpr int kOmega2D = 15;
}  // namespace

Problem Problem::poisson1d(int omega) {
  if (omega <= 0) {
    throw std::invalid_argument("poisson1d: omega must be a positive integer, got " +
                                std::to_string(omega));
  }
  return Problem(ProblemKind::Poisson1D, omega, "poisson1d");
}

Problem Problem::poisson2d() { return Problem(ProblemKind::Poisson2D, kOmega2D, "poisson2d"); }

double Problem::exact(const PointRef& x) const {
  if (kind_ == ProblemKind::Poisson1D) return std::sin(omega_ * kPi * x(0));
  return std::cos(kOmega2D * kPi * x(0)) * std::exp(-kPi * x(1));
}

Eigen::VectorXd Problem::exact_gradient(const PointRef& x) const {
  if (kind_ == ProblemKind::Poisson1D) {
    const double k = omega_ * kPi;
    return Eigen::VectorXd::Constant(1, k * std::cos(k * x(0)));
  }
  const double k = kOmega2D * kPi;
  const double decay = std::exp(-kPi * x(1));
  Eigen::VectorXd g(2);
  g(0) = -k * std::sin(k * x(0)) * decay;
  g(1) = -kPi * std::cos(k * x(0)) * decay;
  return g;
}

double Problem::exact_laplacian(const PointRef& x) const {
  if (kind_ == ProblemKind::Poisson1D) {
    const double k = omega_ * kPi;
    return -k * k * std::sin(k * x(0));
  }
  const double k = kOmega2D * kPi;
  const double decay = std::exp(-kPi * x(1));
  const double u_xx = -k * k * std::cos(k * x(0)) * decay;
  const double u_yy = kPi * kPi * std::cos(k * x(0)) * decay;
  return u_xx + u_yy;
}

double Problem::forcing(const PointRef& x) const {
  if (kind_ == ProblemKind::Poisson1D) {
    const double k = omega_ * kPi;
    return -(k * k) * std::sin(k * x(0));
  }
  return -224.0 * kPi * kPi * std::cos(kOmega2D * kPi * x(0)) * std::exp(-kPi * x(1));
}

bool Problem::on_boundary(const PointRef& x) const {
  bool pinned = false;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (x(i) < 0.0 || x(i) > 1.0) return false;
    if (x(i) == 0.0 || x(i) == 1.0) pinned = true;
  }
  return pinned;
}

bool Problem::in_interior(const PointRef& x) const {
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (!(x(i) > 0.0 && x(i) < 1.0)) return false;
  }
  return true;
}

Eigen::MatrixXd sample_domain(const Problem& problem, int n, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("sample_domain: n must be >= 1");
  Rng rng(seed);
  Eigen::MatrixXd points(problem.input_dim(), n);
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < problem.input_dim(); ++i) points(i, j) = rng.uniform_open();
  }
  return points;
}

BoundarySample sample_boundary(const Problem& problem, int n, std::uint64_t seed) {
  BoundarySample out;
  if (problem.kind() == ProblemKind::Poisson1D) {
    if (n != 2) {
      throw std::invalid_argument("sample_boundary: a 1-D problem has exactly 2 boundary points, got " +
                                  std::to_string(n));
    }
    out.points.resize(1, 2);
    out.points << 0.0, 1.0;
  } else {
    if (n < 4) throw std::invalid_argument("sample_boundary: 2-D needs n >= 4");
    Rng rng(seed);
    out.points.resize(2, n);
    for (int j = 0; j < n; ++j) {
      const double t = rng.uniform();
      switch (j % 4) {
        case 0: out.points.col(j) << t, 0.0; break;
        case 1: out.points.col(j) << 1.0, t; break;
        case 2: out.points.col(j) << t, 1.0; break;
        default: out.points.col(j) << 0.0, t; break;
      }
    }
  }
  out.values.resize(out.points.cols());
  for (Eigen::Index j = 0; j < out.points.cols(); ++j) {
    out.values(j) = problem.boundary_value(out.points.col(j));
  }
  return out;
}

SampleBatch make_batch(const Problem& problem, int n_domain, int n_boundary, std::uint64_t seed) {
  SampleBatch batch;
  batch.domain_points = sample_domain(problem, n_domain, derive_seed(seed, 0));
  BoundarySample boundary = sample_boundary(problem, n_boundary, derive_seed(seed, 1));
  batch.boundary_points = std::move(boundary.points);
  batch.boundary_values = std::move(boundary.values);
  batch.domain_exact.resize(n_domain);
  batch.domain_forcing.resize(n_domain);
  for (int j = 0; j < n_domain; ++j) {
    batch.domain_exact(j) = problem.exact(batch.domain_points.col(j));
    batch.domain_forcing(j) = problem.forcing(batch.domain_points.col(j));
  }
  return batch;
}

double residual(const FieldEvaluation& eval, const Problem& problem, const PointRef& x) {
  return eval.laplacian - problem.forcing(x);
}

int default_grid_resolution(const Problem& problem) {
  return problem.input_dim() == 1 ? 1001 : 201;
}

Eigen::MatrixXd evaluation_grid(const Problem& problem, int resolution) {
  const int res = resolution > 0 ? resolution : default_grid_resolution(problem);
  if (res < 2) throw std::invalid_argument("evaluation grid needs at least 2 points per axis");
  auto coord = [res](int k) { return static_cast<double>(k) / (res - 1); };
  if (problem.input_dim() == 1) {
    Eigen::MatrixXd grid(1, res);
    for (int k = 0; k < res; ++k) grid(0, k) = coord(k);
    return grid;
  }
  Eigen::MatrixXd grid(2, static_cast<Eigen::Index>(res) * res);
  for (int j = 0; j < res; ++j) {
    for (int i = 0; i < res; ++i) {
      grid(0, j * res + i) = coord(i);
      grid(1, j * res + i) = coord(j);
    }
  }
  return grid;
}

}  // namespace ecl
