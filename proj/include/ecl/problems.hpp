#pragma once

#include <cstdint>
#include <string>

#include <Eigen/Dense>

#include "ecl/field_model.hpp"

namespace ecl {

enum class ProblemKind { Poisson1D, Poisson2D };

using PointRef = Eigen::Ref<const Eigen::VectorXd>;

/// Poisson problem  lap(u) = f  on the unit interval or square, with
/// Dirichlet data g taken from a manufactured solution.
///
///   poisson1d(w): u = sin(w pi x),              f = -(w pi)^2 u
///   poisson2d():  u = cos(15 pi x) exp(-pi y),  f = -224 pi^2 u
class Problem {
 public:
  // Throws std::invalid_argument for omega <= 0.
  static Problem poisson1d(int omega);
  static Problem poisson2d();

  ProblemKind kind() const { return kind_; }
  // "poisson1d" or "poisson2d".
  const std::string& name() const { return name_; }
  int input_dim() const { return kind_ == ProblemKind::Poisson1D ? 1 : 2; }
  // Wave number of the 1-D family; 15 for the 2-D problem.
  int omega() const { return omega_; }

  double exact(const PointRef& x) const;
  Eigen::VectorXd exact_gradient(const PointRef& x) const;
  // Sum of the separately derived second partials of exact().
  double exact_laplacian(const PointRef& x) const;
  double forcing(const PointRef& x) const;
  double boundary_value(const PointRef& x) const { return exact(x); }

  // Number of boundary faces: 2 endpoints in 1-D, 4 edges in 2-D.
  int boundary_faces() const { return kind_ == ProblemKind::Poisson1D ? 2 : 4; }
  // True when one coordinate is exactly 0 or 1 and all lie in [0, 1].
  bool on_boundary(const PointRef& x) const;
  // True when every coordinate lies strictly in (0, 1).
  bool in_interior(const PointRef& x) const;

 private:
  Problem(ProblemKind kind, int omega, std::string name)
      : kind_(kind), omega_(omega), name_(std::move(name)) {}

  ProblemKind kind_;
  int omega_;
  std::string name_;
};

struct BoundarySample {
  Eigen::MatrixXd points;  // input_dim x N
  Eigen::VectorXd values;  // g at the points
};

// Training points for one epoch. Exact values and forcing at the domain
// points are cached because the objectives read them every epoch.
struct SampleBatch {
  Eigen::MatrixXd domain_points;    // input_dim x N_domain
  Eigen::VectorXd domain_exact;     // u at domain points (supervised targets)
  Eigen::VectorXd domain_forcing;   // f at domain points
  Eigen::MatrixXd boundary_points;  // input_dim x N_boundary
  Eigen::VectorXd boundary_values;  // g at boundary points
};

// n i.i.d. uniform points in the open interior.
Eigen::MatrixXd sample_domain(const Problem& problem, int n, std::uint64_t seed);

// 1-D: exactly the endpoints {0, 1} (n must be 2). 2-D: point j lies on
// face j mod 4 (y=0, x=1, y=1, x=0) at a uniform position along it.
BoundarySample sample_boundary(const Problem& problem, int n, std::uint64_t seed);

// Domain and boundary samples drawn from independent streams of `seed`.
SampleBatch make_batch(const Problem& problem, int n_domain, int n_boundary, std::uint64_t seed);

// Pointwise PDE defect lap(u_theta) - f at x.
double residual(const FieldEvaluation& eval, const Problem& problem, const PointRef& x);

// Uniform evaluation grid over the closed domain: `resolution` points in
// 1-D, resolution x resolution in 2-D (x varies fastest). resolution <= 0
// selects the default (1001 in 1-D, 201 in 2-D).
Eigen::MatrixXd evaluation_grid(const Problem& problem, int resolution = 0);
int default_grid_resolution(const Problem& problem);

}  // namespace ecl
