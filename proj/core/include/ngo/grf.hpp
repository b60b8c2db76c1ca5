#pragma once

#include <Eigen/Core>
#include <cstdint>

#include "ngo/quadrature.hpp"

namespace ngo {

/// Stationary Gaussian random field with squared-exponential covariance
/// exp(-r^2 / (2 lambda^2)), synthesized from random Fourier features so all
/// derivatives are available in closed form. The affine transform
/// offset + scale * (.) is applied on top of the unit-variance field.
/// Space-time fields use coordinates (t,x,...) with their own time scale.
struct GrfSpec {
  double length_scale = 0.5;
  double time_scale = 0.0;  // > 0 activates a leading time coordinate
  double offset = 0.0;
  double scale = 1.0;
  std::uint64_t seed = 0;
  int spatial_dim = 2;
  int features = 2048;

  int total_dim() const { return spatial_dim + (time_scale > 0.0 ? 1 : 0); }
};

/// Batched evaluations of a field on a set of points.
struct GrfEval {
  VectorXd value;
  MatrixXd grad;       // Q x dim (all coordinates, time first if present)
  VectorXd laplacian;  // spatial Laplacian only
  VectorXd dt;         // time derivative (zero column when not space-time)
};

class GrfField {
public:
  explicit GrfField(const GrfSpec& spec);

  const GrfSpec& spec() const { return spec_; }

  double value(const double* x) const;
  void gradient(const double* x, double* g) const;
  double laplacian(const double* x) const;  // spatial part
  double time_derivative(const double* x) const;

  /// Evaluate value/gradient/Laplacian/dt on many points at once
  /// (points: Q x total_dim).
  GrfEval sample(const RowMatrixXd& points, bool with_derivatives) const;
  GrfEval sample(const QuadratureRule& rule, bool with_derivatives) const {
    return sample(rule.points, with_derivatives);
  }

private:
  GrfSpec spec_;
  MatrixXd omega_;      // features x dim
  VectorXd phase_;      // features
  VectorXd omega_sq_;   // spatial |omega|^2 per feature
  double amp_ = 0.0;
};

}  // namespace ngo
