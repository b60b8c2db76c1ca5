#include "ngo/grf.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace ngo {

GrfField::GrfField(const GrfSpec& spec) : spec_(spec) {
  if (spec.length_scale <= 0.0) throw std::invalid_argument("GrfField: length scale must be > 0");
  if (spec.spatial_dim < 1 || spec.spatial_dim > 3)
    throw std::invalid_argument("GrfField: spatial dimension out of range");
  if (spec.features < 1) throw std::invalid_argument("GrfField: need at least one feature");

  const int d = spec.total_dim();
  const int D = spec.features;
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 2.0 * M_PI);

  // Spectral measure of the squared-exponential kernel: omega ~ N(0, 1/l^2)
  // per coordinate, with the time coordinate using its own scale.
  omega_.resize(D, d);
  phase_.resize(D);
  omega_sq_.resize(D);
  const int t_off = spec.time_scale > 0.0 ? 1 : 0;
  for (int k = 0; k < D; ++k) {
    if (t_off) omega_(k, 0) = normal(rng) / spec.time_scale;
    for (int i = 0; i < spec.spatial_dim; ++i)
      omega_(k, t_off + i) = normal(rng) / spec.length_scale;
    phase_(k) = uniform(rng);
    double s2 = 0.0;
    for (int i = 0; i < spec.spatial_dim; ++i) s2 += omega_(k, t_off + i) * omega_(k, t_off + i);
    omega_sq_(k) = s2;
  }
  amp_ = std::sqrt(2.0 / D);
}

double GrfField::value(const double* x) const {
  const int d = spec_.total_dim();
  double acc = 0.0;
  for (int k = 0; k < omega_.rows(); ++k) {
    double ph = phase_(k);
    for (int i = 0; i < d; ++i) ph += omega_(k, i) * x[i];
    acc += std::cos(ph);
  }
  return spec_.offset + spec_.scale * amp_ * acc;
}

void GrfField::gradient(const double* x, double* g) const {
  const int d = spec_.total_dim();
  for (int i = 0; i < d; ++i) g[i] = 0.0;
  for (int k = 0; k < omega_.rows(); ++k) {
    double ph = phase_(k);
    for (int i = 0; i < d; ++i) ph += omega_(k, i) * x[i];
    const double s = std::sin(ph);
    for (int i = 0; i < d; ++i) g[i] -= omega_(k, i) * s;
  }
  for (int i = 0; i < d; ++i) g[i] *= spec_.scale * amp_;
}

double GrfField::laplacian(const double* x) const {
  const int d = spec_.total_dim();
  double acc = 0.0;
  for (int k = 0; k < omega_.rows(); ++k) {
    double ph = phase_(k);
    for (int i = 0; i < d; ++i) ph += omega_(k, i) * x[i];
    acc -= omega_sq_(k) * std::cos(ph);
  }
  return spec_.scale * amp_ * acc;
}

double GrfField::time_derivative(const double* x) const {
  if (spec_.time_scale <= 0.0) return 0.0;
  const int d = spec_.total_dim();
  double acc = 0.0;
  for (int k = 0; k < omega_.rows(); ++k) {
    double ph = phase_(k);
    for (int i = 0; i < d; ++i) ph += omega_(k, i) * x[i];
    acc -= omega_(k, 0) * std::sin(ph);
  }
  return spec_.scale * amp_ * acc;
}

GrfEval GrfField::sample(const RowMatrixXd& points, bool with_derivatives) const {
  const int d = spec_.total_dim();
  if (points.cols() != d) throw std::invalid_argument("GrfField::sample: dimension mismatch");
  const int q = static_cast<int>(points.rows());

  // Phases for all (point, feature) pairs, then cos/sin once.
  MatrixXd ph = points * omega_.transpose();
  ph.rowwise() += phase_.transpose();
  MatrixXd c = ph.array().cos();

  GrfEval out;
  const double ca = spec_.scale * amp_;
  out.value = VectorXd::Constant(q, spec_.offset) + ca * c.rowwise().sum();
  if (!with_derivatives) return out;

  MatrixXd s = ph.array().sin();
  out.grad = -ca * (s * omega_);
  out.laplacian = -ca * (c * omega_sq_);
  if (spec_.time_scale > 0.0)
    out.dt = out.grad.col(0);
  else
    out.dt = VectorXd::Zero(q);
  return out;
}

}  // namespace ngo
