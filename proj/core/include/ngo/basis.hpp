#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "ngo/quadrature.hpp"

namespace ngo {

enum class BasisKind { BSpline, Chebyshev };

std::string to_string(BasisKind k);

/// A 1D function basis on [0,1]. B-splines use a clamped (open) uniform knot
/// vector; Chebyshev bases are modal, T_k mapped to [0,1].
class Basis1D {
public:
  static Basis1D bspline(int n, int degree);
  static Basis1D chebyshev(int n);

  BasisKind kind() const { return kind_; }
  int count() const { return n_; }
  int degree() const { return degree_; }
  const std::vector<double>& knots() const { return knots_; }

  /// Number of locally supported functions at a point (p+1 for splines,
  /// all n for modal bases).
  int support() const { return kind_ == BasisKind::BSpline ? degree_ + 1 : n_; }

  /// Evaluate the locally supported functions and derivatives up to
  /// `nderiv` (max 2) at x in [0,1]. Returns the index of the first
  /// supported function; `vals` is laid out as vals[d * support() + j].
  int eval_local(double x, int nderiv, double* vals) const;

  /// Dense evaluation of all functions (zeros outside supports).
  void eval(double x, int nderiv, double* out) const;  // out: (nderiv+1) x n

  Eigen::VectorXd values(double x) const;
  Eigen::VectorXd derivatives(double x, int order) const;

private:
  Basis1D() = default;
  int find_span(double x) const;

  BasisKind kind_ = BasisKind::BSpline;
  int n_ = 0;
  int degree_ = 0;
  std::vector<double> knots_;
};

Basis1D make_bspline_basis(int n, int degree);
Basis1D make_chebyshev_basis(int n);

/// Result of evaluating the locally supported tensor-basis functions at one
/// point: flat indices, values and first derivatives per dimension.
struct ActiveEval {
  std::vector<int> index;              // flat basis indices
  std::vector<double> value;           // function values
  std::vector<double> grad;            // size * dim, grad[k*dim+d]
  std::vector<double> second;          // size * dim, d^2/dx_d^2 (when requested)
  int size() const { return static_cast<int>(index.size()); }
};

/// Tensor-product basis of 1-3 one-dimensional factors. The flat index runs
/// with the LAST factor fastest: for factors (t,x,y),
/// m = (m_t * n_x + m_x) * n_y + m_y.
class TensorBasis {
public:
  TensorBasis() = default;
  explicit TensorBasis(std::vector<Basis1D> factors);

  int dim() const { return static_cast<int>(factors_.size()); }
  int count() const { return count_; }
  const Basis1D& factor(int i) const { return factors_.at(i); }
  const std::vector<Basis1D>& factors() const { return factors_; }

  int flat_index(const std::vector<int>& multi) const;
  std::vector<int> multi_index(int flat) const;

  /// Evaluate locally supported functions at a point (value + gradient,
  /// optionally second derivatives per dimension).
  void eval_active(const double* x, ActiveEval& out, bool with_second = false) const;

  Eigen::VectorXd values(const double* x) const;                // dense, count()
  Eigen::MatrixXd gradient(const double* x) const;              // count() x dim

  /// Dense tables on a quadrature rule: values Q x N, gradients per dim.
  Eigen::MatrixXd value_table(const QuadratureRule& quad) const;
  std::vector<Eigen::MatrixXd> gradient_tables(const QuadratureRule& quad) const;

  /// Evaluate sum_m coeffs[m] phi_m at each quadrature point.
  Eigen::VectorXd evaluate(const Eigen::VectorXd& coeffs, const QuadratureRule& quad) const;

private:
  std::vector<Basis1D> factors_;
  int count_ = 0;
  std::vector<int> strides_;
};

TensorBasis make_tensor_basis(std::vector<Basis1D> factors);

}  // namespace ngo
