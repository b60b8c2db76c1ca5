#pragma once

#include <functional>
#include <vector>

#include "ngo/datasets.hpp"
#include "ngo/ngo.hpp"

namespace ngo {

/// Five-point finite-difference system for the steady diffusion problem on a
/// uniform grid with Dirichlet columns eliminated (x in {0,1}) and one-sided
/// flux closure on the Neumann rows (y in {0,1}). Stored as stencil
/// diagonals; the grid index is i * ny + j with x-major ordering.
struct FdSystem {
  double h = 0.0;
  int nx = 0, ny = 0;
  VectorXd center, east, west, north, south;
  VectorXd b;
  VectorXd weights;    // quadrature weights per point (h^2, halved on Neumann rows)
  RowMatrixXd points;  // n x 2 coordinates

  int size() const { return nx * ny; }
  VectorXd apply(const VectorXd& v) const;
  MatrixXd dense() const;  // test helper; use only at desk scale
};

using ScalarFn2 = std::function<double(double, double)>;

/// theta/f over the closed square; eta_* on the Neumann edges;
/// u_dirichlet = g / theta on the Dirichlet edges (0 for homogeneous data).
FdSystem fd_discretize(const ScalarFn2& theta, const ScalarFn2& f, const ScalarFn2& eta_bottom,
                       const ScalarFn2& eta_top, const ScalarFn2& u_dirichlet, double h);

using LinearMap = std::function<VectorXd(const VectorXd&)>;

struct KrylovResult {
  VectorXd x;
  int iterations = 0;
  bool converged = false;
  std::vector<double> residual_history;  // relative residuals per iteration
  double final_relative_residual = 0.0;
};

/// Right-preconditioned GMRES; restart <= 0 runs unrestarted.
KrylovResult gmres(const LinearMap& a, const VectorXd& b, const LinearMap* prec, int restart,
                   double tol = 1e-8, int max_iter = 5000);

/// Flexible GMRES (stores the preconditioned basis; admits varying maps).
KrylovResult fgmres(const LinearMap& a, const VectorXd& b, const LinearMap* prec, int restart,
                    double tol = 1e-8, int max_iter = 5000);

/// Right-preconditioned Bi-CGSTAB.
KrylovResult bicgstab(const LinearMap& a, const VectorXd& b, const LinearMap* prec,
                      double tol = 1e-8, int max_iter = 5000);

/// Inverse of the block diagonal. The default block shape is one block per
/// grid column (all y points of one x line); block_rows > 0 subdivides each
/// column into chunks of that size (1 recovers pointwise Jacobi).
LinearMap block_jacobi(const FdSystem& fd, int block_rows = 0);

/// Two-level coarse preconditioner from a frozen operator model:
/// v -> P A[theta] R v with P the basis evaluation at the grid points and R
/// the quadrature-weighted restriction.
struct NgoPreconditioner {
  MatrixXd P;  // points x N
  MatrixXd R;  // N x points
  MatrixXd A;  // coarse solution operator for this theta

  VectorXd operator()(const VectorXd& v) const { return P * (A * (R * v)); }
  LinearMap map() const {
    return [this](const VectorXd& v) { return (*this)(v); };
  }
};

NgoPreconditioner make_ngo_preconditioner(const NgoModel& model,
                                          const SteadyDiscretization& disc, const FdSystem& fd,
                                          const SteadyFields& fields);

/// Multiplicative combination: apply the coarse map, then the smoother as a
/// correction on the residual. `fd` must outlive the returned map.
LinearMap multiplicative_precon(LinearMap coarse, LinearMap smoother, const FdSystem& fd);

}  // namespace ngo
