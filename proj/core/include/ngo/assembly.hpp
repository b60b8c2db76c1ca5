#pragma once

#include <Eigen/Core>
#include <optional>
#include <vector>

#include "ngo/basis.hpp"
#include "ngo/quadrature.hpp"

namespace ngo {

/// Field samples aligned with a SteadyQuads layout. Only the blocks a given
/// assembler consumes need to be filled; advection and SUPG blocks stay empty
/// for pure diffusion.
struct SteadyFields {
  VectorXd theta;  // domain rule
  VectorXd f;      // domain rule
  VectorXd theta_gd_left, theta_gd_right;
  VectorXd eta_bottom, eta_top;
  VectorXd g_left, g_right;

  // Advection-diffusion extras.
  VectorXd cx, cy;                    // domain rule
  VectorXd cy_gn_bottom, cy_gn_top;   // c.n on the y-faces is -/+ cy
  VectorXd cx_gd_left, cx_gd_right;   // c.n on the x-faces is -/+ cx
  VectorXd dtheta_x, dtheta_y;        // domain rule, used by the SUPG residual

  bool has_advection() const { return cx.size() > 0; }
};

/// Field samples for one space-time slab, on SpaceTimeQuads rules.
struct SpaceTimeFields {
  VectorXd theta;  // domain (s,x,y) rule
  VectorXd f;
  VectorXd theta_gd_left, theta_gd_right;
  VectorXd eta_bottom, eta_top;
  VectorXd g_left, g_right;
  VectorXd u0;  // initial-face samples; consumed only for slab 0
};

/// Assembled weak-form data for one problem instance. Nitsche terms are kept
/// separate and only added when a stabilized solve is requested. The
/// space-time blocks are empty for steady problems.
struct AssembledOperator {
  MatrixXd F;
  VectorXd d;
  MatrixXd nitsche_F;
  VectorXd nitsche_d;
  double stabilization_constant = 0.0;

  // Space-time extras.
  MatrixXd M_lr;            // N x N slab-coupling mass matrix
  MatrixXd M_rr;            // N x N end-of-slab mass matrix
  MatrixXd spatial_mass;    // S x S right-trace mass block (positive definite)
  VectorXd trace_integral;  // \int phi_m(right end) dx, the mass functional
  VectorXd cons_c;          // mass-law vector c^(i)
  double cons_C_sources = 0.0;  // source part of C^(i) (previous mass added later)
  VectorXd cons_h;          // energy production vector h_x^(i)

  int size() const { return static_cast<int>(F.rows()); }
};

struct AssemblyOptions {
  /// Nitsche constant C_s; negative selects the default 4 (p+1)^2 * cells.
  double nitsche_constant = -1.0;
  /// Adjoint-term variant of the advection weak form. -1 reproduces the
  /// non-symmetric form; +1 degenerates to the steady operator when c = 0.
  double gamma = -1.0;
  /// Dirichlet penalty constant C (applied as C/h); negative for default.
  double penalty_constant = -1.0;
};

/// Steady diffusion on the unit square: F from the twice-integrated-by-parts
/// weak form (volume term reduced to grad-grad plus the two Dirichlet
/// boundary terms), d from forcing, Neumann and Dirichlet data. Nitsche
/// terms are assembled but stored separately.
AssembledOperator assemble_steady(const SteadyFields& fields, const TensorBasis& basis,
                                  const SteadyQuads& quads, const AssemblyOptions& opts = {},
                                  const TensorBasis* test_basis = nullptr);

/// Advection-diffusion with weakly imposed Dirichlet data and inflow-split
/// boundary terms. With supg=false this is the input form used by the
/// operators (no streamline stabilization, no Dirichlet penalty); with
/// supg=true the streamline and penalty terms are added for the stabilized
/// baseline.
AssembledOperator assemble_advection_diffusion(const SteadyFields& fields,
                                               const TensorBasis& basis,
                                               const SteadyQuads& quads, bool supg,
                                               const AssemblyOptions& opts = {});

/// One space-time slab of the time-dependent diffusion problem. The rhs d
/// contains the initial-trace term: from u0 samples for slab 0, otherwise
/// from the previous slab's right-trace coefficients through M_lr.
AssembledOperator assemble_space_time(const SpaceTimeFields& fields, const TensorBasis& basis,
                                      const SpaceTimeQuads& quads, int slab_index, double dt,
                                      const VectorXd* prev_trace = nullptr,
                                      const AssemblyOptions& opts = {});

/// Steady diffusion on [0,1] with Dirichlet data at both endpoints; used for
/// one-dimensional kernel studies.
AssembledOperator assemble_steady_1d(const VectorXd& theta, const VectorXd& f,
                                     double g_left, double g_right, const Basis1D& basis,
                                     const QuadratureRule& quad);

/// Precomputed per-dimension factor tensors for assembling the space-time
/// operator from basis coefficients of theta. `base` carries the
/// theta-independent part (time derivative and end-of-slab mass).
class SpaceTimeKronecker {
public:
  SpaceTimeKronecker(const TensorBasis& basis, double dt, int points_per_cell_1d);

  /// Full operator for theta ~ sum_j theta_hat_j psi_j.
  MatrixXd assemble(const VectorXd& theta_hat) const;
  /// Theta-dependent contribution only (volume diffusion + Dirichlet terms).
  MatrixXd diffusion_part(const VectorXd& theta_hat) const;

  const MatrixXd& base() const { return base_; }

private:
  int nt_ = 0, nx_ = 0, ny_ = 0;
  double dt_ = 0.0;
  MatrixXd base_;
  // Per-dimension 3-tensors stored as vectors of (i,k) matrices indexed by
  // the coefficient index j.
  std::vector<MatrixXd> t3_, mx3_, my3_, dx3_, dy3_;
  std::vector<MatrixXd> bx3_left_, bx3_right_;  // Dirichlet x-face factors
};

struct ProjectionResult {
  VectorXd coeffs;
  double rel_error = 0.0;
};

/// Discrete L2 projection of samples onto the basis (weighted least squares).
ProjectionResult project_L2(const VectorXd& u_samples, const TensorBasis& basis,
                            const QuadratureRule& quad);

/// Projection onto an explicit value table (columns = basis functions),
/// orthonormality not assumed.
ProjectionResult project_L2_table(const VectorXd& u_samples, const MatrixXd& value_table,
                                  const VectorXd& weights);

double default_nitsche_constant(const TensorBasis& basis);

}  // namespace ngo
