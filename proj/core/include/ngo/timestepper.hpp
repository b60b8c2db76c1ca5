#pragma once

#include <Eigen/Cholesky>
#include <functional>
#include <vector>

#include "ngo/assembly.hpp"
#include "ngo/datasets.hpp"

namespace ngo {

/// Warm-started state for the generalized power iteration (the warm start is
/// updated after every call; frozen at deployment simply by reuse).
struct PowerIterWorkspace {
  VectorXd v0;
  Eigen::LLT<MatrixXd> mass_chol;
  bool ready = false;
  int last_iterations = 0;
  bool used_dense_fallback = false;
};

/// sup ||B v||_M / ||v||_M estimated by power iteration on M^-1 B^T M B to a
/// relative tolerance on the norm; falls back to a dense generalized
/// eigensolve (and records it) when 500 iterations do not converge.
double generalized_operator_norm(const MatrixXd& b, const MatrixXd& mass, PowerIterWorkspace& ws,
                                 double tol = 1e-3, int max_iter = 500);

struct NormScalingResult {
  MatrixXd a_scaled;
  double norm = 0.0;   // estimated ||A M_lr|| in the M_rr norm
  bool scaled = false;
};

/// Matrix norm scaling layer: rescales A so that the slab-to-slab update
/// satisfies ||A' M_lr||_{M_rr} <= S. `spatial_mass` is the right-trace mass
/// block; the reduced update matrix is A[trace rows, left block] * M.
NormScalingResult norm_scaling(const MatrixXd& a_hat, const MatrixXd& spatial_mass, double s_bound,
                               PowerIterWorkspace& ws);

struct ConservationTerms {
  VectorXd c;     // mass-law vector c^(i)
  double C = 0;   // mass-law right-hand side C^(i)
  VectorXd h;     // energy production vector h_x^(i)
};

struct ConservationOutcome {
  VectorXd corrected;
  double a = 1.0, b = 0.0;
  bool energy_stage = false;   // the quadratic (a,b) stage ran
  bool no_real_root = false;   // energy stage failed; mass-only kept
  double energy_residual = 0;  // energy inequality violation after correction
};

/// Mass/energy correction u' = a u + b c: mass equality enforced exactly;
/// if the energy inequality is violated, (a, b) solve the quadratic system,
/// taking the root with the largest a in (0, 1].
ConservationOutcome conservation_correct(const VectorXd& u_full, const ConservationTerms& terms,
                                         const MatrixXd& spatial_mass, double prev_energy);

/// u_full = A (M_lr u_prev + d_x); the assembled rhs already carries the
/// previous-trace term.
VectorXd slab_step(const MatrixXd& a_hat, const AssembledOperator& op, bool stabilized_rhs);

/// Produces the (unscaled) step matrix for one slab.
using SlabMatrixFn =
    std::function<MatrixXd(const AssembledOperator& op, const SpaceTimeFields& fields, int slab)>;

struct RolloutOptions {
  int n_steps = 1;
  bool norm_scaling = false;
  double s_bound = 0.8;
  bool conservation = false;
  bool stabilized_rhs = false;  // add the Nitsche data term to the rhs
  bool stabilized_operators = false;  // assemble ops for the step with Nitsche rows in d
  int eval_ppc = 4;
};

struct StepTelemetry {
  int step = 0;
  double rel_error = 0.0;   // right-trace relative L2 error vs the manufactured truth
  double mass_hat = 0.0, mass_true = 0.0;
  double energy_hat = 0.0, energy_true = 0.0;
  double norm_estimate = 0.0;
  bool scaled = false;
  double a = 1.0, b = 0.0;
  bool no_real_root = false;
};

struct RolloutResult {
  MatrixXd traces;  // spatial_count x n_steps
  std::vector<StepTelemetry> telemetry;
  bool aborted = false;
  int abort_step = -1;
  VectorXd initial_trace;
};

/// Autoregressive rollout over n_steps slabs of a manufactured space-time
/// problem; u^(0) is the projection of the initial data onto the spatial
/// trace basis. Applies norm scaling and conservation correction in that
/// order when enabled.
RolloutResult rollout(const SpaceTimeManufactured& problem, const SpaceTimeDiscretization& disc,
                      const SlabMatrixFn& a_hat_fn, const RolloutOptions& opts);

}  // namespace ngo
