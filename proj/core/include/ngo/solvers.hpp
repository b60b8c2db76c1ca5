#pragma once

#include <functional>
#include <vector>

#include "ngo/assembly.hpp"
#include "ngo/datasets.hpp"
#include "ngo/pod.hpp"

namespace ngo {

/// Dense Galerkin solve of (F [+ F_s]) u = d [+ d_s].
VectorXd fem_solve(const AssembledOperator& op, bool stabilized = false);

/// POD mode samples on the steady rules, produced by applying the mode
/// combination to per-snapshot sampled blocks.
struct PodSteadyTables {
  MatrixXd val_dom, gx_dom, gy_dom;
  MatrixXd val_gdl, gx_gdl, gy_gdl;
  MatrixXd val_gdr, gx_gdr, gy_gdr;
  MatrixXd val_gnb, val_gnt;
  MatrixXd val_eval;

  int count() const { return static_cast<int>(val_dom.cols()); }
};

/// Snapshot blocks of reference solutions needed to build PodSteadyTables.
struct SteadySnapshotSet {
  MatrixXd u_dom, ux_dom, uy_dom;
  MatrixXd u_gdl, ux_gdl, uy_gdl;
  MatrixXd u_gdr, ux_gdr, uy_gdr;
  MatrixXd u_gnb, u_gnt;
  MatrixXd u_eval;
};

/// Snapshots of manufactured dataset-C style solutions.
SteadySnapshotSet make_snapshots_C(int n, std::uint64_t seed, const SteadyDiscretization& disc,
                                   const GrfDatasetOptions& opts = {});

PodSteadyTables make_pod_steady_tables(const PodBasis& pod, const SteadySnapshotSet& snaps);

/// Galerkin solve of the steady problem in the POD basis; returns mode
/// coefficients (solution samples = tables.val_eval * coeffs).
VectorXd pod_galerkin_solve(const SteadyFields& fields, const PodSteadyTables& tables,
                            const SteadyQuads& quads);

struct PicardConfig {
  int max_iterations = 30;
  double tol = 1e-10;            // relative-update stopping tolerance
  double nitsche_constant = -1;  // forwarded to assembly
};

struct PicardResult {
  std::vector<VectorXd> iterates;      // u^(1), u^(2), ...
  std::vector<double> update_norms;    // relative L2 update per iteration
  std::vector<bool> theta_positive;    // theta[u^(k)] > 0 at all quad points
  bool converged = false;
  int iterations = 0;
};

/// Inner linear solve: fields carry theta = theta0 + alpha u_prev; returns
/// coefficients in the discretization basis.
using LinearPdeSolver = std::function<VectorXd(const SteadyFields&)>;

/// Picard iteration for the nonlinear diffusion problem. `base` carries the
/// solution-independent coefficient theta0 in its theta blocks; iterates
/// start from u = 0.
PicardResult picard_solve(const SteadyFields& base, double alpha,
                          const SteadyDiscretization& disc, const LinearPdeSolver& inner,
                          const PicardConfig& config);

/// Convenience: stabilized-FEM inner solver for the discretization.
LinearPdeSolver make_fem_inner_solver(const SteadyDiscretization& disc,
                                      double nitsche_constant = -1);

}  // namespace ngo
