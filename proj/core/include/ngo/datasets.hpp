#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "ngo/assembly.hpp"
#include "ngo/grf.hpp"

namespace ngo {

enum class PdeFamily { SteadyDiffusion, AdvectionDiffusion, SpaceTimeDiffusion, NonlinearDiffusion };
enum class Provenance { Manufactured, FemSolved };

/// Basis + quadrature bundle shared by generators, solvers and operators.
/// Cells align with the knot spans of the basis.
struct SteadyDiscretization {
  TensorBasis basis;
  SteadyQuads quads;
  QuadratureRule eval;   // domain rule used for losses and errors
  MatrixXd eval_table;   // basis values on the eval rule

  int count() const { return basis.count(); }
};

SteadyDiscretization make_steady_discretization(int n_per_dim, int degree = 3,
                                                int quad_ppc = 6, int eval_ppc = 4);

struct SpaceTimeDiscretization {
  TensorBasis basis;  // (t,x,y); time factor nodal linear on the slab
  SpaceTimeQuads quads;
  QuadratureRule eval;  // (s,x,y) rule for single-slab errors
  MatrixXd eval_table;
  double dt = 0.0;

  int count() const { return basis.count(); }
  int spatial_count() const { return basis.factor(1).count() * basis.factor(2).count(); }
};

SpaceTimeDiscretization make_space_time_discretization(int n_xy, double dt, int nt = 2,
                                                       int degree_xy = 3, int quad_ppc = 6,
                                                       int eval_ppc = 4);

/// One problem instance with all fields sampled on the discretization rules.
struct ProblemSample {
  PdeFamily family = PdeFamily::SteadyDiffusion;
  Provenance provenance = Provenance::Manufactured;
  SteadyFields fields;        // steady / advection / nonlinear families
  SpaceTimeFields st_fields;  // space-time family
  VectorXd u_ref;             // on the eval rule
  double alpha = 0.0;         // nonlinear coupling theta = theta0 + alpha u
};

struct Dataset {
  PdeFamily family = PdeFamily::SteadyDiffusion;
  std::vector<ProblemSample> samples;
  double alpha = 0.0;
  double dt = 0.0;
  std::uint64_t seed = 0;
  std::string name;

  int size() const { return static_cast<int>(samples.size()); }
};

/// Manufactured steady instance: theta and u drawn as GRFs, the data fields
/// computed by applying the PDE and boundary operators analytically.
struct SteadyManufactured {
  GrfField theta;  // affine transform included
  GrfField u;

  double theta_at(double x, double y) const;
  double u_at(double x, double y) const;
  double f_at(double x, double y) const;                    // -div(theta grad u)
  double eta_at(double x, double y, double ny) const;       // theta du/dn on y-faces
  double g_at(double x, double y) const;                    // theta u on x-faces

  ProblemSample realize(const SteadyDiscretization& disc) const;
};

/// Manufactured nonlinear instance: theta0 and u drawn, theta[u] = theta0 + alpha u.
struct NonlinearManufactured {
  GrfField theta0;
  GrfField u;
  double alpha = 0.1;

  double theta_total_at(double x, double y) const;
  ProblemSample realize(const SteadyDiscretization& disc) const;
};

/// Manufactured space-time instance on global time [0, n_slabs * dt].
struct SpaceTimeManufactured {
  GrfField theta;  // (t,x,y)
  GrfField u;

  double u_at(double t, double x, double y) const;
  /// Fields for slab i sampled on the slab-local rules (s -> (i+s) dt).
  SpaceTimeFields slab_fields(const SpaceTimeDiscretization& disc, int slab) const;
  VectorXd slab_u_ref(const SpaceTimeDiscretization& disc, int slab) const;
  /// True mass and energy at time t computed on the given spatial rule.
  void mass_energy(double t, const QuadratureRule& xy_rule, double* mass, double* energy) const;

  ProblemSample realize(const SpaceTimeDiscretization& disc) const;  // slab 0
};

struct GrfDatasetOptions {
  int features = 2048;
  // Length-scale range for both theta and u; the paper's in-distribution
  // range is [0.5, 1], out-of-distribution sweeps narrow it.
  double lambda_lo = 0.5, lambda_hi = 1.0;
  double tau_lo = 0.5, tau_hi = 1.0;  // space-time only
};

SteadyManufactured draw_manufactured_C(std::uint64_t sample_seed, const GrfDatasetOptions& opts);
NonlinearManufactured draw_manufactured_F(std::uint64_t sample_seed, const GrfDatasetOptions& opts);
SpaceTimeManufactured draw_manufactured_D(std::uint64_t sample_seed, const GrfDatasetOptions& opts);

/// Manufactured steady diffusion (GRF coefficients and solutions).
Dataset make_dataset_C(int n, std::uint64_t seed, const SteadyDiscretization& disc,
                       const GrfDatasetOptions& opts = {});

/// Manufactured steady diffusion with homogeneous Dirichlet data and the
/// forcing normalized to ||f|| = 1/2.
Dataset make_dataset_B(int n, std::uint64_t seed, const SteadyDiscretization& disc,
                       int features = 2048);

/// Solver-generated steady diffusion (fine-basis Galerkin reference).
struct DatasetAOptions {
  int features = 2048;
  int fine_n = 23;  // 20 cells of cubic B-splines
  int fine_ppc = 5;
};
Dataset make_dataset_A_surrogate(int n, std::uint64_t seed, const SteadyDiscretization& disc,
                                 const DatasetAOptions& opts = {});

/// Manufactured single-slab space-time diffusion.
Dataset make_dataset_D(int n, std::uint64_t seed, const SpaceTimeDiscretization& disc,
                       const GrfDatasetOptions& opts = {});

/// Solver-generated advection-diffusion (stabilized fine-basis reference).
struct DatasetEOptions {
  int features = 2048;
  int fine_n = 53;  // 50 cells of cubic B-splines
  int fine_ppc = 5;
};
Dataset make_dataset_E(int n, std::uint64_t seed, const SteadyDiscretization& disc,
                       const DatasetEOptions& opts = {});

/// Manufactured nonlinear diffusion; alpha = 0.1.
Dataset make_dataset_F(int n, std::uint64_t seed, const SteadyDiscretization& disc,
                       const GrfDatasetOptions& opts = {});

/// Mixes a base seed with a sample index / stream tag (datasets are pure
/// functions of (n, seed); each sample owns an independent generator).
std::uint64_t sample_seed(std::uint64_t base, std::uint64_t index, std::uint64_t stream = 0);

}  // namespace ngo
