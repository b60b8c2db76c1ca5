#pragma once

#include <memory>
#include <optional>
#include <vector>

#include "ngo/assembly.hpp"
#include "ngo/datasets.hpp"
#include "ngo/mlp.hpp"

namespace ngo {

enum class NgoVariant { Model, DataFree, Data };

std::string to_string(NgoVariant v);
NgoVariant ngo_variant_from_string(const std::string& s);

/// A trained (or under-training) operator: fixed bases plus the system net
/// that maps a functional of the PDE coefficients to the matrix A_hat.
/// The solution is linear in the inhomogeneity data by construction.
struct NgoModel {
  NgoVariant variant = NgoVariant::Model;
  Mlp net;

  // Neumann-series preconditioning of the system net (model/data-free).
  bool neumann = false;
  int neumann_K = 1;
  MatrixXd F0;          // operator at the mean coefficient
  MatrixXd F0_inverse;  // computed once at construction
  double theta_mean = 1.0;

  bool scale_equivariant = false;
  bool nitsche_in_inputs = false;

  // Matrix norm scaling layer bound S (time stepping); 0 disables it.
  double norm_scale_S = 0.0;

  int data_channels = 1;   // data variant: theta (+cx,cy for advection)
  bool data_has_ft = false;  // space-time data variant: trace-integral channel

  /// Test/oracle hook: bypass the net and return the exact inverse of the
  /// input matrix (model-family inputs only).
  bool oracle_exact_inverse = false;
};

/// Per-sample precomputed system-net inputs and rhs vector.
struct NgoInputs {
  MatrixXd F;     // system matrix (model/data-free), Nitsche included if flagged
  VectorXd Fvec;  // coefficient moments (data variant), channels concatenated
  VectorXd d;     // rhs (Nitsche included if flagged)
};

VectorXd integrate_against_basis(const VectorXd& samples, const TensorBasis& basis,
                                 const QuadratureRule& quad);

NgoInputs make_ngo_inputs_steady(const NgoModel& model, const AssembledOperator& op,
                                 const SteadyFields& fields, const SteadyDiscretization& disc);
NgoInputs make_ngo_inputs_space_time(const NgoModel& model, const AssembledOperator& op,
                                     const SpaceTimeFields& fields,
                                     const SpaceTimeDiscretization& disc);

/// Truncated Neumann-series ansatz around F0:
/// A_hat = F0^-1 [ sum_{k<=K} (-dF F0^-1)^k + correction ].
MatrixXd neumann_apply(const MatrixXd& f0_inverse, const MatrixXd& delta_f, int K,
                       const MatrixXd& net_correction);

/// The system-net pipeline: Neumann ansatz and/or scale-equivariance wrapper
/// applied around the raw network.
MatrixXd ngo_system_matrix(const NgoModel& model, const NgoInputs& inputs);

/// Solution coefficients A_hat * d.
VectorXd ngo_solution_coeffs(const NgoModel& model, const NgoInputs& inputs);

/// G_hat(x, x') = phi(x)^T A_hat psi(x') on two evaluation grids.
MatrixXd extract_greens(const TensorBasis& trial, const TensorBasis& test, const MatrixXd& a_hat,
                        const RowMatrixXd& x_grid, const RowMatrixXd& xp_grid);

struct NgoTrainSetup {
  NgoVariant variant = NgoVariant::Model;
  std::vector<int> hidden = {32};
  bool neumann = false;
  int neumann_K = 1;
  bool scale_equivariant = false;
  bool nitsche = false;
  double norm_scale_S = 0.0;  // space-time data variant
  double last_layer_scale = 1e-2;
  TrainConfig train;
};

struct NgoTrainOutput {
  NgoModel model;
  TrainResult history;
};

/// Assemble every sample of a steady-family dataset once (inputs to the nets
/// are precomputed; training never re-assembles).
std::vector<AssembledOperator> assemble_dataset(const Dataset& ds,
                                                const SteadyDiscretization& disc,
                                                const AssemblyOptions& opts = {});

/// The training objective shared by the NGO variants: per-sample inputs are
/// precomputed, the loss is either the relative L2 solution error or the
/// pseudoinverse residual, and the optional layers (Neumann ansatz, scale
/// equivariance, norm scaling) wrap the raw network.
class NgoTrainProblem final : public TrainProblem {
public:
  NgoModel model;
  bool solution_loss = true;

  std::vector<VectorXd> x;      // net inputs (scale-normalized)
  std::vector<double> scale;    // equivariance scales (1 when disabled)
  std::vector<VectorXd> d;
  std::vector<VectorXd> u_ref;
  std::vector<VectorXd> base_u;    // Neumann: F0^-1 T d
  std::vector<MatrixXd> base_mat;  // Neumann matrix loss: F0^-1 T
  std::vector<MatrixXd> f_mat;     // matrix loss: F

  MatrixXd eval_table;
  VectorXd eval_w;

  double norm_S = 0.0;  // norm scaling bound (space-time data variant)
  MatrixXd spatial_mass;
  /// Freeze the scaling factor at its current estimate (the gradient always
  /// treats it as constant; freezing makes finite differences see the same).
  bool freeze_norm_scale = false;

  Mlp& net() override { return model.net; }
  int sample_count() const override { return static_cast<int>(x.size()); }
  double batch_loss_grad(const std::vector<int>& batch, std::vector<MatrixXd>& grads) override;
  double eval_loss(const std::vector<int>& batch) override;

private:
  double run(const std::vector<int>& batch, std::vector<MatrixXd>* grads);
  std::vector<double> frozen_sigma_;
};

std::unique_ptr<NgoTrainProblem> make_steady_train_problem(const Dataset& ds,
                                                           const SteadyDiscretization& disc,
                                                           const NgoTrainSetup& setup);
std::unique_ptr<NgoTrainProblem> make_space_time_train_problem(
    const Dataset& ds, const SpaceTimeDiscretization& disc, const NgoTrainSetup& setup);

NgoTrainOutput train_model_ngo(const Dataset& ds, const SteadyDiscretization& disc,
                               const NgoTrainSetup& setup);
NgoTrainOutput train_data_free_ngo(const Dataset& ds, const SteadyDiscretization& disc,
                                   const NgoTrainSetup& setup);
NgoTrainOutput train_data_ngo(const Dataset& ds, const SteadyDiscretization& disc,
                              const NgoTrainSetup& setup);
/// Space-time single-slab training (data variant with the norm scaling layer
/// active when setup.norm_scale_S > 0; model/data-free variants also work).
NgoTrainOutput train_ngo_space_time(const Dataset& ds, const SpaceTimeDiscretization& disc,
                                    const NgoTrainSetup& setup);

/// Mean relative L2 error of the model over a steady dataset.
double ngo_eval_error(const NgoModel& model, const Dataset& ds,
                      const SteadyDiscretization& disc, std::vector<double>* per_sample = nullptr);

/// Relative L2 error helpers on the eval rule.
double relative_l2_error(const VectorXd& u_hat_samples, const VectorXd& u_ref,
                         const VectorXd& weights);

}  // namespace ngo
