#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <vector>

#include "ngo/quadrature.hpp"

namespace ngo {

/// Zero-bias MLP with ReLU activations between affine layers (the last layer
/// is linear). Zero biases make the network positively homogeneous:
/// net(c x) = c net(x) for c > 0.
struct Mlp {
  std::vector<int> widths;            // layer sizes, first = input, last = output
  std::vector<MatrixXd> weights;      // weights[l]: widths[l+1] x widths[l]

  int input_dim() const { return widths.front(); }
  int output_dim() const { return widths.back(); }
  int layer_count() const { return static_cast<int>(weights.size()); }
  int parameter_count() const;
};

/// He-uniform initialization, deterministic in the seed.
Mlp make_mlp(const std::vector<int>& widths, std::uint64_t seed, double last_layer_scale = 1.0);

/// Forward activations kept for the backward pass.
struct MlpCache {
  std::vector<MatrixXd> inputs;  // input of each layer (post-activation of previous)
  std::vector<MatrixXd> pre;     // pre-activation of each layer
};

/// X: input_dim x batch. Returns output_dim x batch.
MatrixXd mlp_forward(const Mlp& net, const MatrixXd& x, MlpCache* cache = nullptr);

/// dY: output_dim x batch gradient. Accumulates weight gradients into
/// `grads` (same shapes as weights) and returns the input gradient.
MatrixXd mlp_backward(const Mlp& net, const MlpCache& cache, const MatrixXd& dy,
                      std::vector<MatrixXd>& grads);

std::vector<MatrixXd> zero_gradients(const Mlp& net);

struct TrainConfig {
  double learning_rate = 1e-3;
  int batch_size = 100;
  int epochs = 100;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t seed = 0;
  double validation_fraction = 0.1;  // split off the end of the training set
};

struct AdamState {
  std::vector<MatrixXd> m, v;
  long step = 0;
};

AdamState make_adam_state(const Mlp& net);
void adam_step(Mlp& net, AdamState& state, const std::vector<MatrixXd>& grads,
               const TrainConfig& cfg);

/// A differentiable training objective over indexed samples. Implementations
/// own the network and any per-sample precomputed inputs.
class TrainProblem {
public:
  virtual ~TrainProblem() = default;
  virtual Mlp& net() = 0;
  virtual int sample_count() const = 0;
  /// Mean loss over the batch; accumulates d(mean loss)/d(weights).
  virtual double batch_loss_grad(const std::vector<int>& batch,
                                 std::vector<MatrixXd>& grads) = 0;
  /// Mean loss without gradients (validation).
  virtual double eval_loss(const std::vector<int>& batch) = 0;
};

struct TrainResult {
  std::vector<double> train_history;
  std::vector<double> val_history;
  int best_epoch = -1;
  double best_val = 0.0;
};

/// Mini-batch Adam over the problem; retains the weights with the best
/// validation loss. Deterministic for a fixed seed.
TrainResult train(TrainProblem& problem, const TrainConfig& cfg);

/// Relative L2 loss between sampled functions in the given quadrature's
/// discrete norm: mean over samples of ||u_hat - u|| / ||u||. Samples with
/// ||u|| = 0 are skipped with a warning counter.
double loss_relative_L2(const std::vector<VectorXd>& u_hat, const std::vector<VectorXd>& u,
                        const VectorXd& weights, int* skipped = nullptr);

/// || F A_hat F - F ||_F, the pseudoinverse residual.
double loss_matrix_pseudoinverse(const MatrixXd& a_hat, const MatrixXd& f);

struct GradCheckResult {
  double max_rel_error = 0.0;
  int checked = 0;
  std::vector<int> excluded;  // flat coordinate ids near ReLU kinks
};

/// Central-difference verification of batch_loss_grad on >= `coords` random
/// weight coordinates. Coordinates whose perturbation flips a ReLU
/// activation sign are reported as excluded rather than failed.
GradCheckResult grad_check(TrainProblem& problem, const std::vector<int>& batch, int coords = 50,
                           double h = 1e-5, std::uint64_t seed = 1234);

}  // namespace ngo
