#include "ngo/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

#include "ngo/errors.hpp"

namespace ngo {

int Mlp::parameter_count() const {
  int n = 0;
  for (const auto& w : weights) n += static_cast<int>(w.size());
  return n;
}

Mlp make_mlp(const std::vector<int>& widths, std::uint64_t seed, double last_layer_scale) {
  if (widths.size() < 2) throw std::invalid_argument("make_mlp: need at least two widths");
  for (int w : widths)
    if (w < 1) throw std::invalid_argument("make_mlp: widths must be positive");
  Mlp net;
  net.widths = widths;
  std::mt19937_64 rng(seed);
  for (size_t l = 0; l + 1 < widths.size(); ++l) {
    const int fan_in = widths[l];
    double bound = std::sqrt(6.0 / fan_in);
    if (l + 2 == widths.size()) bound *= last_layer_scale;
    std::uniform_real_distribution<double> dist(-bound, bound);
    MatrixXd w(widths[l + 1], widths[l]);
    for (int i = 0; i < w.rows(); ++i)
      for (int j = 0; j < w.cols(); ++j) w(i, j) = dist(rng);
    net.weights.push_back(std::move(w));
  }
  return net;
}

MatrixXd mlp_forward(const Mlp& net, const MatrixXd& x, MlpCache* cache) {
  if (x.rows() != net.input_dim())
    throw std::invalid_argument("mlp_forward: input dimension mismatch");
  if (cache) {
    cache->inputs.clear();
    cache->pre.clear();
  }
  MatrixXd h = x;
  const int L = net.layer_count();
  for (int l = 0; l < L; ++l) {
    if (cache) cache->inputs.push_back(h);
    MatrixXd z = net.weights[l] * h;
    if (cache) cache->pre.push_back(z);
    h = (l + 1 < L) ? z.cwiseMax(0.0) : z;
  }
  return h;
}

MatrixXd mlp_backward(const Mlp& net, const MlpCache& cache, const MatrixXd& dy,
                      std::vector<MatrixXd>& grads) {
  const int L = net.layer_count();
  if (static_cast<int>(cache.pre.size()) != L)
    throw std::invalid_argument("mlp_backward: stale cache");
  MatrixXd delta = dy;
  for (int l = L - 1; l >= 0; --l) {
    if (l + 1 < L)  // ReLU derivative of this layer's output was applied downstream
      delta = delta.cwiseProduct((cache.pre[l].array() > 0.0).cast<double>().matrix());
    grads[l].noalias() += delta * cache.inputs[l].transpose();
    if (l > 0) delta = net.weights[l].transpose() * delta;
  }
  return net.weights[0].transpose() * delta;
}

std::vector<MatrixXd> zero_gradients(const Mlp& net) {
  std::vector<MatrixXd> g;
  g.reserve(net.weights.size());
  for (const auto& w : net.weights) g.push_back(MatrixXd::Zero(w.rows(), w.cols()));
  return g;
}

AdamState make_adam_state(const Mlp& net) {
  AdamState s;
  s.m = zero_gradients(net);
  s.v = zero_gradients(net);
  return s;
}

void adam_step(Mlp& net, AdamState& state, const std::vector<MatrixXd>& grads,
               const TrainConfig& cfg) {
  ++state.step;
  const double b1 = cfg.beta1, b2 = cfg.beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (size_t l = 0; l < net.weights.size(); ++l) {
    state.m[l] = b1 * state.m[l] + (1.0 - b1) * grads[l];
    state.v[l] = b2 * state.v[l] + (1.0 - b2) * grads[l].cwiseProduct(grads[l]);
    net.weights[l].array() -= cfg.learning_rate * (state.m[l].array() / bc1) /
                              ((state.v[l].array() / bc2).sqrt() + cfg.eps);
  }
}

TrainResult train(TrainProblem& problem, const TrainConfig& cfg) {
  const int n = problem.sample_count();
  if (n < 2) throw std::invalid_argument("train: need at least two samples");
  const int n_val = std::max(1, static_cast<int>(std::lround(n * cfg.validation_fraction)));
  const int n_train = n - n_val;
  if (n_train < 1) throw std::invalid_argument("train: validation split leaves no training data");

  std::vector<int> train_idx(n_train), val_idx(n_val);
  std::iota(train_idx.begin(), train_idx.end(), 0);
  std::iota(val_idx.begin(), val_idx.end(), n_train);

  Mlp& net = problem.net();
  AdamState adam = make_adam_state(net);
  std::mt19937_64 rng(cfg.seed);

  TrainResult result;
  Mlp best = net;
  double best_val = std::numeric_limits<double>::infinity();
  int best_epoch = -1;

  std::vector<int> order = train_idx;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    int batches = 0;
    for (int start = 0; start < n_train; start += cfg.batch_size) {
      const int len = std::min(cfg.batch_size, n_train - start);
      std::vector<int> batch(order.begin() + start, order.begin() + start + len);
      std::vector<MatrixXd> grads = zero_gradients(net);
      const double loss = problem.batch_loss_grad(batch, grads);
      if (!std::isfinite(loss)) {
        double pnorm = 0.0;
        for (const auto& w : net.weights) pnorm += w.squaredNorm();
        throw NumericalError("train: non-finite loss at epoch " + std::to_string(epoch) +
                             ", batch " + std::to_string(batches) +
                             ", parameter norm " + std::to_string(std::sqrt(pnorm)));
      }
      adam_step(net, adam, grads, cfg);
      epoch_loss += loss;
      ++batches;
    }
    result.train_history.push_back(epoch_loss / std::max(batches, 1));
    const double val = problem.eval_loss(val_idx);
    result.val_history.push_back(val);
    if (val < best_val) {
      best_val = val;
      best = net;
      best_epoch = epoch;
    }
  }
  net = best;  // the model that performs best on the validation data
  result.best_epoch = best_epoch;
  result.best_val = best_val;
  return result;
}

double loss_relative_L2(const std::vector<VectorXd>& u_hat, const std::vector<VectorXd>& u,
                        const VectorXd& weights, int* skipped) {
  if (u_hat.size() != u.size()) throw std::invalid_argument("loss_relative_L2: batch mismatch");
  double acc = 0.0;
  int used = 0, skip = 0;
  for (size_t i = 0; i < u.size(); ++i) {
    const double denom = std::sqrt((u[i].array().square() * weights.array()).sum());
    if (denom < 1e-300) {
      ++skip;
      continue;
    }
    const double num =
        std::sqrt(((u_hat[i] - u[i]).array().square() * weights.array()).sum());
    acc += num / denom;
    ++used;
  }
  if (skip > 0 && skipped == nullptr)
    std::cerr << "[loss_relative_L2] skipped " << skip << " degenerate samples (||u|| = 0)\n";
  if (skipped) *skipped = skip;
  return used > 0 ? acc / used : 0.0;
}

double loss_matrix_pseudoinverse(const MatrixXd& a_hat, const MatrixXd& f) {
  return (f * a_hat * f - f).norm();
}

GradCheckResult grad_check(TrainProblem& problem, const std::vector<int>& batch, int coords,
                           double h, std::uint64_t seed) {
  Mlp& net = problem.net();
  std::vector<MatrixXd> grads = zero_gradients(net);
  problem.batch_loss_grad(batch, grads);

  // Flat coordinate space over all layers.
  std::vector<std::pair<int, int>> layout;  // (layer, offset)
  int total = 0;
  double grad_sq = 0.0;
  for (int l = 0; l < net.layer_count(); ++l) {
    layout.emplace_back(l, total);
    total += static_cast<int>(net.weights[l].size());
    grad_sq += grads[l].squaredNorm();
  }
  // Relative errors are meaningless on coordinates whose gradient is far
  // below the typical magnitude; floor the denominator at a fraction of the
  // gradient RMS.
  const double rms = std::sqrt(grad_sq / std::max(total, 1));
  const double floor = std::max(1e-10, 1e-3 * rms);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pick(0, total - 1);

  GradCheckResult result;
  for (int c = 0; c < coords; ++c) {
    const int flat = pick(rng);
    int layer = 0;
    while (layer + 1 < net.layer_count() && flat >= layout[layer + 1].second) ++layer;
    const int off = flat - layout[layer].second;
    double* w = net.weights[layer].data() + off;

    const double saved = *w;
    const double l0 = problem.eval_loss(batch);
    *w = saved + h;
    const double lp = problem.eval_loss(batch);
    *w = saved - h;
    const double lm = problem.eval_loss(batch);
    *w = saved;

    // A ReLU kink inside the step shows up as disagreeing one-sided slopes.
    const double fd_r = (lp - l0) / h, fd_l = (l0 - lm) / h;
    if (std::abs(fd_r - fd_l) > 0.05 * std::max(std::abs(fd_r), std::abs(fd_l)) + 1e-9) {
      result.excluded.push_back(flat);
      continue;
    }
    const double fd = (lp - lm) / (2.0 * h);
    const double bp = grads[layer].data()[off];
    const double rel = std::abs(fd - bp) / std::max({std::abs(fd), std::abs(bp), floor});
    result.max_rel_error = std::max(result.max_rel_error, rel);
    ++result.checked;
  }
  return result;
}

}  // namespace ngo
