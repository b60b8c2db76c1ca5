#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "ngo/errors.hpp"
#include "ngo/mlp.hpp"

using namespace ngo;

namespace {

/// Mean squared-error regression used to exercise the training machinery.
class RegressionProblem final : public TrainProblem {
public:
  RegressionProblem(Mlp net, MatrixXd x, MatrixXd y)
      : net_(std::move(net)), x_(std::move(x)), y_(std::move(y)) {}

  Mlp& net() override { return net_; }
  int sample_count() const override { return static_cast<int>(x_.cols()); }

  double batch_loss_grad(const std::vector<int>& batch, std::vector<MatrixXd>& grads) override {
    MatrixXd xb(x_.rows(), batch.size()), yb(y_.rows(), batch.size());
    for (size_t c = 0; c < batch.size(); ++c) {
      xb.col(c) = x_.col(batch[c]);
      yb.col(c) = y_.col(batch[c]);
    }
    MlpCache cache;
    MatrixXd out = mlp_forward(net_, xb, &cache);
    MatrixXd r = out - yb;
    mlp_backward(net_, cache, r / batch.size(), grads);
    return 0.5 * r.squaredNorm() / batch.size();
  }

  double eval_loss(const std::vector<int>& batch) override {
    MatrixXd xb(x_.rows(), batch.size()), yb(y_.rows(), batch.size());
    for (size_t c = 0; c < batch.size(); ++c) {
      xb.col(c) = x_.col(batch[c]);
      yb.col(c) = y_.col(batch[c]);
    }
    MatrixXd r = mlp_forward(net_, xb) - yb;
    return 0.5 * r.squaredNorm() / batch.size();
  }

private:
  Mlp net_;
  MatrixXd x_, y_;
};

class ConstantLossProblem final : public TrainProblem {
public:
  explicit ConstantLossProblem(Mlp net) : net_(std::move(net)) {}
  Mlp& net() override { return net_; }
  int sample_count() const override { return 20; }
  double batch_loss_grad(const std::vector<int>&, std::vector<MatrixXd>&) override { return 1.0; }
  double eval_loss(const std::vector<int>&) override { return 1.0; }

private:
  Mlp net_;
};

MatrixXd random_matrix(int r, int c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  MatrixXd m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = n(rng);
  return m;
}

}  // namespace

TEST_CASE("zero input maps to zero; positive homogeneity is exact") {
  Mlp net = make_mlp({6, 12, 12, 4}, 3);
  VectorXd zero = VectorXd::Zero(6);
  CHECK(mlp_forward(net, zero).norm() == 0.0);

  VectorXd x = random_matrix(6, 1, 7);
  VectorXd y1 = mlp_forward(net, x);
  VectorXd y2 = mlp_forward(net, 2.0 * x);
  CHECK((y2 - 2.0 * y1).lpNorm<Eigen::Infinity>() < 1e-12 * y1.lpNorm<Eigen::Infinity>());
  // and for a non-integer scale
  VectorXd y3 = mlp_forward(net, 0.37 * x);
  CHECK((y3 - 0.37 * y1).lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("identity weights reduce the hidden layer to a plain ReLU") {
  Mlp net;
  net.widths = {3, 3, 3};
  net.weights = {MatrixXd::Identity(3, 3), MatrixXd::Identity(3, 3)};
  VectorXd x(3);
  x << -1.0, 0.5, 2.0;
  VectorXd y = mlp_forward(net, x);
  CHECK(y(0) == 0.0);
  CHECK(y(1) == 0.5);
  CHECK(y(2) == 2.0);
}

TEST_CASE("shape mismatch raises invalid_argument") {
  Mlp net = make_mlp({4, 3}, 1);
  CHECK_THROWS_AS(mlp_forward(net, VectorXd::Zero(5)), std::invalid_argument);
}

TEST_CASE("relative L2 loss and matrix pseudoinverse loss reference points") {
  VectorXd w = VectorXd::Constant(8, 0.125);
  std::vector<VectorXd> u{random_matrix(8, 1, 1)}, same{u[0]};
  CHECK(loss_relative_L2(same, u, w) == 0.0);

  MatrixXd f = random_matrix(5, 5, 2);
  f += 5.0 * MatrixXd::Identity(5, 5);  // safely invertible
  CHECK(loss_matrix_pseudoinverse(f.inverse(), f) < 1e-10);
  CHECK(loss_matrix_pseudoinverse(MatrixXd::Zero(5, 5), f) ==
        doctest::Approx(f.norm()).epsilon(1e-12));

  // degenerate samples are skipped
  std::vector<VectorXd> uz{VectorXd::Zero(8)}, uh{random_matrix(8, 1, 3)};
  int skipped = 0;
  CHECK(loss_relative_L2(uh, uz, w, &skipped) == 0.0);
  CHECK(skipped == 1);
}

TEST_CASE("gradient check: linear model is exact, deep model is tight") {
  MatrixXd x = random_matrix(5, 40, 11);
  std::vector<int> batch(20);
  for (int i = 0; i < 20; ++i) batch[i] = i;

  MatrixXd w_true = random_matrix(3, 5, 12);
  MatrixXd y_lin = w_true * x;
  RegressionProblem lin(make_mlp({5, 3}, 4), x, y_lin);
  // the loss is quadratic in the weights, so central differences are exact
  // and a larger step only reduces rounding noise
  GradCheckResult r_lin = grad_check(lin, batch, 60, 1e-3, 99);
  CHECK(r_lin.max_rel_error < 1e-9);

  RegressionProblem deep(make_mlp({5, 16, 16, 3}, 5), x, y_lin);
  GradCheckResult r_deep = grad_check(deep, batch, 80, 1e-5, 99);
  CHECK(r_deep.checked > 40);
  CHECK(r_deep.max_rel_error < 1e-4);
}

TEST_CASE("gradient check flags coordinates at a ReLU kink") {
  // One hidden unit exactly at the kink: x = 0 pre-activation via opposing
  // weights, with asymmetric downstream slopes.
  Mlp net;
  net.widths = {1, 1, 1};
  net.weights = {MatrixXd::Zero(1, 1), MatrixXd::Constant(1, 1, 2.0)};
  MatrixXd x = MatrixXd::Constant(1, 4, 1.0);
  MatrixXd y = MatrixXd::Constant(1, 4, -1.0);
  RegressionProblem prob(net, x, y);
  std::vector<int> batch{0, 1, 2, 3};
  GradCheckResult r = grad_check(prob, batch, 40, 1e-5, 7);
  CHECK(!r.excluded.empty());
}

TEST_CASE("training: smoothed descent, best-validation retention, determinism") {
  MatrixXd x = random_matrix(4, 200, 21);
  MatrixXd w_true = random_matrix(2, 4, 22);
  MatrixXd y = w_true * x;  // all targets reachable
  // quadratic toy regression
  TrainConfig cfg;
  cfg.epochs = 30;
  cfg.batch_size = 25;
  cfg.learning_rate = 3e-3;
  cfg.seed = 5;

  RegressionProblem p1(make_mlp({4, 8, 2}, 6), x, y);
  TrainResult h1 = train(p1, cfg);
  auto smooth = [&](int e) {
    return (h1.train_history[e] + h1.train_history[e + 1] + h1.train_history[e + 2]) / 3.0;
  };
  for (int e = 0; e + 3 < 10; ++e) CHECK(smooth(e + 1) < smooth(e) * 1.02);
  CHECK(h1.train_history.front() > h1.train_history.back());
  CHECK(h1.best_epoch >= 0);
  CHECK(h1.best_val <= h1.val_history.front());

  RegressionProblem p2(make_mlp({4, 8, 2}, 6), x, y);
  TrainResult h2 = train(p2, cfg);
  for (size_t e = 0; e < h1.train_history.size(); ++e) {
    CHECK(h1.train_history[e] == h2.train_history[e]);  // bitwise
    CHECK(h1.val_history[e] == h2.val_history[e]);
  }
}

TEST_CASE("constant loss leaves the weights unchanged") {
  Mlp net = make_mlp({3, 5, 2}, 9);
  std::vector<MatrixXd> before = net.weights;
  ConstantLossProblem p(net);
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.batch_size = 10;
  train(p, cfg);
  for (size_t l = 0; l < before.size(); ++l)
    CHECK((p.net().weights[l] - before[l]).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("non-finite loss aborts with diagnostics") {
  MatrixXd x = random_matrix(3, 40, 31);
  MatrixXd y = MatrixXd::Constant(1, 40, 1e300);
  RegressionProblem p(make_mlp({3, 1}, 2), x, y);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 10;
  cfg.learning_rate = 1e6;
  CHECK_THROWS_AS(train(p, cfg), NumericalError);
}
