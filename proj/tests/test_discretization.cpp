#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "ngo/basis.hpp"
#include "ngo/pod.hpp"
#include "ngo/quadrature.hpp"

using namespace ngo;

TEST_CASE("clamped cubic B-spline endpoint and midpoint values") {
  Basis1D b = make_bspline_basis(4, 3);  // Bernstein basis on [0,1]
  VectorXd v0 = b.values(0.0);
  CHECK(v0(0) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(v0(1) == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(v0(2) == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(v0(3) == doctest::Approx(0.0).epsilon(1e-14));
  VectorXd vh = b.values(0.5);
  CHECK(vh(0) == doctest::Approx(1.0 / 8).epsilon(1e-13));
  CHECK(vh(1) == doctest::Approx(3.0 / 8).epsilon(1e-13));
  CHECK(vh(2) == doctest::Approx(3.0 / 8).epsilon(1e-13));
  CHECK(vh(3) == doctest::Approx(1.0 / 8).epsilon(1e-13));
}

TEST_CASE("partition of unity") {
  Basis1D b = make_bspline_basis(10, 3);
  CHECK(b.values(0.37).sum() == doctest::Approx(1.0).epsilon(1e-12));
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 100; ++i) CHECK(b.values(u(rng)).sum() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("basis count precondition") {
  CHECK_THROWS_AS(make_bspline_basis(3, 3), std::invalid_argument);
}

TEST_CASE("derivatives match central differences away from knot lines") {
  for (const Basis1D& b : {make_bspline_basis(10, 3), make_chebyshev_basis(8)}) {
    const double h = 1e-5;
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.05, 0.95);
    for (int t = 0; t < 40; ++t) {
      double x = u(rng);
      if (b.kind() == BasisKind::BSpline) {
        // keep a margin from the knot lines so the FD stencil stays in-cell
        const int spans = b.count() - b.degree();
        const double s = x * spans;
        if (std::abs(s - std::round(s)) < 0.01) continue;
      }
      VectorXd d1 = b.derivatives(x, 1);
      VectorXd fd = (b.values(x + h) - b.values(x - h)) / (2.0 * h);
      for (int m = 0; m < b.count(); ++m) {
        const double scale = std::max(std::abs(d1(m)), 1.0);
        CHECK(std::abs(d1(m) - fd(m)) / scale < 1e-6);
      }
    }
  }
}

TEST_CASE("second derivatives match differences of first derivatives") {
  Basis1D b = make_bspline_basis(9, 3);
  const double h = 1e-5;
  for (double x : {0.21, 0.43, 0.77}) {
    VectorXd d2 = b.derivatives(x, 2);
    VectorXd fd = (b.derivatives(x + h, 1) - b.derivatives(x - h, 1)) / (2.0 * h);
    for (int m = 0; m < b.count(); ++m)
      CHECK(std::abs(d2(m) - fd(m)) < 1e-5 * std::max(std::abs(d2(m)), 1.0));
  }
}

TEST_CASE("tensor basis counts and degenerate single factor") {
  Basis1D c10 = make_bspline_basis(10, 3);
  TensorBasis t2 = make_tensor_basis({c10, c10});
  CHECK(t2.count() == 100);
  TensorBasis t3 = make_tensor_basis({make_bspline_basis(2, 1), c10, c10});
  CHECK(t3.count() == 200);

  Basis1D b5 = make_bspline_basis(5, 2);
  TensorBasis t1 = make_tensor_basis({b5});
  const double x = 0.3;
  VectorXd v1 = t1.values(&x);
  VectorXd v5 = b5.values(x);
  CHECK((v1 - v5).lpNorm<Eigen::Infinity>() < 1e-15);

  CHECK_THROWS_AS(make_tensor_basis({}), std::invalid_argument);
}

TEST_CASE("flat index bijection, last factor fastest") {
  TensorBasis t =
      make_tensor_basis({make_bspline_basis(2, 1), make_bspline_basis(4, 2), make_bspline_basis(5, 2)});
  for (int m = 0; m < t.count(); ++m) {
    auto multi = t.multi_index(m);
    CHECK(t.flat_index(multi) == m);
  }
  CHECK(t.flat_index({0, 0, 1}) == 1);  // y (last factor) is fastest
  CHECK(t.flat_index({0, 1, 0}) == 5);
  CHECK(t.flat_index({1, 0, 0}) == 20);
}

TEST_CASE("tensor gradient is the factor product rule") {
  TensorBasis t = make_tensor_basis({make_bspline_basis(6, 3), make_bspline_basis(6, 3)});
  const double p[2] = {0.31, 0.67};
  MatrixXd g = t.gradient(p);
  Basis1D b = make_bspline_basis(6, 3);
  VectorXd vx = b.values(p[0]), vy = b.values(p[1]);
  VectorXd dx = b.derivatives(p[0], 1), dy = b.derivatives(p[1], 1);
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j) {
      const int m = i * 6 + j;
      CHECK(g(m, 0) == doctest::Approx(dx(i) * vy(j)).epsilon(1e-12));
      CHECK(g(m, 1) == doctest::Approx(vx(i) * dy(j)).epsilon(1e-12));
    }
}

TEST_CASE("gauss quadrature basics") {
  QuadratureRule r1 = make_quadrature(QuadKind::Gauss, {1}, 1);
  CHECK(r1.size() == 1);
  CHECK(r1.points(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(r1.weights(0) == doctest::Approx(1.0).epsilon(1e-15));

  QuadratureRule r2 = make_quadrature(QuadKind::Gauss, {1}, 2);
  double acc = 0.0;
  for (int q = 0; q < r2.size(); ++q) acc += r2.weights(q) * std::pow(r2.points(q, 0), 3);
  CHECK(acc == doctest::Approx(0.25).epsilon(1e-14));

  QuadratureRule ru = make_quadrature(QuadKind::Uniform, {100, 100}, 1);
  CHECK(ru.weights.sum() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_THROWS_AS(make_quadrature(QuadKind::Gauss, {0}, 2), std::invalid_argument);
}

TEST_CASE("boundary rules carry outward normals and the segment measure") {
  SteadyQuads q = make_steady_quads(QuadKind::Gauss, 4, 3);
  CHECK(q.gd_left.measure() == doctest::Approx(1.0).epsilon(1e-13));
  for (int k = 0; k < q.gd_left.size(); ++k) {
    CHECK(q.gd_left.points(k, 0) == 0.0);
    CHECK(q.gd_left.normals(k, 0) == -1.0);
  }
  for (int k = 0; k < q.gn_top.size(); ++k) {
    CHECK(q.gn_top.points(k, 1) == 1.0);
    CHECK(q.gn_top.normals(k, 1) == 1.0);
  }
}

TEST_CASE("composite gauss converges at the expected order") {
  auto integrate = [](int cells, double freq) {
    QuadratureRule r = make_quadrature(QuadKind::Gauss, {cells, cells}, 3);
    double acc = 0.0;
    for (int q = 0; q < r.size(); ++q)
      acc += r.weights(q) * std::sin(freq * r.points(q, 0)) * std::sin(freq * r.points(q, 1));
    return acc;
  };
  // sin(2 pi x) sin(2 pi y): per-cell errors cancel under the grid's
  // reflection symmetry, so every refinement sits at the rounding floor.
  for (int cells : {2, 4, 8}) CHECK(std::abs(integrate(cells, 2 * M_PI)) < 1e-13);

  // A reflection-even integrand exposes the composite order 2q = 6.
  const double exact = std::pow(2.0 / (3.0 * M_PI), 2);  // (int sin(3 pi x))^2
  const double e2 = std::abs(integrate(2, 3 * M_PI) - exact);
  const double e4 = std::abs(integrate(4, 3 * M_PI) - exact);
  const double e8 = std::abs(integrate(8, 3 * M_PI) - exact);
  CHECK(std::log2(e2 / e4) > 5.5);
  CHECK(std::log2(e4 / e8) > 5.5);
}

namespace {

Eigen::MatrixXd random_snapshots(int q, int s, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::MatrixXd m(q, s);
  for (int i = 0; i < q; ++i)
    for (int j = 0; j < s; ++j) m(i, j) = n(rng);
  return m;
}

}  // namespace

TEST_CASE("pod: rank-1 snapshots give one mode proportional to the function") {
  QuadratureRule rule = make_quadrature(QuadKind::Gauss, {4}, 3);
  VectorXd s(rule.size());
  for (int q = 0; q < rule.size(); ++q) s(q) = std::sin(M_PI * rule.points(q, 0));
  Eigen::MatrixXd snaps(rule.size(), 5);
  for (int j = 0; j < 5; ++j) snaps.col(j) = s;
  PodBasis pod = make_pod_basis(snaps, rule, 3);
  CHECK(pod.rank_deficient);
  CHECK(pod.count() == 1);
  // mode is s up to scaling
  VectorXd mode = pod.mode_values.col(0);
  const double ratio = mode(0) / s(0);
  CHECK((mode - ratio * s).lpNorm<Eigen::Infinity>() < 1e-10);
}

TEST_CASE("pod: modes are orthonormal and diagonalize the weighted gram") {
  QuadratureRule rule = make_quadrature(QuadKind::Gauss, {6, 6}, 2);
  Eigen::MatrixXd snaps = random_snapshots(rule.size(), 12, 42);
  PodBasis pod = make_pod_basis(snaps, rule, 8);
  Eigen::MatrixXd gram =
      pod.mode_values.transpose() * rule.weights.asDiagonal() * pod.mode_values;
  CHECK((gram - Eigen::MatrixXd::Identity(8, 8)).lpNorm<Eigen::Infinity>() < 1e-10);
}

TEST_CASE("pod: held-out projection error decreases in count; matches svd oracle") {
  QuadratureRule rule = make_quadrature(QuadKind::Gauss, {6, 6}, 2);
  Eigen::MatrixXd snaps = random_snapshots(rule.size(), 30, 11);
  VectorXd held = random_snapshots(rule.size(), 1, 999).col(0);

  // Independent oracle: thin SVD of the sqrt(w)-weighted snapshot matrix.
  VectorXd sw = rule.weights.array().sqrt();
  Eigen::MatrixXd weighted = sw.asDiagonal() * snaps;
  Eigen::BDCSVD<Eigen::MatrixXd> svd(weighted, Eigen::ComputeThinU);
  VectorXd held_w = sw.asDiagonal() * held;

  PodBasis pod = make_pod_basis(snaps, rule, 20);
  REQUIRE(pod.count() == 20);
  double prev = 1e300;
  for (int k = 1; k <= 20; ++k) {
    // implementation route: project onto the first k modes
    Eigen::MatrixXd modes = pod.mode_values.leftCols(k);
    VectorXd coeffs = modes.transpose() * rule.weights.asDiagonal() * held;
    const double err = std::sqrt(
        ((held - modes * coeffs).array().square() * rule.weights.array()).sum());
    CHECK(err <= prev + 1e-12);
    prev = err;
    // oracle route
    Eigen::MatrixXd uo = svd.matrixU().leftCols(k);
    const double err_o = (held_w - uo * (uo.transpose() * held_w)).norm();
    CHECK(err == doctest::Approx(err_o).epsilon(1e-8));
  }
  // singular values agree with the oracle
  for (int k = 0; k < 20; ++k)
    CHECK(pod.singular_values(k) == doctest::Approx(svd.singularValues()(k)).epsilon(1e-9));
}
