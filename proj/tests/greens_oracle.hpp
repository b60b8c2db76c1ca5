#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "ngo/basis.hpp"
#include "ngo/quadrature.hpp"

namespace ngo::testing {

/// Exact machinery for the 1D kernel G(x,x') = min(x,x')(1-max(x,x')) of
/// -u'' with homogeneous Dirichlet ends: cross-moment matrix A_mn =
/// int int phi_m(x) G(x,x') phi_n(x') and the L2 norms needed to measure
/// kernel errors. All integrands are piecewise polynomials, integrated
/// cell-by-cell with Gauss rules of sufficient order, so the oracle is exact
/// to rounding.
struct Greens1DOracle {
  Eigen::MatrixXd mass;         // int phi_m phi_n
  Eigen::MatrixXd cross;        // int int phi_m G phi_n
  double g_norm2 = 1.0 / 90.0;  // int int G^2

  /// || phi^T A phi(x') - G ||_{L2}^2 for a kernel coefficient matrix A.
  double kernel_error2(const Eigen::MatrixXd& a) const {
    const double dot = (a.array() * cross.array()).sum();
    const double nrm = (a.transpose() * mass * a * mass).trace();
    return g_norm2 - 2.0 * dot + nrm;
  }

  /// L2-optimal bi-projection coefficients of G.
  Eigen::MatrixXd projection_coeffs() const {
    Eigen::MatrixXd minv = mass.inverse();
    return minv * cross * minv;
  }
};

inline Greens1DOracle make_greens_oracle(const Basis1D& basis) {
  const int n = basis.count();
  const int p = basis.degree();
  const int sup = p + 1;
  const int cells = n - p;
  Greens1DOracle o;
  o.mass = Eigen::MatrixXd::Zero(n, n);
  o.cross = Eigen::MatrixXd::Zero(n, n);

  std::vector<double> gx, gw;
  gauss_legendre_01(8, gx, gw);
  auto bounds = [&](int c) {
    return std::pair<double, double>{double(c) / cells, double(c + 1) / cells};
  };

  double local[3 * 16];

  for (int c = 0; c < cells; ++c) {
    auto [a, b] = bounds(c);
    for (size_t q = 0; q < gx.size(); ++q) {
      const double x = a + (b - a) * gx[q];
      const double w = (b - a) * gw[q];
      const int first = basis.eval_local(x, 0, local);
      for (int i = 0; i < sup; ++i)
        for (int j = 0; j < sup; ++j)
          o.mass(first + i, first + j) += w * local[i] * local[j];
    }
  }

  // w_n(x) = int G(x,x') phi_n(x') dx', split at x; each piece is a
  // polynomial on every knot cell.
  std::vector<double> wvals(static_cast<size_t>(n));
  auto inner = [&](double x) {
    std::fill(wvals.begin(), wvals.end(), 0.0);
    double lbuf[16];
    for (int c = 0; c < cells; ++c) {
      auto [a, b] = bounds(c);
      const double hi1 = std::min(b, x);
      if (hi1 > a)
        for (size_t q = 0; q < gx.size(); ++q) {
          const double xp = a + (hi1 - a) * gx[q];
          const double w = (hi1 - a) * gw[q];
          const int first = basis.eval_local(xp, 0, lbuf);
          const double ker = w * xp * (1.0 - x);
          for (int j = 0; j < sup; ++j) wvals[first + j] += ker * lbuf[j];
        }
      const double lo2 = std::max(a, x);
      if (b > lo2)
        for (size_t q = 0; q < gx.size(); ++q) {
          const double xp = lo2 + (b - lo2) * gx[q];
          const double w = (b - lo2) * gw[q];
          const int first = basis.eval_local(xp, 0, lbuf);
          const double ker = w * x * (1.0 - xp);
          for (int j = 0; j < sup; ++j) wvals[first + j] += ker * lbuf[j];
        }
    }
  };

  for (int c = 0; c < cells; ++c) {
    auto [a, b] = bounds(c);
    for (size_t q = 0; q < gx.size(); ++q) {
      const double x = a + (b - a) * gx[q];
      const double w = (b - a) * gw[q];
      const int first = basis.eval_local(x, 0, local);
      inner(x);
      for (int i = 0; i < sup; ++i) {
        const double wi = w * local[i];
        for (int j = 0; j < n; ++j) o.cross(first + i, j) += wi * wvals[j];
      }
    }
  }
  return o;
}

}  // namespace ngo::testing
