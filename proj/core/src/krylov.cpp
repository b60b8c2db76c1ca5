#include "ngo/krylov.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <memory>

#include "ngo/errors.hpp"

namespace ngo {

VectorXd FdSystem::apply(const VectorXd& v) const {
  VectorXd out(size());
  for (int i = 0; i < nx; ++i)
    for (int j = 0; j < ny; ++j) {
      const int k = i * ny + j;
      double acc = center(k) * v(k);
      if (i + 1 < nx) acc += east(k) * v(k + ny);
      if (i > 0) acc += west(k) * v(k - ny);
      if (j + 1 < ny) acc += north(k) * v(k + 1);
      if (j > 0) acc += south(k) * v(k - 1);
      out(k) = acc;
    }
  return out;
}

MatrixXd FdSystem::dense() const {
  MatrixXd m = MatrixXd::Zero(size(), size());
  for (int i = 0; i < nx; ++i)
    for (int j = 0; j < ny; ++j) {
      const int k = i * ny + j;
      m(k, k) = center(k);
      if (i + 1 < nx) m(k, k + ny) = east(k);
      if (i > 0) m(k, k - ny) = west(k);
      if (j + 1 < ny) m(k, k + 1) = north(k);
      if (j > 0) m(k, k - 1) = south(k);
    }
  return m;
}

FdSystem fd_discretize(const ScalarFn2& theta, const ScalarFn2& f, const ScalarFn2& eta_bottom,
                       const ScalarFn2& eta_top, const ScalarFn2& u_dirichlet, double h) {
  const int m = static_cast<int>(std::lround(1.0 / h));
  if (std::abs(m * h - 1.0) > 1e-12)
    throw std::invalid_argument("fd_discretize: 1/h must be an integer");
  FdSystem fd;
  fd.h = h;
  fd.nx = m - 1;  // interior x points (Dirichlet columns eliminated)
  fd.ny = m + 1;  // y points including the Neumann rows
  const int n = fd.size();
  fd.center = VectorXd::Zero(n);
  fd.east = VectorXd::Zero(n);
  fd.west = VectorXd::Zero(n);
  fd.north = VectorXd::Zero(n);
  fd.south = VectorXd::Zero(n);
  fd.b = VectorXd::Zero(n);
  fd.weights = VectorXd::Zero(n);
  fd.points.resize(n, 2);

  const double ih2 = 1.0 / (h * h);
  for (int i = 0; i < fd.nx; ++i) {
    const double x = (i + 1) * h;
    for (int j = 0; j < fd.ny; ++j) {
      const double y = j * h;
      const int k = i * fd.ny + j;
      fd.points.row(k) << x, y;
      const double th = theta(x, y);
      if (!(th > 0.0)) throw std::domain_error("fd_discretize: theta must be positive");
      double rhs = f(x, y);
      double diag = 0.0;

      // x direction: both neighbors exist as unknowns or Dirichlet values.
      const double te = 0.5 * (th + theta(x + h, y));
      const double tw = 0.5 * (th + theta(x - h, y));
      diag += (te + tw) * ih2;
      if (i + 1 < fd.nx)
        fd.east(k) = -te * ih2;
      else
        rhs += te * ih2 * u_dirichlet(1.0, y);
      if (i > 0)
        fd.west(k) = -tw * ih2;
      else
        rhs += tw * ih2 * u_dirichlet(0.0, y);

      // y direction with one-sided flux closure on the Neumann rows.
      if (j + 1 < fd.ny) {
        const double tn = 0.5 * (th + theta(x, y + h));
        diag += tn * ih2;
        fd.north(k) = -tn * ih2;
      } else {
        rhs += eta_top(x, 1.0) / h;
      }
      if (j > 0) {
        const double ts = 0.5 * (th + theta(x, y - h));
        diag += ts * ih2;
        fd.south(k) = -ts * ih2;
      } else {
        rhs += eta_bottom(x, 0.0) / h;
      }

      fd.center(k) = diag;
      fd.b(k) = rhs;
      fd.weights(k) = (j == 0 || j + 1 == fd.ny) ? 0.5 * h * h : h * h;
    }
  }
  return fd;
}

namespace {

KrylovResult gmres_impl(const LinearMap& a, const VectorXd& b, const LinearMap* prec, int restart,
                        double tol, int max_iter, bool flexible) {
  const int n = static_cast<int>(b.size());
  const double bnorm = std::max(b.norm(), 1e-300);
  const int m = restart > 0 ? restart : max_iter;

  KrylovResult result;
  VectorXd x = VectorXd::Zero(n);
  int total = 0;

  while (true) {
    VectorXd r = b - a(x);
    double beta = r.norm();
    if (beta / bnorm <= tol) {
      result.converged = true;
      break;
    }
    if (total >= max_iter) break;

    std::vector<VectorXd> v{r / beta};
    std::vector<VectorXd> z;  // flexible variant stores the preconditioned basis
    MatrixXd hess = MatrixXd::Zero(m + 1, m);
    VectorXd g = VectorXd::Zero(m + 1);
    g(0) = beta;
    std::vector<double> cs(m), sn(m);
    int j = 0;
    bool inner_converged = false;

    for (; j < m && total < max_iter; ++j) {
      ++total;
      VectorXd zj = prec ? (*prec)(v[j]) : v[j];
      if (flexible) z.push_back(zj);
      VectorXd w = a(zj);
      for (int i = 0; i <= j; ++i) {
        hess(i, j) = w.dot(v[i]);
        w -= hess(i, j) * v[i];
      }
      hess(j + 1, j) = w.norm();
      if (hess(j + 1, j) > 1e-300) v.push_back(w / hess(j + 1, j));
      // Givens rotations keep the residual norm available per iteration.
      for (int i = 0; i < j; ++i) {
        const double t = cs[i] * hess(i, j) + sn[i] * hess(i + 1, j);
        hess(i + 1, j) = -sn[i] * hess(i, j) + cs[i] * hess(i + 1, j);
        hess(i, j) = t;
      }
      const double denom = std::hypot(hess(j, j), hess(j + 1, j));
      cs[j] = hess(j, j) / denom;
      sn[j] = hess(j + 1, j) / denom;
      hess(j, j) = denom;
      hess(j + 1, j) = 0.0;
      g(j + 1) = -sn[j] * g(j);
      g(j) = cs[j] * g(j);
      const double res = std::abs(g(j + 1)) / bnorm;
      result.residual_history.push_back(res);
      if (res <= tol) {
        ++j;
        inner_converged = true;
        break;
      }
      if (hess(j, j) == 0.0) break;  // lucky breakdown handled by the solve below
    }

    // Back substitution for the inner least-squares solution.
    VectorXd y = VectorXd::Zero(j);
    for (int i = j - 1; i >= 0; --i) {
      double acc = g(i);
      for (int l = i + 1; l < j; ++l) acc -= hess(i, l) * y(l);
      y(i) = acc / hess(i, i);
    }
    if (flexible) {
      for (int i = 0; i < j; ++i) x += y(i) * z[i];
    } else {
      VectorXd vy = VectorXd::Zero(n);
      for (int i = 0; i < j; ++i) vy += y(i) * v[i];
      x += prec ? (*prec)(vy) : vy;
    }

    if (inner_converged) {
      // Confirm on the true residual; continue when rounding disagrees.
      if ((b - a(x)).norm() / bnorm <= tol * (1.0 + 1e-6)) {
        result.converged = true;
        break;
      }
    }
    if (total >= max_iter) break;
  }

  result.x = x;
  result.iterations = total;
  result.final_relative_residual = (b - a(x)).norm() / bnorm;
  if (result.final_relative_residual <= tol * (1.0 + 1e-6)) result.converged = true;
  return result;
}

}  // namespace

KrylovResult gmres(const LinearMap& a, const VectorXd& b, const LinearMap* prec, int restart,
                   double tol, int max_iter) {
  return gmres_impl(a, b, prec, restart, tol, max_iter, /*flexible=*/false);
}

KrylovResult fgmres(const LinearMap& a, const VectorXd& b, const LinearMap* prec, int restart,
                    double tol, int max_iter) {
  return gmres_impl(a, b, prec, restart, tol, max_iter, /*flexible=*/true);
}

KrylovResult bicgstab(const LinearMap& a, const VectorXd& b, const LinearMap* prec, double tol,
                      int max_iter) {
  const double bnorm = std::max(b.norm(), 1e-300);
  KrylovResult result;
  VectorXd x = VectorXd::Zero(b.size());
  VectorXd r = b;
  VectorXd rhat = r;
  double rho = 1.0, alpha = 1.0, omega = 1.0;
  VectorXd v = VectorXd::Zero(b.size()), p = VectorXd::Zero(b.size());

  for (int it = 0; it < max_iter; ++it) {
    const double rho1 = rhat.dot(r);
    if (std::abs(rho1) < 1e-300) break;
    if (it > 0) {
      const double beta = (rho1 / rho) * (alpha / omega);
      p = r + beta * (p - omega * v);
    } else {
      p = r;
    }
    VectorXd phat = prec ? (*prec)(p) : p;
    v = a(phat);
    alpha = rho1 / rhat.dot(v);
    VectorXd s = r - alpha * v;
    result.iterations = it + 1;
    if (s.norm() / bnorm <= tol) {
      x += alpha * phat;
      result.residual_history.push_back(s.norm() / bnorm);
      result.converged = true;
      break;
    }
    VectorXd shat = prec ? (*prec)(s) : s;
    VectorXd t = a(shat);
    omega = t.dot(s) / std::max(t.squaredNorm(), 1e-300);
    x += alpha * phat + omega * shat;
    r = s - omega * t;
    rho = rho1;
    const double res = r.norm() / bnorm;
    result.residual_history.push_back(res);
    if (res <= tol) {
      result.converged = true;
      break;
    }
  }
  result.x = x;
  result.final_relative_residual = (b - a(x)).norm() / bnorm;
  result.converged = result.final_relative_residual <= tol * (1.0 + 1e-6);
  return result;
}

LinearMap block_jacobi(const FdSystem& fd, int block_rows) {
  // Blocks never cross grid columns; within a column they cover block_rows
  // consecutive y points (default: the whole y line).
  const int ny = fd.ny;
  const int rows = block_rows > 0 ? std::min(block_rows, ny) : ny;
  auto factors = std::make_shared<std::vector<Eigen::PartialPivLU<MatrixXd>>>();
  auto offsets = std::make_shared<std::vector<std::pair<int, int>>>();  // (start, size)
  for (int i = 0; i < fd.nx; ++i) {
    for (int j0 = 0; j0 < ny; j0 += rows) {
      const int len = std::min(rows, ny - j0);
      MatrixXd blk = MatrixXd::Zero(len, len);
      for (int j = 0; j < len; ++j) {
        const int k = i * ny + j0 + j;
        blk(j, j) = fd.center(k);
        if (j + 1 < len) blk(j, j + 1) = fd.north(k);
        if (j > 0) blk(j, j - 1) = fd.south(k);
      }
      factors->emplace_back(blk);
      offsets->emplace_back(i * ny + j0, len);
    }
  }
  return [factors, offsets](const VectorXd& v) {
    VectorXd out(v.size());
    for (size_t b = 0; b < factors->size(); ++b) {
      const auto [start, len] = (*offsets)[b];
      out.segment(start, len) = (*factors)[b].solve(v.segment(start, len));
    }
    return out;
  };
}

NgoPreconditioner make_ngo_preconditioner(const NgoModel& model,
                                          const SteadyDiscretization& disc, const FdSystem& fd,
                                          const SteadyFields& fields) {
  NgoPreconditioner pre;
  const int n = disc.basis.count();
  const int pts = fd.size();
  pre.P.resize(pts, n);
  pre.R.resize(n, pts);
  for (int k = 0; k < pts; ++k) {
    VectorXd phi = disc.basis.values(fd.points.row(k).data());
    pre.P.row(k) = phi.transpose();
    pre.R.col(k) = phi * fd.weights(k);
  }
  AssembledOperator op = assemble_steady(fields, disc.basis, disc.quads);
  NgoInputs in = make_ngo_inputs_steady(model, op, fields, disc);
  pre.A = ngo_system_matrix(model, in);
  return pre;
}

LinearMap multiplicative_precon(LinearMap coarse, LinearMap smoother, const FdSystem& fd) {
  return [coarse = std::move(coarse), smoother = std::move(smoother), &fd](const VectorXd& v) {
    VectorXd xt = coarse(v);
    VectorXd rt = v - fd.apply(xt);
    return (xt + smoother(rt)).eval();
  };
}

}  // namespace ngo
