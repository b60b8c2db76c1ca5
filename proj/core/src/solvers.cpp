#include "ngo/solvers.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <iostream>

#include "ngo/errors.hpp"

namespace ngo {

VectorXd fem_solve(const AssembledOperator& op, bool stabilized) {
  MatrixXd a = op.F;
  VectorXd rhs = op.d;
  if (stabilized) {
    a += op.nitsche_F;
    rhs += op.nitsche_d;
  }
  Eigen::PartialPivLU<MatrixXd> lu(a);
  VectorXd u = lu.solve(rhs);
  const double resid = (a * u - rhs).norm();
  const double scale = std::max(rhs.norm(), 1e-300);
  if (!u.allFinite() || resid > 1e-6 * scale + 1e-12) {
    const double rcond = lu.rcond();
    throw SolverError("fem_solve: singular or ill-conditioned system", rcond);
  }
  return u;
}

SteadySnapshotSet make_snapshots_C(int n, std::uint64_t seed, const SteadyDiscretization& disc,
                                   const GrfDatasetOptions& opts) {
  SteadySnapshotSet set;
  auto init = [&](MatrixXd& m, int rows) { m.resize(rows, n); };
  init(set.u_dom, disc.quads.domain.size());
  init(set.ux_dom, disc.quads.domain.size());
  init(set.uy_dom, disc.quads.domain.size());
  init(set.u_gdl, disc.quads.gd_left.size());
  init(set.ux_gdl, disc.quads.gd_left.size());
  init(set.uy_gdl, disc.quads.gd_left.size());
  init(set.u_gdr, disc.quads.gd_right.size());
  init(set.ux_gdr, disc.quads.gd_right.size());
  init(set.uy_gdr, disc.quads.gd_right.size());
  init(set.u_gnb, disc.quads.gn_bottom.size());
  init(set.u_gnt, disc.quads.gn_top.size());
  init(set.u_eval, disc.eval.size());
  for (int i = 0; i < n; ++i) {
    SteadyManufactured m = draw_manufactured_C(seed + i, opts);
    GrfEval dom = m.u.sample(disc.quads.domain, true);
    set.u_dom.col(i) = dom.value;
    set.ux_dom.col(i) = dom.grad.col(0);
    set.uy_dom.col(i) = dom.grad.col(1);
    GrfEval gl = m.u.sample(disc.quads.gd_left, true);
    set.u_gdl.col(i) = gl.value;
    set.ux_gdl.col(i) = gl.grad.col(0);
    set.uy_gdl.col(i) = gl.grad.col(1);
    GrfEval gr = m.u.sample(disc.quads.gd_right, true);
    set.u_gdr.col(i) = gr.value;
    set.ux_gdr.col(i) = gr.grad.col(0);
    set.uy_gdr.col(i) = gr.grad.col(1);
    set.u_gnb.col(i) = m.u.sample(disc.quads.gn_bottom, false).value;
    set.u_gnt.col(i) = m.u.sample(disc.quads.gn_top, false).value;
    set.u_eval.col(i) = m.u.sample(disc.eval, false).value;
  }
  return set;
}

PodSteadyTables make_pod_steady_tables(const PodBasis& pod, const SteadySnapshotSet& snaps) {
  PodSteadyTables t;
  t.val_dom = pod.combine(snaps.u_dom);
  t.gx_dom = pod.combine(snaps.ux_dom);
  t.gy_dom = pod.combine(snaps.uy_dom);
  t.val_gdl = pod.combine(snaps.u_gdl);
  t.gx_gdl = pod.combine(snaps.ux_gdl);
  t.gy_gdl = pod.combine(snaps.uy_gdl);
  t.val_gdr = pod.combine(snaps.u_gdr);
  t.gx_gdr = pod.combine(snaps.ux_gdr);
  t.gy_gdr = pod.combine(snaps.uy_gdr);
  t.val_gnb = pod.combine(snaps.u_gnb);
  t.val_gnt = pod.combine(snaps.u_gnt);
  t.val_eval = pod.combine(snaps.u_eval);
  return t;
}

VectorXd pod_galerkin_solve(const SteadyFields& fields, const PodSteadyTables& tables,
                            const SteadyQuads& quads) {
  const int n = tables.count();
  MatrixXd f = MatrixXd::Zero(n, n);
  VectorXd d = VectorXd::Zero(n);

  // Volume terms.
  for (int q = 0; q < quads.domain.size(); ++q) {
    const double w = quads.domain.weights(q);
    const double th = fields.theta(q);
    for (int b = 0; b < n; ++b) {
      d(b) += w * fields.f(q) * tables.val_dom(q, b);
      for (int a = 0; a < n; ++a)
        f(b, a) += w * th * (tables.gx_dom(q, a) * tables.gx_dom(q, b) +
                             tables.gy_dom(q, a) * tables.gy_dom(q, b));
    }
  }
  auto dirichlet = [&](const QuadratureRule& rule, const MatrixXd& val, const MatrixXd& gx,
                       const MatrixXd& gy, const VectorXd& theta_b, const VectorXd& g) {
    for (int q = 0; q < rule.size(); ++q) {
      const double w = rule.weights(q);
      const double th = theta_b(q);
      const double nx = rule.normals(q, 0), ny = rule.normals(q, 1);
      for (int b = 0; b < n; ++b) {
        const double ngb = nx * gx(q, b) + ny * gy(q, b);
        d(b) -= w * g(q) * ngb;
        for (int a = 0; a < n; ++a) {
          const double nga = nx * gx(q, a) + ny * gy(q, a);
          f(b, a) -= w * th * (val(q, a) * ngb + val(q, b) * nga);
        }
      }
    }
  };
  dirichlet(quads.gd_left, tables.val_gdl, tables.gx_gdl, tables.gy_gdl, fields.theta_gd_left,
            fields.g_left);
  dirichlet(quads.gd_right, tables.val_gdr, tables.gx_gdr, tables.gy_gdr, fields.theta_gd_right,
            fields.g_right);
  auto neumann = [&](const QuadratureRule& rule, const MatrixXd& val, const VectorXd& eta) {
    for (int q = 0; q < rule.size(); ++q)
      for (int b = 0; b < n; ++b) d(b) += rule.weights(q) * eta(q) * val(q, b);
  };
  neumann(quads.gn_bottom, tables.val_gnb, fields.eta_bottom);
  neumann(quads.gn_top, tables.val_gnt, fields.eta_top);

  Eigen::PartialPivLU<MatrixXd> lu(f);
  VectorXd u = lu.solve(d);
  if (!u.allFinite()) throw SolverError("pod_galerkin_solve: singular reduced system", lu.rcond());
  return u;
}

PicardResult picard_solve(const SteadyFields& base, double alpha,
                          const SteadyDiscretization& disc, const LinearPdeSolver& inner,
                          const PicardConfig& config) {
  if (!(config.tol > 0.0)) throw std::invalid_argument("picard_solve: tolerance must be positive");

  // Basis tables needed to evaluate iterates at the quadrature points.
  const MatrixXd dom_table = disc.basis.value_table(disc.quads.domain);
  const MatrixXd gdl_table = disc.basis.value_table(disc.quads.gd_left);
  const MatrixXd gdr_table = disc.basis.value_table(disc.quads.gd_right);

  PicardResult result;
  VectorXd u_prev_coeffs = VectorXd::Zero(disc.basis.count());
  VectorXd u_prev_dom = VectorXd::Zero(disc.quads.domain.size());

  for (int k = 1; k <= config.max_iterations; ++k) {
    SteadyFields fields = base;
    fields.theta = base.theta + alpha * u_prev_dom;
    fields.theta_gd_left = base.theta_gd_left + alpha * (gdl_table * u_prev_coeffs);
    fields.theta_gd_right = base.theta_gd_right + alpha * (gdr_table * u_prev_coeffs);

    const bool positive = fields.theta.minCoeff() > 0.0 &&
                          fields.theta_gd_left.minCoeff() > 0.0 &&
                          fields.theta_gd_right.minCoeff() > 0.0;
    if (!positive)
      std::cerr << "[picard] theta[u^(" << k - 1 << ")] not positive everywhere\n";

    VectorXd u_coeffs = inner(fields);
    if (!u_coeffs.allFinite())
      throw NumericalError("picard_solve: non-finite iterate at k=" + std::to_string(k));

    VectorXd u_dom = dom_table * u_coeffs;
    const double unorm =
        std::sqrt((u_dom.array().square() * disc.quads.domain.weights.array()).sum());
    const double dnorm = std::sqrt(
        ((u_dom - u_prev_dom).array().square() * disc.quads.domain.weights.array()).sum());
    const double update = dnorm / std::max(unorm, 1e-300);

    result.iterates.push_back(u_coeffs);
    result.update_norms.push_back(update);
    result.theta_positive.push_back(positive);
    result.iterations = k;

    u_prev_coeffs = u_coeffs;
    u_prev_dom = u_dom;
    if (update < config.tol) {
      result.converged = true;
      break;
    }
  }
  return result;
}

LinearPdeSolver make_fem_inner_solver(const SteadyDiscretization& disc, double nitsche_constant) {
  AssemblyOptions opts;
  opts.nitsche_constant = nitsche_constant;
  return [&disc, opts](const SteadyFields& fields) {
    AssembledOperator op = assemble_steady(fields, disc.basis, disc.quads, opts);
    return fem_solve(op, /*stabilized=*/true);
  };
}

}  // namespace ngo
