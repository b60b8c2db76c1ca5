#include "ngo/timestepper.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <iostream>

#include "ngo/errors.hpp"

namespace ngo {

double generalized_operator_norm(const MatrixXd& b, const MatrixXd& mass, PowerIterWorkspace& ws,
                                 double tol, int max_iter) {
  const int n = static_cast<int>(mass.rows());
  if (!ws.ready) {
    ws.mass_chol.compute(mass);
    if (ws.mass_chol.info() != Eigen::Success)
      throw NumericalError("generalized_operator_norm: mass matrix not positive definite");
    ws.v0 = VectorXd::Ones(n);
    ws.ready = true;
  }
  VectorXd v = ws.v0;
  double vn = std::sqrt(v.dot(mass * v));
  if (!(vn > 0.0)) {
    v = VectorXd::Ones(n);
    vn = std::sqrt(v.dot(mass * v));
  }
  v /= vn;

  double lambda = 0.0, lambda_prev = -1.0;
  ws.used_dense_fallback = false;
  int it = 0;
  for (; it < max_iter; ++it) {
    VectorXd w = b * v;
    lambda = w.dot(mass * w);  // Rayleigh quotient with ||v||_M = 1
    if (it > 0 && std::abs(lambda - lambda_prev) <= 2.0 * tol * std::abs(lambda) + 1e-300) break;
    lambda_prev = lambda;
    VectorXd y = ws.mass_chol.solve(b.transpose() * (mass * w));
    const double yn = std::sqrt(y.dot(mass * y));
    if (!(yn > 1e-300)) { lambda = 0.0; break; }  // B v = 0: norm is zero on this vector
    v = y / yn;
  }
  ws.last_iterations = it;
  if (it >= max_iter) {
    // Dense generalized eigensolve fallback.
    std::cerr << "[norm scaling] power iteration did not converge; dense fallback\n";
    ws.used_dense_fallback = true;
    Eigen::GeneralizedSelfAdjointEigenSolver<MatrixXd> eig(b.transpose() * mass * b, mass);
    lambda = eig.eigenvalues().maxCoeff();
  }
  ws.v0 = v;
  return std::sqrt(std::max(lambda, 0.0));
}

NormScalingResult norm_scaling(const MatrixXd& a_hat, const MatrixXd& spatial_mass,
                               double s_bound, PowerIterWorkspace& ws) {
  if (!(s_bound > 0.0) || s_bound > 1.0)
    throw std::invalid_argument("norm_scaling: S must lie in (0, 1]");
  const int s = static_cast<int>(spatial_mass.rows());
  MatrixXd b = a_hat.bottomLeftCorner(s, s) * spatial_mass;
  NormScalingResult res;
  res.norm = generalized_operator_norm(b, spatial_mass, ws);
  if (res.norm > s_bound) {
    res.a_scaled = (s_bound / res.norm) * a_hat;
    res.scaled = true;
  } else {
    res.a_scaled = a_hat;
  }
  return res;
}

ConservationOutcome conservation_correct(const VectorXd& u_full, const ConservationTerms& terms,
                                         const MatrixXd& spatial_mass, double prev_energy) {
  const int s = static_cast<int>(spatial_mass.rows());
  const double q = terms.c.squaredNorm();
  if (!(q > 1e-300)) throw std::invalid_argument("conservation_correct: c vector is zero");

  ConservationOutcome out;
  // Stage 1: a = 1, mass equality only.
  const double p = u_full.dot(terms.c);
  out.b = (terms.C - p) / q;
  out.corrected = u_full + out.b * terms.c;

  auto energy_of = [&](const VectorXd& full) {
    VectorXd tr = full.tail(s);
    return 0.5 * tr.dot(spatial_mass * tr);
  };
  auto violation = [&](const VectorXd& full) {
    return energy_of(full) - prev_energy - full.dot(terms.h);
  };
  double resid = violation(out.corrected);
  if (resid <= 1e-12) {
    out.energy_residual = std::min(resid, 0.0);
    return out;
  }

  // Stage 2: solve mass equality + energy equality for (a, b).
  out.energy_stage = true;
  VectorXd tu = u_full.tail(s), tc = terms.c.tail(s);
  const double a2 = tu.dot(spatial_mass * tu);
  const double a1 = tu.dot(spatial_mass * tc);
  const double a0 = tc.dot(spatial_mass * tc);
  const double hu = u_full.dot(terms.h), hc = terms.c.dot(terms.h);
  const double b0 = terms.C / q, b1 = -p / q;
  const double alpha = 0.5 * (a2 + 2.0 * b1 * a1 + b1 * b1 * a0);
  const double beta = b0 * a1 + b0 * b1 * a0 - hu - b1 * hc;
  const double gamma = 0.5 * b0 * b0 * a0 - prev_energy - b0 * hc;

  double best_a = -1.0;
  if (std::abs(alpha) < 1e-14) {
    if (std::abs(beta) > 1e-300) {
      const double a = -gamma / beta;
      if (a > 0.0 && a <= 1.0) best_a = a;
    }
  } else {
    const double disc = beta * beta - 4.0 * alpha * gamma;
    if (disc >= 0.0) {
      const double r = std::sqrt(disc);
      for (double a : {(-beta + r) / (2.0 * alpha), (-beta - r) / (2.0 * alpha)})
        if (a > 0.0 && a <= 1.0) best_a = std::max(best_a, a);
    }
  }
  if (best_a < 0.0) {
    out.no_real_root = true;  // keep the mass-only correction, report residual
    out.energy_residual = resid;
    return out;
  }
  out.a = best_a;
  out.b = b0 + b1 * best_a;
  out.corrected = best_a * u_full + out.b * terms.c;
  out.energy_residual = violation(out.corrected);
  return out;
}

VectorXd slab_step(const MatrixXd& a_hat, const AssembledOperator& op, bool stabilized_rhs) {
  VectorXd d = op.d;
  if (stabilized_rhs) d += op.nitsche_d;
  return a_hat * d;
}

RolloutResult rollout(const SpaceTimeManufactured& problem, const SpaceTimeDiscretization& disc,
                      const SlabMatrixFn& a_hat_fn, const RolloutOptions& opts) {
  const int s = disc.spatial_count();
  const int n_steps = opts.n_steps;
  const double dt = disc.dt;

  // Spatial trace basis and rules.
  TensorBasis spatial = make_tensor_basis({disc.basis.factor(1), disc.basis.factor(2)});
  const int cells = spatial.factor(0).count() - spatial.factor(0).degree();
  QuadratureRule xy_eval = make_quadrature(QuadKind::Gauss, {cells, cells}, opts.eval_ppc);
  MatrixXd spatial_table = spatial.value_table(xy_eval);
  QuadratureRule xy_proj = make_quadrature(QuadKind::Gauss, {cells, cells}, 6);

  // u^(0): projection of the initial data.
  RowMatrixXd p0(xy_proj.size(), 3);
  for (int qv = 0; qv < xy_proj.size(); ++qv)
    p0.row(qv) << 0.0, xy_proj.points(qv, 0), xy_proj.points(qv, 1);
  VectorXd u0_samples = problem.u.sample(p0, false).value;
  VectorXd trace = project_L2(u0_samples, spatial, xy_proj).coeffs;

  RolloutResult result;
  result.traces.resize(s, n_steps);
  result.initial_trace = trace;
  PowerIterWorkspace ws;

  for (int i = 0; i < n_steps; ++i) {
    SpaceTimeFields fields = problem.slab_fields(disc, i);
    AssembledOperator op =
        assemble_space_time(fields, disc.basis, disc.quads, i, dt, &trace);
    MatrixXd a_hat = a_hat_fn(op, fields, i);

    StepTelemetry tel;
    tel.step = i;
    if (opts.norm_scaling) {
      NormScalingResult ns = norm_scaling(a_hat, op.spatial_mass, opts.s_bound, ws);
      tel.norm_estimate = ns.norm;
      tel.scaled = ns.scaled;
      a_hat = std::move(ns.a_scaled);
    }

    const double prev_energy = 0.5 * trace.dot(op.spatial_mass * trace);
    VectorXd u_full = slab_step(a_hat, op, opts.stabilized_rhs);
    if (!u_full.allFinite()) {
      result.aborted = true;
      result.abort_step = i;
      result.traces.conservativeResize(s, i);
      return result;
    }

    if (opts.conservation) {
      ConservationTerms terms{op.cons_c, op.cons_C_sources, op.cons_h};
      ConservationOutcome co = conservation_correct(u_full, terms, op.spatial_mass, prev_energy);
      u_full = co.corrected;
      tel.a = co.a;
      tel.b = co.b;
      tel.no_real_root = co.no_real_root;
    }

    trace = u_full.tail(s);
    result.traces.col(i) = trace;

    // Telemetry against the manufactured truth at the slab end.
    const double t_end = (i + 1) * dt;
    RowMatrixXd pe(xy_eval.size(), 3);
    for (int qv = 0; qv < xy_eval.size(); ++qv)
      pe.row(qv) << t_end, xy_eval.points(qv, 0), xy_eval.points(qv, 1);
    VectorXd u_true = problem.u.sample(pe, false).value;
    VectorXd u_hat = spatial_table * trace;
    const double denom =
        std::sqrt((u_true.array().square() * xy_eval.weights.array()).sum());
    const double num =
        std::sqrt(((u_hat - u_true).array().square() * xy_eval.weights.array()).sum());
    tel.rel_error = denom > 1e-300 ? num / denom : num;
    tel.mass_hat = u_full.dot(op.trace_integral);
    tel.energy_hat = 0.5 * trace.dot(op.spatial_mass * trace);
    problem.mass_energy(t_end, xy_eval, &tel.mass_true, &tel.energy_true);
    result.telemetry.push_back(tel);
  }
  return result;
}

}  // namespace ngo
