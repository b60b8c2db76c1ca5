#include "ngo/assembly.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

#include "ngo/errors.hpp"

namespace ngo {

namespace {

int spans_of(const Basis1D& b) {
  return b.kind() == BasisKind::BSpline ? std::max(b.count() - b.degree(), 1) : 1;
}

void check_positive_theta(const VectorXd& theta, const char* where) {
  for (int i = 0; i < theta.size(); ++i)
    if (!(theta(i) > 0.0))
      throw std::domain_error(std::string("assembly: non-positive theta at ") + where);
}

void require_size(const VectorXd& v, int n, const char* name) {
  if (v.size() != n)
    throw std::invalid_argument(std::string("assembly: field '") + name +
                                "' not sampled on the expected rule");
}

// tau = h/(2|c|) (coth(Pe) - 1/Pe), Pe = |c| h / (2 theta).
double supg_tau(double cnorm, double theta, double h) {
  const double pe = cnorm * h / (2.0 * theta);
  if (pe < 1e-4) return h * h / (12.0 * theta);  // small-Peclet limit
  const double xi = 1.0 / std::tanh(pe) - 1.0 / pe;
  return h / (2.0 * cnorm) * xi;
}

}  // namespace

double default_nitsche_constant(const TensorBasis& basis) {
  // Inverse-mesh scaling: 4 (p+1)^2 * cells of the spatial x-factor.
  const int xdim = basis.dim() == 3 ? 1 : 0;
  const Basis1D& fx = basis.factor(xdim);
  const int p = fx.degree();
  return 4.0 * (p + 1) * (p + 1) * spans_of(fx);
}

AssembledOperator assemble_steady(const SteadyFields& fields, const TensorBasis& basis,
                                  const SteadyQuads& quads, const AssemblyOptions& opts,
                                  const TensorBasis* test_basis) {
  const TensorBasis& trial = basis;
  const TensorBasis& test = test_basis ? *test_basis : basis;
  if (trial.dim() != 2 || test.dim() != 2)
    throw std::invalid_argument("assemble_steady: expected a 2D basis");
  const int Nm = trial.count(), Nn = test.count();

  require_size(fields.theta, quads.domain.size(), "theta");
  require_size(fields.f, quads.domain.size(), "f");
  require_size(fields.theta_gd_left, quads.gd_left.size(), "theta_gd_left");
  require_size(fields.theta_gd_right, quads.gd_right.size(), "theta_gd_right");
  require_size(fields.eta_bottom, quads.gn_bottom.size(), "eta_bottom");
  require_size(fields.eta_top, quads.gn_top.size(), "eta_top");
  require_size(fields.g_left, quads.gd_left.size(), "g_left");
  require_size(fields.g_right, quads.gd_right.size(), "g_right");
  check_positive_theta(fields.theta, "domain");
  check_positive_theta(fields.theta_gd_left, "Dirichlet boundary");
  check_positive_theta(fields.theta_gd_right, "Dirichlet boundary");

  const double cs =
      opts.nitsche_constant >= 0.0 ? opts.nitsche_constant : default_nitsche_constant(basis);

  AssembledOperator out;
  out.F = MatrixXd::Zero(Nn, Nm);
  out.d = VectorXd::Zero(Nn);
  out.nitsche_F = MatrixXd::Zero(Nn, Nm);
  out.nitsche_d = VectorXd::Zero(Nn);
  out.stabilization_constant = cs;

  ActiveEval at, an;
  const bool same = &trial == &test;

  // Volume: theta grad(phi_m) . grad(psi_n) and the forcing term.
  for (int q = 0; q < quads.domain.size(); ++q) {
    const double w = quads.domain.weights(q);
    const double th = fields.theta(q);
    const double* x = quads.domain.points.row(q).data();
    trial.eval_active(x, at);
    if (!same) test.eval_active(x, an);
    const ActiveEval& te = same ? at : an;
    for (int b = 0; b < te.size(); ++b) {
      const int n = te.index[b];
      out.d(n) += w * fields.f(q) * te.value[b];
      const double bgx = te.grad[2 * b], bgy = te.grad[2 * b + 1];
      for (int a = 0; a < at.size(); ++a)
        out.F(n, at.index[a]) += w * th * (at.grad[2 * a] * bgx + at.grad[2 * a + 1] * bgy);
    }
  }

  // Dirichlet segments: consistency + adjoint terms, data term, Nitsche blocks.
  auto dirichlet_segment = [&](const QuadratureRule& rule, const VectorXd& theta_b,
                               const VectorXd& g) {
    for (int q = 0; q < rule.size(); ++q) {
      const double w = rule.weights(q);
      const double th = theta_b(q);
      const double* x = rule.points.row(q).data();
      const double nx = rule.normals(q, 0), ny = rule.normals(q, 1);
      trial.eval_active(x, at);
      if (!same) test.eval_active(x, an);
      const ActiveEval& te = same ? at : an;
      for (int b = 0; b < te.size(); ++b) {
        const int n = te.index[b];
        const double vb = te.value[b];
        const double ngb = nx * te.grad[2 * b] + ny * te.grad[2 * b + 1];
        out.d(n) -= w * g(q) * ngb;
        out.nitsche_d(n) += cs * w * g(q) * vb;
        for (int a = 0; a < at.size(); ++a) {
          const double va = at.value[a];
          const double nga = nx * at.grad[2 * a] + ny * at.grad[2 * a + 1];
          out.F(n, at.index[a]) -= w * th * (va * ngb + vb * nga);
          out.nitsche_F(n, at.index[a]) += cs * w * th * vb * va;
        }
      }
    }
  };
  dirichlet_segment(quads.gd_left, fields.theta_gd_left, fields.g_left);
  dirichlet_segment(quads.gd_right, fields.theta_gd_right, fields.g_right);

  // Neumann segments: data term only.
  auto neumann_segment = [&](const QuadratureRule& rule, const VectorXd& eta) {
    for (int q = 0; q < rule.size(); ++q) {
      const double w = rule.weights(q);
      const double* x = rule.points.row(q).data();
      test.eval_active(x, an);
      for (int b = 0; b < an.size(); ++b) out.d(an.index[b]) += w * eta(q) * an.value[b];
    }
  };
  neumann_segment(quads.gn_bottom, fields.eta_bottom);
  neumann_segment(quads.gn_top, fields.eta_top);

  return out;
}

AssembledOperator assemble_advection_diffusion(const SteadyFields& fields,
                                               const TensorBasis& basis,
                                               const SteadyQuads& quads, bool supg,
                                               const AssemblyOptions& opts) {
  if (basis.dim() != 2) throw std::invalid_argument("assemble_advection_diffusion: 2D basis");
  const int N = basis.count();
  require_size(fields.theta, quads.domain.size(), "theta");
  require_size(fields.f, quads.domain.size(), "f");
  require_size(fields.cx, quads.domain.size(), "cx");
  require_size(fields.cy, quads.domain.size(), "cy");
  require_size(fields.cy_gn_bottom, quads.gn_bottom.size(), "cy_gn_bottom");
  require_size(fields.cy_gn_top, quads.gn_top.size(), "cy_gn_top");
  require_size(fields.cx_gd_left, quads.gd_left.size(), "cx_gd_left");
  require_size(fields.cx_gd_right, quads.gd_right.size(), "cx_gd_right");
  check_positive_theta(fields.theta, "domain");
  if (supg && (fields.dtheta_x.size() != quads.domain.size() ||
               fields.dtheta_y.size() != quads.domain.size()))
    throw std::invalid_argument("assemble_advection_diffusion: SUPG needs grad(theta) samples");

  const double cs =
      opts.nitsche_constant >= 0.0 ? opts.nitsche_constant : default_nitsche_constant(basis);
  const double penalty =
      opts.penalty_constant >= 0.0 ? opts.penalty_constant : default_nitsche_constant(basis);
  const double gamma = opts.gamma;
  const double h = 1.0 / spans_of(basis.factor(0));

  AssembledOperator out;
  out.F = MatrixXd::Zero(N, N);
  out.d = VectorXd::Zero(N);
  out.nitsche_F = MatrixXd::Zero(N, N);
  out.nitsche_d = VectorXd::Zero(N);
  out.stabilization_constant = cs;

  ActiveEval ae;

  // Volume terms: grad-grad diffusion, advection against grad(psi), and the
  // streamline residual when stabilized.
  for (int q = 0; q < quads.domain.size(); ++q) {
    const double w = quads.domain.weights(q);
    const double th = fields.theta(q);
    const double cx = fields.cx(q), cy = fields.cy(q);
    const double* x = quads.domain.points.row(q).data();
    basis.eval_active(x, ae, supg);
    double tau = 0.0;
    if (supg) tau = supg_tau(std::hypot(cx, cy), th, h);
    for (int b = 0; b < ae.size(); ++b) {
      const int n = ae.index[b];
      const double vb = ae.value[b];
      const double bgx = ae.grad[2 * b], bgy = ae.grad[2 * b + 1];
      const double cgb = cx * bgx + cy * bgy;
      out.d(n) += w * vb * fields.f(q);
      if (supg) out.d(n) += w * cgb * tau * fields.f(q);
      for (int a = 0; a < ae.size(); ++a) {
        const double va = ae.value[a];
        const double agx = ae.grad[2 * a], agy = ae.grad[2 * a + 1];
        double e = th * (agx * bgx + agy * bgy) - cgb * va;
        if (supg) {
          const double lap = ae.second[2 * a] + ae.second[2 * a + 1];
          const double strong =
              -(fields.dtheta_x(q) * agx + fields.dtheta_y(q) * agy) - th * lap +
              cx * agx + cy * agy;
          e += cgb * tau * strong;
        }
        out.F(n, ae.index[a]) += w * e;
      }
    }
  }

  // Dirichlet faces with inflow/outflow splitting.
  auto dirichlet_face = [&](const QuadratureRule& rule, const VectorXd& theta_b,
                            const VectorXd& g, const VectorXd& cxb) {
    for (int q = 0; q < rule.size(); ++q) {
      const double w = rule.weights(q);
      const double th = theta_b(q);
      if (!(th > 0.0))
        throw std::domain_error("assemble_advection_diffusion: zero theta on Dirichlet boundary");
      const double nx = rule.normals(q, 0), ny = rule.normals(q, 1);
      const double cn = cxb(q) * nx;  // c.n on an x-face
      const bool inflow = cn < 0.0;
      const double* x = rule.points.row(q).data();
      basis.eval_active(x, ae);
      for (int b = 0; b < ae.size(); ++b) {
        const int n = ae.index[b];
        const double vb = ae.value[b];
        const double ngb = nx * ae.grad[2 * b] + ny * ae.grad[2 * b + 1];
        double rhs = -gamma * ngb;
        if (inflow) rhs -= cn * vb / th;
        out.d(n) += w * rhs * g(q);
        if (supg) out.d(n) += (penalty / h) * w * vb * g(q);
        out.nitsche_d(n) += cs * w * vb * g(q);
        for (int a = 0; a < ae.size(); ++a) {
          const double va = ae.value[a];
          const double nga = nx * ae.grad[2 * a] + ny * ae.grad[2 * a + 1];
          double e = vb * (-th * nga + cn * va);   // consistency
          double adj = -gamma * th * ngb;          // adjoint term
          if (inflow) adj -= cn * vb;
          e += adj * va;
          if (supg) e += (penalty / h) * th * vb * va;
          out.F(n, ae.index[a]) += w * e;
          out.nitsche_F(n, ae.index[a]) += cs * w * th * vb * va;
        }
      }
    }
  };
  dirichlet_face(quads.gd_left, fields.theta_gd_left, fields.g_left, fields.cx_gd_left);
  dirichlet_face(quads.gd_right, fields.theta_gd_right, fields.g_right, fields.cx_gd_right);

  // Neumann faces: data term and the outflow advective term (c.n)_+ u.
  auto neumann_face = [&](const QuadratureRule& rule, const VectorXd& eta, const VectorXd& cyb) {
    for (int q = 0; q < rule.size(); ++q) {
      const double w = rule.weights(q);
      const double ny = rule.normals(q, 1);
      const double cn = cyb(q) * ny;
      const double cnp = std::max(cn, 0.0);
      const double* x = rule.points.row(q).data();
      basis.eval_active(x, ae);
      for (int b = 0; b < ae.size(); ++b) {
        const int n = ae.index[b];
        out.d(n) += w * eta(q) * ae.value[b];
        if (cnp != 0.0)
          for (int a = 0; a < ae.size(); ++a)
            out.F(n, ae.index[a]) += w * cnp * ae.value[b] * ae.value[a];
      }
    }
  };
  neumann_face(quads.gn_bottom, fields.eta_bottom, fields.cy_gn_bottom);
  neumann_face(quads.gn_top, fields.eta_top, fields.cy_gn_top);

  return out;
}

AssembledOperator assemble_space_time(const SpaceTimeFields& fields, const TensorBasis& basis,
                                      const SpaceTimeQuads& quads, int slab_index, double dt,
                                      const VectorXd* prev_trace, const AssemblyOptions& opts) {
  if (dt <= 0.0) throw std::invalid_argument("assemble_space_time: dt must be positive");
  if (basis.dim() != 3) throw std::invalid_argument("assemble_space_time: (t,x,y) basis required");
  const int N = basis.count();
  const int nt = basis.factor(0).count();
  const int S = basis.factor(1).count() * basis.factor(2).count();

  require_size(fields.theta, quads.domain.size(), "theta");
  require_size(fields.f, quads.domain.size(), "f");
  require_size(fields.theta_gd_left, quads.gd_left.size(), "theta_gd_left");
  require_size(fields.theta_gd_right, quads.gd_right.size(), "theta_gd_right");
  require_size(fields.eta_bottom, quads.gn_bottom.size(), "eta_bottom");
  require_size(fields.eta_top, quads.gn_top.size(), "eta_top");
  require_size(fields.g_left, quads.gd_left.size(), "g_left");
  require_size(fields.g_right, quads.gd_right.size(), "g_right");
  check_positive_theta(fields.theta, "domain");
  const bool use_prev = prev_trace != nullptr;
  if (use_prev) {
    if (prev_trace->size() != S)
      throw std::invalid_argument("assemble_space_time: previous trace size mismatch");
  } else if (slab_index == 0) {
    require_size(fields.u0, quads.initial.size(), "u0");
  } else {
    throw std::invalid_argument("assemble_space_time: previous right-trace coefficients required");
  }

  const double cs =
      opts.nitsche_constant >= 0.0 ? opts.nitsche_constant : default_nitsche_constant(basis);

  AssembledOperator out;
  out.F = MatrixXd::Zero(N, N);
  out.d = VectorXd::Zero(N);
  out.nitsche_F = MatrixXd::Zero(N, N);
  out.nitsche_d = VectorXd::Zero(N);
  out.stabilization_constant = cs;
  out.M_lr = MatrixXd::Zero(N, N);
  out.M_rr = MatrixXd::Zero(N, N);
  out.spatial_mass = MatrixXd::Zero(S, S);
  out.trace_integral = VectorXd::Zero(N);
  out.cons_c = VectorXd::Zero(N);
  out.cons_h = VectorXd::Zero(N);

  ActiveEval ae, aeL, aeR;

  // Volume: -phi d_t psi (the dt Jacobians cancel) + dt * theta grad.grad.
  for (int q = 0; q < quads.domain.size(); ++q) {
    const double w = quads.domain.weights(q);
    const double th = fields.theta(q);
    const double* x = quads.domain.points.row(q).data();
    basis.eval_active(x, ae);
    out.cons_C_sources += dt * w * fields.f(q);
    for (int b = 0; b < ae.size(); ++b) {
      const int n = ae.index[b];
      const double vb = ae.value[b];
      const double bgt = ae.grad[3 * b];
      const double bgx = ae.grad[3 * b + 1], bgy = ae.grad[3 * b + 2];
      out.d(n) += dt * w * vb * fields.f(q);
      out.cons_h(n) += dt * w * vb * fields.f(q);
      for (int a = 0; a < ae.size(); ++a) {
        const double va = ae.value[a];
        const double agx = ae.grad[3 * a + 1], agy = ae.grad[3 * a + 2];
        out.F(n, ae.index[a]) += -w * va * bgt + dt * w * th * (agx * bgx + agy * bgy);
      }
    }
  }

  // Dirichlet faces (x = 0,1 through time).
  auto dirichlet_face = [&](const QuadratureRule& rule, const VectorXd& theta_b,
                            const VectorXd& g) {
    for (int q = 0; q < rule.size(); ++q) {
      const double w = rule.weights(q);
      const double th = theta_b(q);
      if (!(th > 0.0)) throw std::domain_error("assemble_space_time: non-positive theta on boundary");
      const double nx = rule.normals(q, 1), ny = rule.normals(q, 2);
      const double* x = rule.points.row(q).data();
      basis.eval_active(x, ae);
      for (int b = 0; b < ae.size(); ++b) {
        const int n = ae.index[b];
        const double vb = ae.value[b];
        const double ngb = nx * ae.grad[3 * b + 1] + ny * ae.grad[3 * b + 2];
        out.d(n) -= dt * w * g(q) * ngb;
        out.nitsche_d(n) += cs * dt * w * g(q) * vb;
        out.cons_h(n) += dt * w * g(q) * (cs * vb - ngb);
        for (int a = 0; a < ae.size(); ++a) {
          const double va = ae.value[a];
          const double nga = nx * ae.grad[3 * a + 1] + ny * ae.grad[3 * a + 2];
          out.F(n, ae.index[a]) -= dt * w * th * (va * ngb + vb * nga);
          out.nitsche_F(n, ae.index[a]) += cs * dt * w * th * vb * va;
        }
      }
    }
  };
  // Mass-law flux term: theta n.grad(phi) integrated with test function 1.
  auto dirichlet_flux = [&](const QuadratureRule& rule, const VectorXd& theta_b) {
    for (int q = 0; q < rule.size(); ++q) {
      const double w = rule.weights(q);
      const double th = theta_b(q);
      const double nx = rule.normals(q, 1), ny = rule.normals(q, 2);
      const double* x = rule.points.row(q).data();
      basis.eval_active(x, ae);
      for (int a = 0; a < ae.size(); ++a) {
        const double nga = nx * ae.grad[3 * a + 1] + ny * ae.grad[3 * a + 2];
        out.cons_c(ae.index[a]) -= dt * w * th * nga;
      }
    }
  };
  dirichlet_face(quads.gd_left, fields.theta_gd_left, fields.g_left);
  dirichlet_face(quads.gd_right, fields.theta_gd_right, fields.g_right);
  dirichlet_flux(quads.gd_left, fields.theta_gd_left);
  dirichlet_flux(quads.gd_right, fields.theta_gd_right);

  // Neumann faces.
  auto neumann_face = [&](const QuadratureRule& rule, const VectorXd& eta) {
    for (int q = 0; q < rule.size(); ++q) {
      const double w = rule.weights(q);
      const double* x = rule.points.row(q).data();
      basis.eval_active(x, ae);
      out.cons_C_sources += dt * w * eta(q);
      for (int b = 0; b < ae.size(); ++b) {
        out.d(ae.index[b]) += dt * w * eta(q) * ae.value[b];
        out.cons_h(ae.index[b]) += dt * w * eta(q) * ae.value[b];
      }
    }
  };
  neumann_face(quads.gn_bottom, fields.eta_bottom);
  neumann_face(quads.gn_top, fields.eta_top);

  // Trace terms over the spatial rule: end-of-slab mass in F, M_lr, M_rr,
  // the spatial trace mass block and the mass functional.
  for (int q = 0; q < quads.initial.size(); ++q) {
    const double w = quads.initial.weights(q);
    double xR[3] = {1.0, quads.initial.points(q, 1), quads.initial.points(q, 2)};
    double xL[3] = {0.0, xR[1], xR[2]};
    basis.eval_active(xR, aeR);
    basis.eval_active(xL, aeL);
    for (int b = 0; b < aeR.size(); ++b) {
      const int n = aeR.index[b];
      const double vbR = aeR.value[b];
      out.trace_integral(n) += w * vbR;
      for (int a = 0; a < aeR.size(); ++a) {
        out.F(n, aeR.index[a]) += w * vbR * aeR.value[a];
        out.M_rr(n, aeR.index[a]) += w * vbR * aeR.value[a];
      }
    }
    for (int b = 0; b < aeL.size(); ++b)
      for (int a = 0; a < aeR.size(); ++a)
        out.M_lr(aeL.index[b], aeR.index[a]) += w * aeL.value[b] * aeR.value[a];
  }
  out.cons_c += out.trace_integral;

  // Spatial right-trace mass block: rows/cols with leading time index nt-1.
  const int lead = (nt - 1) * S;
  out.spatial_mass = out.M_rr.block(lead, lead, S, S);

  // Initial-trace contribution to d (and the previous-mass part of C).
  if (use_prev) {
    VectorXd mtrace = out.spatial_mass * (*prev_trace);
    out.d.segment(0, S) += mtrace;  // psi_n(left end) is nonzero only for n_t = 0
    out.cons_C_sources += out.trace_integral.segment(lead, S).dot(*prev_trace);
  } else {
    for (int q = 0; q < quads.initial.size(); ++q) {
      const double w = quads.initial.weights(q);
      double xL[3] = {0.0, quads.initial.points(q, 1), quads.initial.points(q, 2)};
      basis.eval_active(xL, aeL);
      out.cons_C_sources += w * fields.u0(q);
      for (int b = 0; b < aeL.size(); ++b) out.d(aeL.index[b]) += w * fields.u0(q) * aeL.value[b];
    }
  }

  return out;
}

AssembledOperator assemble_steady_1d(const VectorXd& theta, const VectorXd& f, double g_left,
                                     double g_right, const Basis1D& basis,
                                     const QuadratureRule& quad) {
  const int N = basis.count();
  require_size(theta, quad.size(), "theta");
  require_size(f, quad.size(), "f");
  check_positive_theta(theta, "domain");

  AssembledOperator out;
  out.F = MatrixXd::Zero(N, N);
  out.d = VectorXd::Zero(N);
  out.nitsche_F = MatrixXd::Zero(N, N);
  out.nitsche_d = VectorXd::Zero(N);
  const double cs = 4.0 * (basis.degree() + 1) * (basis.degree() + 1) * (N - basis.degree());
  out.stabilization_constant = cs;

  std::vector<double> buf(static_cast<size_t>(2 * N));
  for (int q = 0; q < quad.size(); ++q) {
    const double w = quad.weights(q);
    basis.eval(quad.points(q, 0), 1, buf.data());
    for (int n = 0; n < N; ++n) {
      out.d(n) += w * f(q) * buf[n];
      for (int m = 0; m < N; ++m) out.F(n, m) += w * theta(q) * buf[N + m] * buf[N + n];
    }
  }
  // Both endpoints are Dirichlet; theta there from the nearest quad samples
  // is not adequate, so evaluate boundary theta as the first/last samples.
  struct End { double x, n, g, th; };
  const End ends[2] = {{0.0, -1.0, g_left, theta(0)},
                       {1.0, 1.0, g_right, theta(quad.size() - 1)}};
  for (const End& e : ends) {
    basis.eval(e.x, 1, buf.data());
    for (int n = 0; n < N; ++n) {
      const double vb = buf[n], gb = e.n * buf[N + n];
      out.d(n) -= e.g * gb;
      out.nitsche_d(n) += cs * e.g * vb;
      for (int m = 0; m < N; ++m) {
        const double va = buf[m], ga = e.n * buf[N + m];
        out.F(n, m) -= e.th * (va * gb + vb * ga);
        out.nitsche_F(n, m) += cs * e.th * vb * va;
      }
    }
  }
  return out;
}

namespace {

// 1D integrals int trial_i^(da) c_j test_k^(db) dx over [0,1].
std::vector<MatrixXd> triple_tensor(const Basis1D& b, int da, int db, int ppc) {
  const int n = b.count();
  std::vector<MatrixXd> t(n, MatrixXd::Zero(n, n));
  QuadratureRule rule = make_quadrature(QuadKind::Gauss, {spans_of(b)}, ppc);
  std::vector<double> buf(static_cast<size_t>(3 * n));
  const int dmax = std::max(da, db);
  for (int q = 0; q < rule.size(); ++q) {
    b.eval(rule.points(q, 0), dmax, buf.data());
    const double w = rule.weights(q);
    for (int j = 0; j < n; ++j) {
      const double cj = buf[j];
      if (cj == 0.0) continue;
      for (int i = 0; i < n; ++i) {
        const double vi = buf[da * n + i];
        if (vi == 0.0) continue;
        for (int k = 0; k < n; ++k) t[j](i, k) += w * vi * cj * buf[db * n + k];
      }
    }
  }
  return t;
}

MatrixXd pair_matrix(const Basis1D& b, int da, int db, int ppc) {
  const int n = b.count();
  MatrixXd m = MatrixXd::Zero(n, n);
  QuadratureRule rule = make_quadrature(QuadKind::Gauss, {spans_of(b)}, ppc);
  std::vector<double> buf(static_cast<size_t>(3 * n));
  const int dmax = std::max(da, db);
  for (int q = 0; q < rule.size(); ++q) {
    b.eval(rule.points(q, 0), dmax, buf.data());
    const double w = rule.weights(q);
    for (int i = 0; i < n; ++i)
      for (int k = 0; k < n; ++k) m(i, k) += w * buf[da * n + i] * buf[db * n + k];
  }
  return m;
}

// Point-evaluation rank-3 factor at x0: trial_i^(da)(x0) c_j(x0) test_k^(db)(x0).
std::vector<MatrixXd> point_tensor(const Basis1D& b, double x0, int da, int db) {
  const int n = b.count();
  std::vector<double> buf(static_cast<size_t>(3 * n));
  b.eval(x0, std::max(da, db), buf.data());
  std::vector<MatrixXd> t(n, MatrixXd::Zero(n, n));
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i)
      for (int k = 0; k < n; ++k) t[j](i, k) = buf[da * n + i] * buf[j] * buf[db * n + k];
  return t;
}

}  // namespace

SpaceTimeKronecker::SpaceTimeKronecker(const TensorBasis& basis, double dt,
                                       int points_per_cell_1d) {
  if (basis.dim() != 3) throw std::invalid_argument("SpaceTimeKronecker: (t,x,y) basis required");
  dt_ = dt;
  const Basis1D& bt = basis.factor(0);
  const Basis1D& bx = basis.factor(1);
  const Basis1D& by = basis.factor(2);
  nt_ = bt.count();
  nx_ = bx.count();
  ny_ = by.count();
  const int ppc = points_per_cell_1d;

  t3_ = triple_tensor(bt, 0, 0, ppc);
  mx3_ = triple_tensor(bx, 0, 0, ppc);
  my3_ = triple_tensor(by, 0, 0, ppc);
  dx3_ = triple_tensor(bx, 1, 1, ppc);
  dy3_ = triple_tensor(by, 1, 1, ppc);
  bx3_left_.resize(2 * nx_);
  bx3_right_.resize(2 * nx_);
  auto bl1 = point_tensor(bx, 0.0, 0, 1);   // trial value, test derivative
  auto bl2 = point_tensor(bx, 0.0, 1, 0);   // trial derivative, test value
  auto br1 = point_tensor(bx, 1.0, 0, 1);
  auto br2 = point_tensor(bx, 1.0, 1, 0);
  for (int j = 0; j < nx_; ++j) {
    bx3_left_[j] = bl1[j];
    bx3_left_[nx_ + j] = bl2[j];
    bx3_right_[j] = br1[j];
    bx3_right_[nx_ + j] = br2[j];
  }

  // Theta-independent part: time-derivative term and end-of-slab mass.
  MatrixXd gt = pair_matrix(bt, 0, 1, ppc);   // int phi_i psi_k' ds
  MatrixXd mx = pair_matrix(bx, 0, 0, ppc);
  MatrixXd my = pair_matrix(by, 0, 0, ppc);
  std::vector<double> tb(static_cast<size_t>(nt_));
  bt.eval(1.0, 0, tb.data());
  MatrixXd et(nt_, nt_);
  for (int i = 0; i < nt_; ++i)
    for (int k = 0; k < nt_; ++k) et(i, k) = tb[static_cast<size_t>(i)] * tb[static_cast<size_t>(k)];

  const int n = nt_ * nx_ * ny_;
  base_ = MatrixXd::Zero(n, n);
  // F(n=(kt,kx,ky), m=(it,ix,iy)) with the last factor fastest.
  auto add_kron = [&](const MatrixXd& a, const MatrixXd& b, const MatrixXd& c, double s) {
    for (int it = 0; it < nt_; ++it)
      for (int kt = 0; kt < nt_; ++kt) {
        const double va = a(it, kt);
        if (va == 0.0) continue;
        for (int ix = 0; ix < nx_; ++ix)
          for (int kx = 0; kx < nx_; ++kx) {
            const double vb = va * b(ix, kx);
            if (vb == 0.0) continue;
            for (int iy = 0; iy < ny_; ++iy)
              for (int ky = 0; ky < ny_; ++ky) {
                const double v = vb * c(iy, ky);
                if (v == 0.0) continue;
                const int m = (it * nx_ + ix) * ny_ + iy;
                const int nn = (kt * nx_ + kx) * ny_ + ky;
                base_(nn, m) += s * v;
              }
          }
      }
  };
  add_kron(gt, mx, my, -1.0);  // -int phi d_t psi; dt Jacobians cancel
  add_kron(et, mx, my, 1.0);   // end-of-slab mass
}

MatrixXd SpaceTimeKronecker::diffusion_part(const VectorXd& theta_hat) const {
  const int n = nt_ * nx_ * ny_;
  if (theta_hat.size() != n)
    throw std::invalid_argument("SpaceTimeKronecker: theta coefficient size mismatch");
  MatrixXd f = MatrixXd::Zero(n, n);
  for (int jt = 0; jt < nt_; ++jt)
    for (int jx = 0; jx < nx_; ++jx)
      for (int jy = 0; jy < ny_; ++jy) {
        const double c = theta_hat((jt * nx_ + jx) * ny_ + jy);
        if (c == 0.0) continue;
        const MatrixXd& at = t3_[jt];
        const MatrixXd& amx = mx3_[jx];
        const MatrixXd& amy = my3_[jy];
        const MatrixXd& adx = dx3_[jx];
        const MatrixXd& ady = dy3_[jy];
        const MatrixXd& bl1 = bx3_left_[jx];
        const MatrixXd& bl2 = bx3_left_[nx_ + jx];
        const MatrixXd& br1 = bx3_right_[jx];
        const MatrixXd& br2 = bx3_right_[nx_ + jx];
        for (int it = 0; it < nt_; ++it)
          for (int kt = 0; kt < nt_; ++kt) {
            const double vt = at(it, kt);
            if (vt == 0.0) continue;
            for (int ix = 0; ix < nx_; ++ix)
              for (int kx = 0; kx < nx_; ++kx) {
                // Volume: dt (Dx My + Mx Dy); Dirichlet x-faces enter with
                // the outward normal signs (+ left, - right for each term).
                const double volx = adx(ix, kx);
                const double bnd =
                    bl1(ix, kx) + bl2(ix, kx) - br1(ix, kx) - br2(ix, kx);
                const double mxv = amx(ix, kx);
                for (int iy = 0; iy < ny_; ++iy)
                  for (int ky = 0; ky < ny_; ++ky) {
                    const double add = dt_ * c * vt *
                        ((volx + bnd) * amy(iy, ky) + mxv * ady(iy, ky));
                    if (add == 0.0) continue;
                    const int m = (it * nx_ + ix) * ny_ + iy;
                    const int nn = (kt * nx_ + kx) * ny_ + ky;
                    f(nn, m) += add;
                  }
              }
          }
      }
  return f;
}

MatrixXd SpaceTimeKronecker::assemble(const VectorXd& theta_hat) const {
  return base_ + diffusion_part(theta_hat);
}

ProjectionResult project_L2_table(const VectorXd& u_samples, const MatrixXd& value_table,
                                  const VectorXd& weights) {
  if (value_table.rows() != u_samples.size() || weights.size() != u_samples.size())
    throw std::invalid_argument("project_L2: sample/table size mismatch");
  if (value_table.rows() < value_table.cols())
    throw std::invalid_argument("project_L2: quadrature must resolve the basis (N <= Q)");
  VectorXd sw = weights.array().sqrt();
  MatrixXd a = sw.asDiagonal() * value_table;
  VectorXd b = sw.asDiagonal() * u_samples;
  Eigen::ColPivHouseholderQR<MatrixXd> qr(a);
  if (qr.rank() < value_table.cols())
    throw SolverError("project_L2: rank-deficient mass matrix",
                      static_cast<double>(qr.rank()) / value_table.cols());
  ProjectionResult res;
  res.coeffs = qr.solve(b);
  const double un = b.norm();
  const double rn = (a * res.coeffs - b).norm();
  res.rel_error = un > 1e-300 ? rn / un : rn;
  return res;
}

ProjectionResult project_L2(const VectorXd& u_samples, const TensorBasis& basis,
                            const QuadratureRule& quad) {
  return project_L2_table(u_samples, basis.value_table(quad), quad.weights);
}

}  // namespace ngo
