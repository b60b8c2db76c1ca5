#include "ngo/datasets.hpp"

#include <cmath>
#include <iostream>
#include <random>

#include "ngo/errors.hpp"
#include "ngo/solvers.hpp"

namespace ngo {

std::uint64_t sample_seed(std::uint64_t base, std::uint64_t index, std::uint64_t stream) {
  // splitmix64 over the combined identifier
  std::uint64_t z = base + index + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

SteadyDiscretization make_steady_discretization(int n_per_dim, int degree, int quad_ppc,
                                                int eval_ppc) {
  SteadyDiscretization d;
  Basis1D b1 = make_bspline_basis(n_per_dim, degree);
  const int cells = n_per_dim - degree;
  d.basis = make_tensor_basis({b1, b1});
  d.quads = make_steady_quads(QuadKind::Gauss, cells, quad_ppc);
  d.eval = make_quadrature(QuadKind::Gauss, {cells, cells}, eval_ppc);
  d.eval_table = d.basis.value_table(d.eval);
  return d;
}

SpaceTimeDiscretization make_space_time_discretization(int n_xy, double dt, int nt, int degree_xy,
                                                       int quad_ppc, int eval_ppc) {
  SpaceTimeDiscretization d;
  Basis1D bt = make_bspline_basis(nt, 1);  // nodal linear in time
  Basis1D bx = make_bspline_basis(n_xy, degree_xy);
  const int cells = n_xy - degree_xy;
  d.basis = make_tensor_basis({bt, bx, bx});
  d.quads = make_space_time_quads(QuadKind::Gauss, 1, cells, quad_ppc, dt);
  d.eval = make_quadrature(QuadKind::Gauss, {1, cells, cells}, eval_ppc);
  d.eval_table = d.basis.value_table(d.eval);
  d.dt = dt;
  return d;
}

namespace {

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

// Fixed reference lattices over which raw unit fields are normalized to
// sup 1, so the configured offset/scale ranges of the datasets hold exactly.
double unit_sup_2d(const GrfField& f) {
  const int n = 41;
  RowMatrixXd pts(n * n, 2);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      pts.row(i * n + j) << static_cast<double>(i) / (n - 1), static_cast<double>(j) / (n - 1);
  return std::max(f.sample(pts, false).value.cwiseAbs().maxCoeff(), 1e-12);
}

double unit_sup_3d(const GrfField& f) {
  const int nt = 9, n = 17;
  RowMatrixXd pts(nt * n * n, 3);
  int r = 0;
  for (int k = 0; k < nt; ++k)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        pts.row(r++) << static_cast<double>(k) / (nt - 1), static_cast<double>(i) / (n - 1),
            static_cast<double>(j) / (n - 1);
  return std::max(f.sample(pts, false).value.cwiseAbs().maxCoeff(), 1e-12);
}

GrfField normalized_2d(double lambda, double offset, double scale, std::uint64_t seed,
                       int features) {
  GrfSpec spec;
  spec.length_scale = lambda;
  spec.offset = 0.0;
  spec.scale = 1.0;
  spec.seed = seed;
  spec.spatial_dim = 2;
  spec.features = features;
  GrfField raw(spec);
  const double sup = unit_sup_2d(raw);
  spec.offset = offset;
  spec.scale = scale / sup;
  return GrfField(spec);
}

GrfField normalized_3d(double lambda, double tau, double offset, double scale,
                       std::uint64_t seed, int features) {
  GrfSpec spec;
  spec.length_scale = lambda;
  spec.time_scale = tau;
  spec.offset = 0.0;
  spec.scale = 1.0;
  spec.seed = seed;
  spec.spatial_dim = 2;
  spec.features = features;
  GrfField raw(spec);
  const double sup = unit_sup_3d(raw);
  spec.offset = offset;
  spec.scale = scale / sup;
  return GrfField(spec);
}

// Apply the x(1-x) Dirichlet mask and a joint data scale to sampled solution
// values/derivatives (dataset B).
void apply_mask_scale(GrfEval& e, const QuadratureRule& rule, bool mask, double scale) {
  if (mask) {
    for (int q = 0; q < rule.size(); ++q) {
      const double x = rule.points(q, 0);
      const double w = x * (1.0 - x), dw = 1.0 - 2.0 * x;
      if (e.laplacian.size() > 0)
        e.laplacian(q) = -2.0 * e.value(q) + 2.0 * dw * e.grad(q, 0) + w * e.laplacian(q);
      if (e.grad.size() > 0) {
        e.grad(q, 0) = dw * e.value(q) + w * e.grad(q, 0);
        e.grad(q, 1) *= w;
      }
      e.value(q) *= w;
    }
  }
  if (scale != 1.0) {
    e.value *= scale;
    if (e.grad.size() > 0) e.grad *= scale;
    if (e.laplacian.size() > 0) e.laplacian *= scale;
  }
}

struct SolutionEval {
  bool mask = false;
  double scale = 1.0;
  const GrfField* u = nullptr;

  GrfEval sample(const QuadratureRule& rule, bool derivs) const {
    GrfEval e = u->sample(rule, derivs);
    apply_mask_scale(e, rule, mask, scale);
    return e;
  }
};

// Realize a steady manufactured pair. theta_lin != nullptr marks the
// nonlinear family: the stored coefficient is theta0 while the data fields
// are built from theta0 + alpha u.
ProblemSample realize_steady_impl(const GrfField& theta, const SolutionEval& u,
                                  const SteadyDiscretization& disc, bool nonlinear,
                                  double alpha, double data_scale_eta_f) {
  ProblemSample s;
  s.family = nonlinear ? PdeFamily::NonlinearDiffusion : PdeFamily::SteadyDiffusion;
  s.provenance = Provenance::Manufactured;
  s.alpha = nonlinear ? alpha : 0.0;

  GrfEval th = theta.sample(disc.quads.domain, true);
  GrfEval uu = u.sample(disc.quads.domain, true);
  VectorXd theta_tot = th.value;
  MatrixXd theta_grad = th.grad;
  if (nonlinear) {
    theta_tot += alpha * uu.value;
    theta_grad += alpha * uu.grad;
  }
  s.fields.f = (-(theta_grad.col(0).cwiseProduct(uu.grad.col(0)) +
                  theta_grad.col(1).cwiseProduct(uu.grad.col(1))) -
                theta_tot.cwiseProduct(uu.laplacian)) *
               data_scale_eta_f;
  s.fields.theta = nonlinear ? th.value : theta_tot;

  auto dirichlet_data = [&](const QuadratureRule& r, VectorXd& theta_out, VectorXd& g_out) {
    GrfEval tb = theta.sample(r, false);
    GrfEval ub = u.sample(r, false);
    VectorXd tot = tb.value;
    if (nonlinear) tot += alpha * ub.value;
    theta_out = nonlinear ? tb.value : tot;
    g_out = tot.cwiseProduct(ub.value);
  };
  dirichlet_data(disc.quads.gd_left, s.fields.theta_gd_left, s.fields.g_left);
  dirichlet_data(disc.quads.gd_right, s.fields.theta_gd_right, s.fields.g_right);

  auto neumann_data = [&](const QuadratureRule& r, VectorXd& eta_out) {
    GrfEval tb = theta.sample(r, false);
    GrfEval ub = u.sample(r, true);
    VectorXd tot = tb.value;
    if (nonlinear) tot += alpha * ub.value;
    eta_out.resize(r.size());
    for (int q = 0; q < r.size(); ++q)
      eta_out(q) = data_scale_eta_f * tot(q) * r.normals(q, 1) * ub.grad(q, 1);
  };
  neumann_data(disc.quads.gn_bottom, s.fields.eta_bottom);
  neumann_data(disc.quads.gn_top, s.fields.eta_top);

  s.u_ref = u.sample(disc.eval, false).value;
  return s;
}

}  // namespace

double SteadyManufactured::theta_at(double x, double y) const {
  const double p[2] = {x, y};
  return theta.value(p);
}

double SteadyManufactured::u_at(double x, double y) const {
  const double p[2] = {x, y};
  return u.value(p);
}

double SteadyManufactured::f_at(double x, double y) const {
  const double p[2] = {x, y};
  double gt[2], gu[2];
  theta.gradient(p, gt);
  u.gradient(p, gu);
  return -(gt[0] * gu[0] + gt[1] * gu[1]) - theta.value(p) * u.laplacian(p);
}

double SteadyManufactured::eta_at(double x, double y, double ny) const {
  const double p[2] = {x, y};
  double gu[2];
  u.gradient(p, gu);
  return theta.value(p) * ny * gu[1];
}

double SteadyManufactured::g_at(double x, double y) const { return theta_at(x, y) * u_at(x, y); }

ProblemSample SteadyManufactured::realize(const SteadyDiscretization& disc) const {
  SolutionEval ue{false, 1.0, &u};
  return realize_steady_impl(theta, ue, disc, false, 0.0, 1.0);
}

double NonlinearManufactured::theta_total_at(double x, double y) const {
  const double p[2] = {x, y};
  return theta0.value(p) + alpha * u.value(p);
}

ProblemSample NonlinearManufactured::realize(const SteadyDiscretization& disc) const {
  SolutionEval ue{false, 1.0, &u};
  return realize_steady_impl(theta0, ue, disc, true, alpha, 1.0);
}

SteadyManufactured draw_manufactured_C(std::uint64_t sseed, const GrfDatasetOptions& opts) {
  std::mt19937_64 rng(sample_seed(sseed, 0, 0));
  const double c_theta = uniform(rng, 0.0, 0.2);
  const double lam_theta = uniform(rng, opts.lambda_lo, opts.lambda_hi);
  const double b_u = uniform(rng, -1.0, 1.0);
  const double c_u = uniform(rng, 0.0, 1.0);
  const double lam_u = uniform(rng, opts.lambda_lo, opts.lambda_hi);
  return SteadyManufactured{
      normalized_2d(lam_theta, 1.0, c_theta, sample_seed(sseed, 0, 1), opts.features),
      normalized_2d(lam_u, b_u, c_u, sample_seed(sseed, 0, 2), opts.features)};
}

NonlinearManufactured draw_manufactured_F(std::uint64_t sseed, const GrfDatasetOptions& opts) {
  std::mt19937_64 rng(sample_seed(sseed, 0, 0));
  const double c_theta = uniform(rng, 0.0, 0.1);
  const double lam_theta = uniform(rng, opts.lambda_lo, opts.lambda_hi);
  const double b_u = uniform(rng, -1.0, 1.0);
  const double c_u = uniform(rng, 0.0, 1.0);
  const double lam_u = uniform(rng, opts.lambda_lo, opts.lambda_hi);
  NonlinearManufactured m{
      normalized_2d(lam_theta, 1.0, c_theta, sample_seed(sseed, 0, 1), opts.features),
      normalized_2d(lam_u, b_u, c_u, sample_seed(sseed, 0, 2), opts.features), 0.1};
  return m;
}

SpaceTimeManufactured draw_manufactured_D(std::uint64_t sseed, const GrfDatasetOptions& opts) {
  std::mt19937_64 rng(sample_seed(sseed, 0, 0));
  const double c_theta = uniform(rng, 0.0, 0.2);
  const double lam_theta = uniform(rng, opts.lambda_lo, opts.lambda_hi);
  const double tau_theta = uniform(rng, opts.tau_lo, opts.tau_hi);
  const double b_u = uniform(rng, -1.0, 1.0);
  const double c_u = uniform(rng, 0.0, 1.0);
  const double lam_u = uniform(rng, opts.lambda_lo, opts.lambda_hi);
  const double tau_u = uniform(rng, opts.tau_lo, opts.tau_hi);
  return SpaceTimeManufactured{
      normalized_3d(lam_theta, tau_theta, 1.0, c_theta, sample_seed(sseed, 0, 1), opts.features),
      normalized_3d(lam_u, tau_u, b_u, c_u, sample_seed(sseed, 0, 2), opts.features)};
}

Dataset make_dataset_C(int n, std::uint64_t seed, const SteadyDiscretization& disc,
                       const GrfDatasetOptions& opts) {
  if (n < 1) throw std::invalid_argument("make_dataset_C: n >= 1");
  Dataset ds;
  ds.family = PdeFamily::SteadyDiffusion;
  ds.seed = seed;
  ds.name = "C";
  ds.samples.reserve(n);
  for (int i = 0; i < n; ++i)
    ds.samples.push_back(draw_manufactured_C(seed + i, opts).realize(disc));
  return ds;
}

Dataset make_dataset_F(int n, std::uint64_t seed, const SteadyDiscretization& disc,
                       const GrfDatasetOptions& opts) {
  if (n < 1) throw std::invalid_argument("make_dataset_F: n >= 1");
  Dataset ds;
  ds.family = PdeFamily::NonlinearDiffusion;
  ds.seed = seed;
  ds.alpha = 0.1;
  ds.name = "F";
  ds.samples.reserve(n);
  for (int i = 0; i < n; ++i) {
    // theta[u] must stay positive; redraw on the rare violating draw.
    for (std::uint64_t retry = 0;; ++retry) {
      NonlinearManufactured m = draw_manufactured_F(seed + i + retry * 7919, opts);
      ProblemSample s = m.realize(disc);
      const VectorXd theta_tot =
          s.fields.theta + ds.alpha * m.u.sample(disc.quads.domain, false).value;
      if (theta_tot.minCoeff() > 1e-3) {
        ds.samples.push_back(std::move(s));
        break;
      }
      if (retry > 20) throw NumericalError("make_dataset_F: cannot satisfy theta positivity");
      std::cerr << "[dataset F] redraw sample " << i << " (theta[u] not positive)\n";
    }
  }
  return ds;
}

Dataset make_dataset_B(int n, std::uint64_t seed, const SteadyDiscretization& disc,
                       int features) {
  if (n < 1) throw std::invalid_argument("make_dataset_B: n >= 1");
  // Batch affine map of raw theta fields onto [0.02, 0.99].
  double tmin = 1e300, tmax = -1e300;
  GrfSpec tspec;
  tspec.length_scale = 0.2;
  tspec.spatial_dim = 2;
  tspec.features = features;
  for (int i = 0; i < n; ++i) {
    tspec.seed = sample_seed(seed + i, 0, 1);
    tspec.offset = 0.0;
    tspec.scale = 1.0;
    GrfField raw(tspec);
    GrfEval e = raw.sample(disc.quads.domain, false);
    tmin = std::min(tmin, e.value.minCoeff());
    tmax = std::max(tmax, e.value.maxCoeff());
  }
  const double a = 0.97 / std::max(tmax - tmin, 1e-12);
  const double b = 0.02 - a * tmin;

  Dataset ds;
  ds.family = PdeFamily::SteadyDiffusion;
  ds.seed = seed;
  ds.name = "B";
  ds.samples.reserve(n);
  for (int i = 0; i < n; ++i) {
    tspec.seed = sample_seed(seed + i, 0, 1);
    tspec.offset = b;
    tspec.scale = a;
    GrfField theta(tspec);
    GrfSpec uspec;
    uspec.length_scale = 0.2;
    uspec.spatial_dim = 2;
    uspec.features = features;
    uspec.seed = sample_seed(seed + i, 0, 2);
    GrfField uhat(uspec);

    // First pass to measure ||f|| with unit data scale, then normalize all
    // data fields uniformly so that ||f|| = 1/2.
    SolutionEval ue{true, 1.0, &uhat};
    ProblemSample probe = realize_steady_impl(theta, ue, disc, false, 0.0, 1.0);
    const double fnorm = std::sqrt(
        (probe.fields.f.array().square() * disc.quads.domain.weights.array()).sum());
    const double scale = 0.5 / std::max(fnorm, 1e-300);
    SolutionEval scaled{true, scale, &uhat};
    ds.samples.push_back(realize_steady_impl(theta, scaled, disc, false, 0.0, 1.0));
  }
  return ds;
}

Dataset make_dataset_A_surrogate(int n, std::uint64_t seed, const SteadyDiscretization& disc,
                                 const DatasetAOptions& opts) {
  if (n < 1) throw std::invalid_argument("make_dataset_A_surrogate: n >= 1");
  SteadyDiscretization fine =
      make_steady_discretization(opts.fine_n, 3, opts.fine_ppc, /*eval_ppc=*/3);

  // Batch ranges for the affine maps: theta and f onto [0.02, 0.99], eta
  // onto [-1, 1].
  auto batch_range = [&](std::uint64_t stream, double lambda, double* lo, double* hi) {
    *lo = 1e300;
    *hi = -1e300;
    GrfSpec spec;
    spec.length_scale = lambda;
    spec.spatial_dim = 2;
    spec.features = opts.features;
    for (int i = 0; i < n; ++i) {
      spec.seed = sample_seed(seed + i, 0, stream);
      GrfField raw(spec);
      GrfEval e = raw.sample(fine.quads.domain, false);
      *lo = std::min(*lo, e.value.minCoeff());
      *hi = std::max(*hi, e.value.maxCoeff());
    }
  };
  double th_lo, th_hi, f_lo, f_hi, e_lo, e_hi;
  batch_range(1, 0.4, &th_lo, &th_hi);
  batch_range(2, 0.2, &f_lo, &f_hi);
  batch_range(3, 0.3, &e_lo, &e_hi);
  const double th_a = 0.97 / std::max(th_hi - th_lo, 1e-12), th_b = 0.02 - th_a * th_lo;
  const double f_a = 0.97 / std::max(f_hi - f_lo, 1e-12), f_b = 0.02 - f_a * f_lo;
  const double e_a = 2.0 / std::max(e_hi - e_lo, 1e-12), e_b = -1.0 - e_a * e_lo;

  Dataset ds;
  ds.family = PdeFamily::SteadyDiffusion;
  ds.seed = seed;
  ds.name = "A";
  ds.samples.reserve(n);
  for (int i = 0; i < n; ++i) {
    for (std::uint64_t retry = 0;; ++retry) {
      const std::uint64_t si = seed + i + retry * 104729;
      GrfSpec spec;
      spec.spatial_dim = 2;
      spec.features = opts.features;

      spec.length_scale = 0.4;
      spec.seed = sample_seed(si, 0, 1);
      spec.offset = th_b;
      spec.scale = th_a;
      GrfField theta(spec);

      spec.length_scale = 0.2;
      spec.seed = sample_seed(si, 0, 2);
      spec.offset = f_b;
      spec.scale = f_a;
      GrfField ffield(spec);

      spec.length_scale = 0.3;
      spec.seed = sample_seed(si, 0, 3);
      spec.offset = e_b;
      spec.scale = e_a;
      GrfField efield(spec);

      ProblemSample s;
      s.family = PdeFamily::SteadyDiffusion;
      s.provenance = Provenance::FemSolved;
      s.fields.theta = theta.sample(disc.quads.domain, false).value;
      s.fields.theta_gd_left = theta.sample(disc.quads.gd_left, false).value;
      s.fields.theta_gd_right = theta.sample(disc.quads.gd_right, false).value;
      s.fields.f = ffield.sample(disc.quads.domain, false).value;
      s.fields.eta_bottom = efield.sample(disc.quads.gn_bottom, false).value;
      s.fields.eta_top = efield.sample(disc.quads.gn_top, false).value;
      s.fields.g_left = VectorXd::Zero(disc.quads.gd_left.size());
      s.fields.g_right = VectorXd::Zero(disc.quads.gd_right.size());

      // Fine-basis Galerkin reference.
      SteadyFields ff;
      ff.theta = theta.sample(fine.quads.domain, false).value;
      ff.theta_gd_left = theta.sample(fine.quads.gd_left, false).value;
      ff.theta_gd_right = theta.sample(fine.quads.gd_right, false).value;
      ff.f = ffield.sample(fine.quads.domain, false).value;
      ff.eta_bottom = efield.sample(fine.quads.gn_bottom, false).value;
      ff.eta_top = efield.sample(fine.quads.gn_top, false).value;
      ff.g_left = VectorXd::Zero(fine.quads.gd_left.size());
      ff.g_right = VectorXd::Zero(fine.quads.gd_right.size());
      if (ff.theta.minCoeff() <= 0.0) {
        std::cerr << "[dataset A] redraw sample " << i << " (theta not positive)\n";
        continue;
      }
      try {
        AssembledOperator op = assemble_steady(ff, fine.basis, fine.quads);
        VectorXd coeffs = fem_solve(op, /*stabilized=*/false);
        s.u_ref = fine.basis.evaluate(coeffs, disc.eval);
      } catch (const std::exception& e) {
        if (retry > 10) throw;
        std::cerr << "[dataset A] solver failure on sample " << i << ": " << e.what()
                  << "; regenerating\n";
        continue;
      }
      ds.samples.push_back(std::move(s));
      break;
    }
  }
  return ds;
}

namespace {

// Segment-valued GRF for dataset E boundary data: an independent 1D field
// per boundary segment, evaluated on the segment's arclength coordinate.
VectorXd segment_grf(const QuadratureRule& rule, int coord, double lambda, double scl,
                     std::uint64_t seed, int features) {
  GrfSpec spec;
  spec.length_scale = lambda;
  spec.spatial_dim = 1;
  spec.features = features;
  spec.seed = seed;
  spec.scale = scl;
  GrfField f(spec);
  RowMatrixXd pts(rule.size(), 1);
  for (int q = 0; q < rule.size(); ++q) pts(q, 0) = rule.points(q, coord);
  return f.sample(pts, false).value;
}

}  // namespace

Dataset make_dataset_E(int n, std::uint64_t seed, const SteadyDiscretization& disc,
                       const DatasetEOptions& opts) {
  if (n < 1) throw std::invalid_argument("make_dataset_E: n >= 1");
  SteadyDiscretization fine = make_steady_discretization(opts.fine_n, 3, opts.fine_ppc, 3);

  Dataset ds;
  ds.family = PdeFamily::AdvectionDiffusion;
  ds.seed = seed;
  ds.name = "E";
  ds.samples.reserve(n);
  for (int i = 0; i < n; ++i) {
    for (std::uint64_t retry = 0;; ++retry) {
      const std::uint64_t si = seed + i + retry * 104729;
      std::mt19937_64 rng(sample_seed(si, 0, 0));
      std::normal_distribution<double> cdist(0.0, 5.0);
      const double cx = cdist(rng), cy = cdist(rng);

      GrfSpec tspec;
      tspec.length_scale = 0.4;
      tspec.spatial_dim = 2;
      tspec.features = opts.features;
      tspec.seed = sample_seed(si, 0, 1);
      GrfField theta_hat(tspec);
      GrfSpec fspec = tspec;
      fspec.seed = sample_seed(si, 0, 2);
      GrfField ffield(fspec);

      // theta = 0.1 log(exp(0.01) + exp(theta_hat)) keeps theta > 0.001.
      auto softplus = [](const VectorXd& v) {
        VectorXd out(v.size());
        for (int q = 0; q < v.size(); ++q)
          out(q) = 0.1 * std::log(std::exp(0.01) + std::exp(v(q)));
        return out;
      };
      auto softplus_weight = [](const VectorXd& v) {
        VectorXd out(v.size());
        for (int q = 0; q < v.size(); ++q) {
          const double e = std::exp(v(q));
          out(q) = e / (std::exp(0.01) + e);
        }
        return out;
      };

      auto fill = [&](const SteadyDiscretization& dd, SteadyFields& f) {
        GrfEval th = theta_hat.sample(dd.quads.domain, true);
        f.theta = softplus(th.value);
        VectorXd w = softplus_weight(th.value);
        f.dtheta_x = 0.1 * w.cwiseProduct(th.grad.col(0));
        f.dtheta_y = 0.1 * w.cwiseProduct(th.grad.col(1));
        f.theta_gd_left = softplus(theta_hat.sample(dd.quads.gd_left, false).value);
        f.theta_gd_right = softplus(theta_hat.sample(dd.quads.gd_right, false).value);
        f.f = ffield.sample(dd.quads.domain, false).value;
        f.cx = VectorXd::Constant(dd.quads.domain.size(), cx);
        f.cy = VectorXd::Constant(dd.quads.domain.size(), cy);
        f.cx_gd_left = VectorXd::Constant(dd.quads.gd_left.size(), cx);
        f.cx_gd_right = VectorXd::Constant(dd.quads.gd_right.size(), cx);
        f.cy_gn_bottom = VectorXd::Constant(dd.quads.gn_bottom.size(), cy);
        f.cy_gn_top = VectorXd::Constant(dd.quads.gn_top.size(), cy);
        f.eta_bottom = segment_grf(dd.quads.gn_bottom, 0, 0.4, 0.5, sample_seed(si, 0, 4),
                                   opts.features);
        f.eta_top = segment_grf(dd.quads.gn_top, 0, 0.4, 0.5, sample_seed(si, 0, 5),
                                opts.features);
        f.g_left = segment_grf(dd.quads.gd_left, 1, 0.4, 0.005, sample_seed(si, 0, 6),
                               opts.features);
        f.g_right = segment_grf(dd.quads.gd_right, 1, 0.4, 0.005, sample_seed(si, 0, 7),
                                opts.features);
      };

      ProblemSample s;
      s.family = PdeFamily::AdvectionDiffusion;
      s.provenance = Provenance::FemSolved;
      fill(disc, s.fields);

      SteadyFields ff;
      fill(fine, ff);
      try {
        AssembledOperator op = assemble_advection_diffusion(ff, fine.basis, fine.quads,
                                                            /*supg=*/true);
        VectorXd coeffs = fem_solve(op, /*stabilized=*/false);
        s.u_ref = fine.basis.evaluate(coeffs, disc.eval);
      } catch (const std::exception& e) {
        if (retry > 10) throw;
        std::cerr << "[dataset E] solver failure on sample " << i << ": " << e.what()
                  << "; regenerating\n";
        continue;
      }
      ds.samples.push_back(std::move(s));
      break;
    }
  }
  return ds;
}

double SpaceTimeManufactured::u_at(double t, double x, double y) const {
  const double p[3] = {t, x, y};
  return u.value(p);
}

namespace {

RowMatrixXd global_points(const QuadratureRule& rule, int slab, double dt) {
  RowMatrixXd pts = rule.points;
  for (int q = 0; q < pts.rows(); ++q) pts(q, 0) = (slab + pts(q, 0)) * dt;
  return pts;
}

}  // namespace

SpaceTimeFields SpaceTimeManufactured::slab_fields(const SpaceTimeDiscretization& disc,
                                                   int slab) const {
  SpaceTimeFields f;
  const double dt = disc.dt;
  {
    RowMatrixXd pts = global_points(disc.quads.domain, slab, dt);
    GrfEval th = theta.sample(pts, true);
    GrfEval uu = u.sample(pts, true);
    f.theta = th.value;
    // f = u_t - grad(theta).grad(u) - theta lap(u); gradients exclude time.
    f.f = uu.dt -
          (th.grad.col(1).cwiseProduct(uu.grad.col(1)) +
           th.grad.col(2).cwiseProduct(uu.grad.col(2))) -
          th.value.cwiseProduct(uu.laplacian);
  }
  auto dirichlet = [&](const QuadratureRule& rule, VectorXd& theta_out, VectorXd& g_out) {
    RowMatrixXd pts = global_points(rule, slab, dt);
    GrfEval th = theta.sample(pts, false);
    GrfEval uu = u.sample(pts, false);
    theta_out = th.value;
    g_out = th.value.cwiseProduct(uu.value);
  };
  dirichlet(disc.quads.gd_left, f.theta_gd_left, f.g_left);
  dirichlet(disc.quads.gd_right, f.theta_gd_right, f.g_right);
  auto neumann = [&](const QuadratureRule& rule, VectorXd& eta_out) {
    RowMatrixXd pts = global_points(rule, slab, dt);
    GrfEval th = theta.sample(pts, false);
    GrfEval uu = u.sample(pts, true);
    eta_out.resize(rule.size());
    for (int q = 0; q < rule.size(); ++q)
      eta_out(q) = th.value(q) * rule.normals(q, 2) * uu.grad(q, 2);
  };
  neumann(disc.quads.gn_bottom, f.eta_bottom);
  neumann(disc.quads.gn_top, f.eta_top);
  if (slab == 0) {
    RowMatrixXd pts = global_points(disc.quads.initial, 0, dt);
    f.u0 = u.sample(pts, false).value;
  }
  return f;
}

VectorXd SpaceTimeManufactured::slab_u_ref(const SpaceTimeDiscretization& disc, int slab) const {
  return u.sample(global_points(disc.eval, slab, disc.dt), false).value;
}

void SpaceTimeManufactured::mass_energy(double t, const QuadratureRule& xy_rule, double* mass,
                                        double* energy) const {
  RowMatrixXd pts(xy_rule.size(), 3);
  for (int q = 0; q < xy_rule.size(); ++q)
    pts.row(q) << t, xy_rule.points(q, 0), xy_rule.points(q, 1);
  VectorXd v = u.sample(pts, false).value;
  if (mass) *mass = (v.array() * xy_rule.weights.array()).sum();
  if (energy) *energy = 0.5 * (v.array().square() * xy_rule.weights.array()).sum();
}

ProblemSample SpaceTimeManufactured::realize(const SpaceTimeDiscretization& disc) const {
  ProblemSample s;
  s.family = PdeFamily::SpaceTimeDiffusion;
  s.provenance = Provenance::Manufactured;
  s.st_fields = slab_fields(disc, 0);
  s.u_ref = slab_u_ref(disc, 0);
  return s;
}

Dataset make_dataset_D(int n, std::uint64_t seed, const SpaceTimeDiscretization& disc,
                       const GrfDatasetOptions& opts) {
  if (n < 1) throw std::invalid_argument("make_dataset_D: n >= 1");
  Dataset ds;
  ds.family = PdeFamily::SpaceTimeDiffusion;
  ds.seed = seed;
  ds.dt = disc.dt;
  ds.name = "D";
  ds.samples.reserve(n);
  for (int i = 0; i < n; ++i)
    ds.samples.push_back(draw_manufactured_D(seed + i, opts).realize(disc));
  return ds;
}

}  // namespace ngo
