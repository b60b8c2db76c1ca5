// Acceptance suite: end-to-end checks of the operator-learning pipeline.
// Each criterion prints one PASS/FAIL line; the exit code is the number of
// failed criteria. Criterion numbers can be passed as arguments to run a
// subset.
#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <random>
#include <set>
#include <sstream>

#include "greens_oracle.hpp"
#include "ngo/krylov.hpp"
#include "ngo/ngo.hpp"
#include "ngo/solvers.hpp"
#include "ngo/timestepper.hpp"
#include "test_helpers.hpp"

using namespace ngo;
using namespace ngo::testing;

namespace {

struct Criterion {
  int id;
  std::string name;
  std::function<bool(std::ostream&)> run;
};

double now_s() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

GrfDatasetOptions steady_opts(double lo = 0.5, double hi = 1.0) {
  GrfDatasetOptions o;
  o.features = 512;
  o.lambda_lo = lo;
  o.lambda_hi = hi;
  return o;
}

GrfDatasetOptions st_opts() {
  GrfDatasetOptions o;
  o.features = 128;
  return o;
}

SteadyDiscretization& disc100() {
  static SteadyDiscretization d = make_steady_discretization(10, 3, 6, 4);
  return d;
}

SpaceTimeDiscretization& disc_st() {
  static SpaceTimeDiscretization d = make_space_time_discretization(10, 1e-3, 2, 3, 4, 3);
  return d;
}

// -------- trained models (built once, reused across criteria) --------

NgoModel& model_ngo_trained() {
  static NgoModel model = [] {
    std::cout << "  [fixture] training the Neumann-preconditioned operator (2000 samples)...\n";
    Dataset train = make_dataset_C(2000, 90001, disc100(), steady_opts());
    NgoTrainSetup setup;
    setup.variant = NgoVariant::Model;
    setup.hidden = {24};
    setup.neumann = true;
    setup.train.epochs = 250;
    setup.train.batch_size = 100;
    setup.train.seed = 7;
    NgoTrainOutput out = train_model_ngo(train, disc100(), setup);
    std::cout << "  [fixture] done; best validation error " << out.history.best_val << "\n";
    return out.model;
  }();
  return model;
}

NgoModel& data_free_trained() {
  static NgoModel model = [] {
    std::cout << "  [fixture] training the data-free operator (400 samples)...\n";
    Dataset train = make_dataset_C(400, 91001, disc100(), steady_opts());
    for (auto& s : train.samples) s.u_ref.resize(0);  // no solution data used
    NgoTrainSetup setup;
    setup.variant = NgoVariant::DataFree;
    setup.hidden = {16};
    setup.neumann = true;
    setup.train.epochs = 200;
    setup.train.batch_size = 100;
    setup.train.seed = 11;
    NgoTrainOutput out = train_data_free_ngo(train, disc100(), setup);
    std::cout << "  [fixture] done; best validation loss " << out.history.best_val << "\n";
    return out.model;
  }();
  return model;
}

NgoModel& se_model_trained() {
  static NgoModel model = [] {
    std::cout << "  [fixture] training a scale-equivariant operator (300 samples)...\n";
    Dataset train = make_dataset_C(300, 92001, disc100(), steady_opts());
    NgoTrainSetup setup;
    setup.variant = NgoVariant::Model;
    setup.hidden = {8};
    setup.scale_equivariant = true;
    setup.train.epochs = 120;
    setup.train.batch_size = 50;
    setup.train.seed = 13;
    NgoTrainOutput out = train_model_ngo(train, disc100(), setup);
    std::cout << "  [fixture] done\n";
    return out.model;
  }();
  return model;
}

NgoModel& data_st_trained() {
  static NgoModel model = [] {
    std::cout << "  [fixture] training a space-time data operator (600 slabs)...\n";
    Dataset train = make_dataset_D(600, 93001, disc_st(), st_opts());
    NgoTrainSetup setup;
    setup.variant = NgoVariant::Data;
    setup.hidden = {8};
    setup.norm_scale_S = 0.8;
    setup.train.epochs = 150;
    setup.train.batch_size = 100;
    setup.train.seed = 17;
    NgoTrainOutput out = train_ngo_space_time(train, disc_st(), setup);
    std::cout << "  [fixture] done; best validation error " << out.history.best_val << "\n";
    return out.model;
  }();
  return model;
}

// -------- shared helpers --------

double fem_error(const ProblemSample& s, const SteadyDiscretization& d) {
  AssembledOperator op = assemble_steady(s.fields, d.basis, d.quads);
  return rel_l2(d.eval_table * fem_solve(op, false), s.u_ref, d.eval.weights);
}

double projection_error(const ProblemSample& s, const SteadyDiscretization& d) {
  return project_L2(s.u_ref, d.basis, d.eval).rel_error;
}

std::vector<double> mean_errors(const Dataset& ds, const SteadyDiscretization& d,
                                const NgoModel* model) {
  double proj = 0, fem = 0, ngo = 0;
  std::vector<double> per;
  if (model) ngo = ngo_eval_error(*model, ds, d, &per);
  for (const auto& s : ds.samples) {
    proj += projection_error(s, d);
    fem += fem_error(s, d);
  }
  return {proj / ds.size(), fem / ds.size(), ngo};
}

// theta = 1 + amp * tanh(grf): bounded fluctuation with adjustable strength.
SteadyFields bounded_theta_fields(double amp, std::uint64_t seed,
                                  const SteadyDiscretization& d) {
  GrfSpec spec;
  spec.length_scale = 0.45;
  spec.seed = seed;
  spec.features = 256;
  GrfField raw(spec);
  SteadyClosures c;
  c.theta = [&](double x, double y) {
    const double p[2] = {x, y};
    return 1.0 + amp * std::tanh(raw.value(p));
  };
  return make_steady_fields(c, d.quads);
}

// One NGO-driven slab step used by the stability/conservation criteria.
struct StSession {
  const NgoModel* model;
  const SpaceTimeDiscretization* disc;
  PowerIterWorkspace scale_ws;
  PowerIterWorkspace check_ws;

  MatrixXd system_matrix(const AssembledOperator& op, const SpaceTimeFields& fields) {
    NgoInputs in = make_ngo_inputs_space_time(*model, op, fields, *disc);
    return ngo_system_matrix(*model, in);
  }
};

}  // namespace

// ---------------------------------------------------------------------------

bool criterion_1(std::ostream& os) {
  const double t0 = now_s();
  SteadyDiscretization& d = disc100();
  NgoModel oracle;
  oracle.variant = NgoVariant::Model;
  oracle.oracle_exact_inverse = true;
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    ProblemSample s = draw_manufactured_C(40001 + i, steady_opts()).realize(d);
    AssembledOperator op = assemble_steady(s.fields, d.basis, d.quads);
    NgoInputs in = make_ngo_inputs_steady(oracle, op, s.fields, d);
    VectorXd u_ngo = d.eval_table * ngo_solution_coeffs(oracle, in);
    VectorXd u_fem = d.eval_table * fem_solve(op, false);
    worst = std::max(worst, rel_l2(u_ngo, u_fem, d.eval.weights));
  }
  const double dt = now_s() - t0;
  os << "max relative deviation " << worst << " over 100 samples, " << dt << " s";
  return worst < 1e-10 && dt < 60.0;
}

bool criterion_2(std::ostream& os) {
  const double t0 = now_s();
  SteadyDiscretization& d = disc100();
  NgoModel& df = data_free_trained();
  bool ok = true;
  std::ostringstream detail;
  for (auto [lo, hi, seed] : std::vector<std::tuple<double, double, int>>{
           {0.5, 1.0, 41001}, {0.3, 0.3, 41501}, {0.1, 0.1, 41801}}) {
    Dataset set = make_dataset_C(100, seed, d, steady_opts(lo, hi));
    std::vector<double> m = mean_errors(set, d, &df);
    detail << " [lambda " << lo << ": proj " << m[0] << ", fem " << m[1] << ", data-free "
           << m[2] << "]";
    ok = ok && m[0] <= m[1] + 1e-12 && m[2] >= m[1] - 1e-6;
  }
  const double dt = now_s() - t0;
  os << detail.str() << ", " << dt << " s";
  return ok && dt < 600.0;
}

bool criterion_3(std::ostream& os) {
  SteadyDiscretization& d = disc100();
  SteadyClosures unit;
  AssembledOperator op0 = assemble_steady(make_steady_fields(unit, d.quads), d.basis, d.quads);
  MatrixXd f0inv = op0.F.partialPivLu().inverse();
  MatrixXd zero = MatrixXd::Zero(op0.F.rows(), op0.F.cols());

  int kept = 0;
  double worst_dev = 0.0;
  for (int i = 0; kept < 50 && i < 80; ++i) {
    const double amp = 0.12 + 0.50 * (i % 50) / 49.0;
    SteadyFields fields = bounded_theta_fields(amp, 42001 + i, d);
    AssembledOperator op = assemble_steady(fields, d.basis, d.quads);
    MatrixXd delta = op.F - op0.F;
    MatrixXd b = -delta * f0inv;
    const double rho = b.eigenvalues().cwiseAbs().maxCoeff();
    if (rho >= 0.9 || rho < 0.05) continue;
    ++kept;
    MatrixXd finv = op.F.partialPivLu().inverse();
    std::vector<double> err;
    for (int k = 0; k <= 10; ++k)
      err.push_back((neumann_apply(f0inv, delta, k, zero) - finv).norm());
    int k_hi = 10;
    while (k_hi > 4 && err[k_hi] < 1e-11 * err[0]) --k_hi;
    const int k_lo = std::max(2, k_hi - 6);
    const double ratio = std::pow(err[k_hi] / err[k_lo], 1.0 / (k_hi - k_lo));
    worst_dev = std::max(worst_dev, std::abs(ratio - rho) / rho);
  }

  // K = 1, zero net: the ansatz equals the two-term truncated series exactly.
  double worst_trunc = 0.0;
  NgoModel neumann_model;
  neumann_model.variant = NgoVariant::Model;
  neumann_model.neumann = true;
  neumann_model.neumann_K = 1;
  neumann_model.F0 = op0.F;
  neumann_model.F0_inverse = f0inv;
  neumann_model.net = make_mlp({op0.size() * op0.size(), 1, op0.size() * op0.size()}, 1);
  for (auto& w : neumann_model.net.weights) w.setZero();
  for (int i = 0; i < 5; ++i) {
    ProblemSample s = draw_manufactured_C(43001 + i, steady_opts()).realize(d);
    AssembledOperator op = assemble_steady(s.fields, d.basis, d.quads);
    NgoInputs in = make_ngo_inputs_steady(neumann_model, op, s.fields, d);
    VectorXd u_ngo = ngo_solution_coeffs(neumann_model, in);
    // independent route: u = F0^-1 d + F0^-1 (-dF F0^-1) d via vector solves
    VectorXd v = f0inv * in.d;
    VectorXd u_series = v - f0inv * ((op.F - op0.F) * v);
    worst_trunc =
        std::max(worst_trunc, (u_ngo - u_series).norm() / std::max(u_series.norm(), 1e-300));
  }
  os << kept << " samples, worst ratio deviation " << worst_dev * 100 << "% of rho"
     << ", worst K=1 ansatz deviation " << worst_trunc;
  return kept >= 50 && worst_dev < 0.2 && worst_trunc < 1e-12;
}

bool criterion_4(std::ostream& os) {
  const double t0 = now_s();
  SteadyDiscretization& d = disc100();
  NgoModel& model = model_ngo_trained();

  Dataset in_dist = make_dataset_C(300, 94001, d, steady_opts());
  const double err_in = ngo_eval_error(model, in_dist, d);

  Dataset ood = make_dataset_C(300, 94501, d, steady_opts(0.1, 0.1));
  const double err_ood = ngo_eval_error(model, ood, d);
  double proj_ood = 0.0;
  for (const auto& s : ood.samples) proj_ood += projection_error(s, d);
  proj_ood /= ood.size();

  const double dt = now_s() - t0;
  os << "in-distribution " << err_in * 100 << "%, out-of-distribution " << err_ood * 100
     << "% vs projection " << proj_ood * 100 << "%, " << dt << " s";
  return err_in < 0.05 && err_ood < 3.0 * proj_ood && dt < 7200.0;
}

bool criterion_5(std::ostream& os) {
  SteadyDiscretization& d = disc100();
  NgoModel& model = se_model_trained();
  NgoModel plain = model;
  plain.scale_equivariant = false;

  double worst_inv = 0.0, least_plain_dev = 1e300;
  for (int i = 0; i < 10; ++i) {
    ProblemSample s = draw_manufactured_C(95001 + i, steady_opts()).realize(d);
    AssembledOperator op = assemble_steady(s.fields, d.basis, d.quads);
    NgoInputs in = make_ngo_inputs_steady(model, op, s.fields, d);
    MatrixXd a1 = ngo_system_matrix(model, in);
    MatrixXd p1 = ngo_system_matrix(plain, in);
    for (double c : {0.1, 0.5, 2.0, 10.0}) {
      NgoInputs inc = in;
      inc.F = c * in.F;  // assembly is linear in theta
      MatrixXd ac = ngo_system_matrix(model, inc);
      worst_inv = std::max(worst_inv, (c * ac - a1).norm() / a1.norm());
      MatrixXd pc = ngo_system_matrix(plain, inc);
      least_plain_dev = std::min(least_plain_dev, (c * pc - p1).norm() / p1.norm());
    }
  }
  os << "wrapped worst deviation " << worst_inv << "; unwrapped least deviation "
     << least_plain_dev;
  return worst_inv < 1e-10 && least_plain_dev > 1e-2;
}

bool criterion_6(std::ostream& os) {
  SpaceTimeDiscretization& d = disc_st();
  NgoModel& model = data_st_trained();
  const int s = d.spatial_count();
  bool ok = true;
  std::ostringstream detail;

  // (a) scaled rollouts: every emitted step matrix obeys the norm bound.
  double worst_norm = 0.0;
  for (int sample = 0; sample < 2; ++sample) {
    SpaceTimeManufactured prob = draw_manufactured_D(96001 + sample, st_opts());
    StSession ses{&model, &d, {}, {}};
    RowMatrixXd p0 = d.quads.initial.points;
    VectorXd trace;
    {
      TensorBasis spatial = make_tensor_basis({d.basis.factor(1), d.basis.factor(2)});
      QuadratureRule xy = make_quadrature(QuadKind::Gauss, {7, 7}, 4);
      RowMatrixXd pts(xy.size(), 3);
      for (int q = 0; q < xy.size(); ++q) pts.row(q) << 0.0, xy.points(q, 0), xy.points(q, 1);
      trace = project_L2(prob.u.sample(pts, false).value, spatial, xy).coeffs;
    }
    for (int i = 0; i < 1000; ++i) {
      SpaceTimeFields fields = prob.slab_fields(d, i);
      AssembledOperator op = assemble_space_time(fields, d.basis, d.quads, i, d.dt, &trace);
      MatrixXd a = ses.system_matrix(op, fields);
      NormScalingResult ns = norm_scaling(a, op.spatial_mass, 0.8, ses.scale_ws);
      const double post = generalized_operator_norm(
          ns.a_scaled.bottomLeftCorner(s, s) * op.spatial_mass, op.spatial_mass, ses.check_ws);
      worst_norm = std::max(worst_norm, post);
      VectorXd full = slab_step(ns.a_scaled, op, false);
      if (!full.allFinite()) {
        ok = false;
        break;
      }
      trace = full.tail(s);
    }
  }
  detail << "max post-scaling norm " << worst_norm;
  ok = ok && worst_norm <= 0.8 + 2e-3;

  // (b) homogeneous rollouts: non-increasing energy over 1000 steps.
  bool decay_ok = true;
  for (int sample = 0; sample < 2; ++sample) {
    SpaceTimeManufactured prob = draw_manufactured_D(96101 + sample, st_opts());
    StSession ses{&model, &d, {}, {}};
    VectorXd trace(s);
    std::mt19937_64 rng(55 + sample);
    std::normal_distribution<double> dn(0.0, 1.0);
    for (int i = 0; i < s; ++i) trace(i) = dn(rng);
    double energy = 1e300;
    for (int i = 0; i < 1000; ++i) {
      SpaceTimeFields fields = prob.slab_fields(d, i);
      fields.f.setZero();
      fields.eta_bottom.setZero();
      fields.eta_top.setZero();
      fields.g_left.setZero();
      fields.g_right.setZero();
      AssembledOperator op = assemble_space_time(fields, d.basis, d.quads, i, d.dt, &trace);
      MatrixXd a = ses.system_matrix(op, fields);
      NormScalingResult ns = norm_scaling(a, op.spatial_mass, 0.8, ses.scale_ws);
      VectorXd full = slab_step(ns.a_scaled, op, false);
      trace = full.tail(s);
      const double e = 0.5 * trace.dot(op.spatial_mass * trace);
      if (i > 0 && e > energy * (1.0 + 1e-12)) {
        decay_ok = false;
        break;
      }
      energy = e;
    }
  }
  detail << "; homogeneous energy decay " << (decay_ok ? "holds" : "violated");
  ok = ok && decay_ok;

  // (c) the unscaled operator blows up on at least one sample.
  bool blowup = false;
  for (int sample = 0; sample < 8 && !blowup; ++sample) {
    SpaceTimeManufactured prob = draw_manufactured_D(96201 + sample, st_opts());
    StSession ses{&model, &d, {}, {}};
    VectorXd trace(s);
    std::mt19937_64 rng(77 + sample);
    std::normal_distribution<double> dn(0.0, 1.0);
    for (int i = 0; i < s; ++i) trace(i) = dn(rng);
    double e0 = -1.0;
    for (int i = 0; i < 1000; ++i) {
      SpaceTimeFields fields = prob.slab_fields(d, i);
      fields.f.setZero();
      fields.eta_bottom.setZero();
      fields.eta_top.setZero();
      fields.g_left.setZero();
      fields.g_right.setZero();
      AssembledOperator op = assemble_space_time(fields, d.basis, d.quads, i, d.dt, &trace);
      MatrixXd a = ses.system_matrix(op, fields);  // no scaling layer
      VectorXd full = slab_step(a, op, false);
      trace = full.tail(s);
      const double e = 0.5 * trace.dot(op.spatial_mass * trace);
      if (!std::isfinite(e)) {
        blowup = true;
        break;
      }
      if (e0 < 0) e0 = e;
      if (e > 10.0 * e0) {
        blowup = true;
        break;
      }
    }
  }
  detail << "; unscaled blow-up " << (blowup ? "observed" : "not observed");
  ok = ok && blowup;

  os << detail.str();
  return ok;
}

bool criterion_7(std::ostream& os) {
  SpaceTimeDiscretization& d = disc_st();
  NgoModel& model = data_st_trained();
  const int s = d.spatial_count();
  const int steps = 150;
  double worst_mass_residual = 0.0;
  int dominated = 0;
  const int n_samples = 20;
  VectorXd step_sum_plain = VectorXd::Zero(steps);
  VectorXd step_sum_corr = VectorXd::Zero(steps);

  for (int sample = 0; sample < n_samples; ++sample) {
    SpaceTimeManufactured prob = draw_manufactured_D(97001 + sample, st_opts());
    StSession ses{&model, &d, {}, {}};
    StSession ses2{&model, &d, {}, {}};
    TensorBasis spatial = make_tensor_basis({d.basis.factor(1), d.basis.factor(2)});
    QuadratureRule xy = make_quadrature(QuadKind::Gauss, {7, 7}, 4);
    RowMatrixXd pts(xy.size(), 3);
    for (int q = 0; q < xy.size(); ++q) pts.row(q) << 0.0, xy.points(q, 0), xy.points(q, 1);
    VectorXd trace_plain = project_L2(prob.u.sample(pts, false).value, spatial, xy).coeffs;
    VectorXd trace_corr = trace_plain;

    double max_err_plain = 0.0, max_err_corr = 0.0;
    for (int i = 0; i < steps; ++i) {
      SpaceTimeFields fields = prob.slab_fields(d, i);
      double mass_true;
      prob.mass_energy((i + 1) * d.dt, xy, &mass_true, nullptr);

      // uncorrected trajectory
      {
        AssembledOperator op =
            assemble_space_time(fields, d.basis, d.quads, i, d.dt, &trace_plain);
        MatrixXd a = ses.system_matrix(op, fields);
        NormScalingResult ns = norm_scaling(a, op.spatial_mass, 0.8, ses.scale_ws);
        VectorXd full = slab_step(ns.a_scaled, op, false);
        trace_plain = full.tail(s);
        const double err = std::abs(full.dot(op.trace_integral) - mass_true);
        step_sum_plain(i) += err;
        max_err_plain = std::max(max_err_plain, err);
      }
      // corrected trajectory
      {
        AssembledOperator op =
            assemble_space_time(fields, d.basis, d.quads, i, d.dt, &trace_corr);
        MatrixXd a = ses2.system_matrix(op, fields);
        NormScalingResult ns = norm_scaling(a, op.spatial_mass, 0.8, ses2.scale_ws);
        const double prev_energy = 0.5 * trace_corr.dot(op.spatial_mass * trace_corr);
        VectorXd full = slab_step(ns.a_scaled, op, false);
        ConservationTerms terms{op.cons_c, op.cons_C_sources, op.cons_h};
        ConservationOutcome co = conservation_correct(full, terms, op.spatial_mass, prev_energy);
        worst_mass_residual = std::max(
            worst_mass_residual, std::abs(co.corrected.dot(terms.c) - terms.C));
        trace_corr = co.corrected.tail(s);
        const double err = std::abs(co.corrected.dot(op.trace_integral) - mass_true);
        step_sum_corr(i) += err;
        max_err_corr = std::max(max_err_corr, err);
      }
    }
    if (max_err_corr <= max_err_plain + 1e-12) ++dominated;
  }
  // Trajectory ordering over the sample set: the mean corrected mass-error
  // curve stays below the uncorrected one at every step.
  bool mean_dominates = true;
  for (int i = 0; i < steps; ++i)
    mean_dominates = mean_dominates && step_sum_corr(i) <= step_sum_plain(i) + 1e-12;
  os << "worst per-step mass-law residual " << worst_mass_residual
     << "; mean corrected trajectory below uncorrected at every step: "
     << (mean_dominates ? "yes" : "no") << " (per-sample domination " << dominated << "/"
     << n_samples << ")";
  return worst_mass_residual < 1e-10 && mean_dominates;
}

bool criterion_8(std::ostream& os) {
  const double t0 = now_s();
  SteadyDiscretization& d = disc100();
  const double h = 1.0 / 49.0;
  NgoModel oracle;
  oracle.variant = NgoVariant::Model;
  oracle.oracle_exact_inverse = true;

  double it_none = 0, it_bj = 0, it_ngo = 0;
  bool counts_equal = true, bicg_ok = true;
  const int n_systems = 50;
  for (int i = 0; i < n_systems; ++i) {
    SteadyManufactured m = draw_manufactured_C(98001 + i, steady_opts());
    FdSystem fd = fd_discretize([&](double x, double y) { return m.theta_at(x, y); },
                                [&](double x, double y) { return m.f_at(x, y); },
                                [&](double x, double y) { return m.eta_at(x, y, -1.0); },
                                [&](double x, double y) { return m.eta_at(x, y, 1.0); },
                                [&](double x, double y) { return m.u_at(x, y); }, h);
    LinearMap a = [&fd](const VectorXd& v) { return fd.apply(v); };
    LinearMap bj = block_jacobi(fd);
    SteadyFields fields;
    fields.theta = m.theta.sample(d.quads.domain, false).value;
    fields.theta_gd_left = m.theta.sample(d.quads.gd_left, false).value;
    fields.theta_gd_right = m.theta.sample(d.quads.gd_right, false).value;
    fields.f = VectorXd::Zero(d.quads.domain.size());
    fields.eta_bottom = VectorXd::Zero(d.quads.gn_bottom.size());
    fields.eta_top = VectorXd::Zero(d.quads.gn_top.size());
    fields.g_left = VectorXd::Zero(d.quads.gd_left.size());
    fields.g_right = VectorXd::Zero(d.quads.gd_right.size());
    auto pre = make_ngo_preconditioner(oracle, d, fd, fields);
    LinearMap coarse = pre.map();
    LinearMap combined = multiplicative_precon(coarse, bj, fd);

    KrylovResult r_none = gmres(a, fd.b, nullptr, 0, 1e-8, 5000);
    KrylovResult r_bj = gmres(a, fd.b, &bj, 0, 1e-8, 5000);
    KrylovResult r_ngo = gmres(a, fd.b, &combined, 0, 1e-8, 5000);
    KrylovResult r_fngo = fgmres(a, fd.b, &combined, 0, 1e-8, 5000);
    KrylovResult r_bicg = bicgstab(a, fd.b, &combined, 1e-8, 5000);
    if (!(r_none.converged && r_bj.converged && r_ngo.converged && r_fngo.converged))
      return false;
    it_none += r_none.iterations;
    it_bj += r_bj.iterations;
    it_ngo += r_ngo.iterations;
    counts_equal = counts_equal && (r_fngo.iterations == r_ngo.iterations);
    bicg_ok = bicg_ok && r_bicg.converged &&
              r_bicg.final_relative_residual <= 1e-8 * (1 + 1e-6);
  }
  it_none /= n_systems;
  it_bj /= n_systems;
  it_ngo /= n_systems;
  const double dt = now_s() - t0;
  os << "mean iterations none " << it_none << ", block-Jacobi " << it_bj << ", +coarse "
     << it_ngo << "; F-GMRES counts equal: " << (counts_equal ? "yes" : "no")
     << "; Bi-CGSTAB converged: " << (bicg_ok ? "yes" : "no") << ", " << dt << " s";
  return it_bj < it_none && it_ngo < 0.5 * it_bj && counts_equal && bicg_ok && dt < 900.0;
}

bool criterion_9(std::ostream& os) {
  SteadyDiscretization& d = disc100();
  LinearPdeSolver fem_inner = make_fem_inner_solver(d);
  bool ok = true;
  std::ostringstream detail;

  // alpha = 0: the first iterate is the linear solution.
  for (int i = 0; i < 3; ++i) {
    ProblemSample s = draw_manufactured_C(99001 + i, steady_opts()).realize(d);
    PicardConfig cfg;
    PicardResult r = picard_solve(s.fields, 0.0, d, fem_inner, cfg);
    VectorXd direct = fem_inner(s.fields);
    ok = ok && r.converged &&
         (r.iterates[0] - direct).lpNorm<Eigen::Infinity>() < 1e-12;
  }
  detail << "alpha=0 exact: " << (ok ? "yes" : "no");

  // stabilized FEM reaches the update tolerance within 20 iterations.
  int converged = 0;
  for (int i = 0; i < 20; ++i) {
    NonlinearManufactured m = draw_manufactured_F(99101 + i, steady_opts());
    ProblemSample s = m.realize(d);
    PicardConfig cfg;
    cfg.tol = 1e-8;
    cfg.max_iterations = 20;
    PicardResult r = picard_solve(s.fields, s.alpha, d, fem_inner, cfg);
    if (r.converged && r.update_norms.back() < 1e-8) ++converged;
  }
  detail << "; fem picard converged on " << converged << "/20";
  ok = ok && converged == 20;

  // operator-in-the-loop: stagnation within 3x of the single-solve error.
  NgoModel picard_model = model_ngo_trained();
  picard_model.nitsche_in_inputs = true;  // stabilization inside the loop
  {
    SteadyClosures unit;
    AssembledOperator op0 =
        assemble_steady(make_steady_fields(unit, d.quads), d.basis, d.quads);
    picard_model.F0 = op0.F + op0.nitsche_F;
    picard_model.F0_inverse = picard_model.F0.partialPivLu().inverse();
  }
  auto ngo_inner = [&](const SteadyFields& fields) {
    AssembledOperator op = assemble_steady(fields, d.basis, d.quads);
    NgoInputs in = make_ngo_inputs_steady(picard_model, op, fields, d);
    return ngo_solution_coeffs(picard_model, in);
  };
  int stagnated_ok = 0;
  const int n_ngo = 10;
  for (int i = 0; i < n_ngo; ++i) {
    NonlinearManufactured m = draw_manufactured_F(99301 + i, steady_opts());
    ProblemSample s = m.realize(d);
    PicardConfig cfg;
    cfg.tol = 1e-6;
    cfg.max_iterations = 15;
    PicardResult r = picard_solve(s.fields, s.alpha, d, ngo_inner, cfg);
    const double err_final =
        rel_l2(d.eval_table * r.iterates.back(), s.u_ref, d.eval.weights);

    // its own linear-problem error: the linearized instance at the true u
    SteadyFields lin = s.fields;
    GrfEval th = m.theta0.sample(d.quads.domain, false);
    GrfEval uu = m.u.sample(d.quads.domain, false);
    lin.theta = th.value + m.alpha * uu.value;
    lin.theta_gd_left = s.fields.theta_gd_left +
                        m.alpha * m.u.sample(d.quads.gd_left, false).value;
    lin.theta_gd_right = s.fields.theta_gd_right +
                         m.alpha * m.u.sample(d.quads.gd_right, false).value;
    VectorXd u_lin = ngo_inner(lin);
    const double err_lin = rel_l2(d.eval_table * u_lin, s.u_ref, d.eval.weights);
    if (err_final <= 3.0 * err_lin + 1e-12) ++stagnated_ok;
  }
  detail << "; operator picard within 3x of its linear error on " << stagnated_ok << "/"
         << n_ngo;
  ok = ok && stagnated_ok == n_ngo;
  os << detail.str();
  return ok;
}

bool criterion_10(std::ostream& os) {
  SteadyDiscretization d = make_steady_discretization(6, 3, 5, 3);
  GrfDatasetOptions o;
  o.features = 96;
  Dataset ds = make_dataset_C(30, 51001, d, o);
  std::vector<int> batch(10);
  for (int i = 0; i < 10; ++i) batch[i] = i;
  std::ostringstream detail;
  bool ok = true;

  auto check = [&](const char* name, NgoTrainProblem& p) {
    GradCheckResult r = grad_check(p, batch, 60, 1e-5, 4242);
    detail << " [" << name << ": " << r.max_rel_error << " over " << r.checked << "]";
    ok = ok && r.max_rel_error < 1e-4 && r.checked >= 30;
  };

  NgoTrainSetup plain;
  plain.variant = NgoVariant::Model;
  plain.hidden = {12};
  plain.last_layer_scale = 1.0;
  auto p1 = make_steady_train_problem(ds, d, plain);
  check("solution", *p1);

  NgoTrainSetup neumann = plain;
  neumann.neumann = true;
  auto p2 = make_steady_train_problem(ds, d, neumann);
  check("neumann-ansatz", *p2);

  NgoTrainSetup matrix = plain;
  matrix.variant = NgoVariant::DataFree;
  matrix.neumann = true;
  auto p3 = make_steady_train_problem(ds, d, matrix);
  check("matrix", *p3);

  // A long slab keeps the coefficient moments well scaled; the inflated
  // last layer guarantees the scaling branch is active.
  SpaceTimeDiscretization dst = make_space_time_discretization(6, 0.5, 2, 3, 4, 3);
  GrfDatasetOptions ost;
  ost.features = 96;
  Dataset dsd = make_dataset_D(24, 52001, dst, ost);
  NgoTrainSetup stsetup;
  stsetup.variant = NgoVariant::Data;
  stsetup.hidden = {8};
  stsetup.norm_scale_S = 0.8;
  stsetup.last_layer_scale = 1.0;
  auto p4 = make_space_time_train_problem(dsd, dst, stsetup);
  p4->net().weights.back() *= 100.0;
  p4->freeze_norm_scale = true;  // constant-scale at the frozen estimate
  {
    GradCheckResult r = grad_check(*p4, batch, 60, 1e-3, 4242);
    detail << " [norm-scaling: " << r.max_rel_error << " over " << r.checked << "]";
    ok = ok && r.max_rel_error < 1e-4 && r.checked >= 30;
  }

  os << detail.str();
  return ok;
}

bool criterion_11(std::ostream& os) {
  SpaceTimeDiscretization d = make_space_time_discretization(6, 1e-3, 2, 3, 6, 3);
  SpaceTimeKronecker kron(d.basis, d.dt, 6);
  std::mt19937_64 rng(61001);
  std::uniform_real_distribution<double> un(0.5, 1.5);
  double worst = 0.0;
  for (int t = 0; t < 10; ++t) {
    VectorXd theta_hat(d.basis.count());
    for (int i = 0; i < theta_hat.size(); ++i) theta_hat(i) = un(rng);
    SpaceTimeFields f;
    f.theta = d.basis.evaluate(theta_hat, d.quads.domain);
    f.f = VectorXd::Zero(d.quads.domain.size());
    f.theta_gd_left = d.basis.evaluate(theta_hat, d.quads.gd_left);
    f.theta_gd_right = d.basis.evaluate(theta_hat, d.quads.gd_right);
    f.eta_bottom = VectorXd::Zero(d.quads.gn_bottom.size());
    f.eta_top = VectorXd::Zero(d.quads.gn_top.size());
    f.g_left = VectorXd::Zero(d.quads.gd_left.size());
    f.g_right = VectorXd::Zero(d.quads.gd_right.size());
    f.u0 = VectorXd::Zero(d.quads.initial.size());
    AssembledOperator op = assemble_space_time(f, d.basis, d.quads, 0, d.dt);
    worst = std::max(worst, (kron.assemble(theta_hat) - op.F).lpNorm<Eigen::Infinity>());
  }
  os << "max abs difference " << worst << " over 10 random coefficient draws";
  return worst < 1e-9;
}

bool criterion_12(std::ostream& os) {
  const int n = 640;
  Basis1D b = make_bspline_basis(n, 3);
  QuadratureRule quad1 = make_quadrature(QuadKind::Gauss, {n - 3}, 6);
  VectorXd theta = VectorXd::Ones(quad1.size());
  VectorXd f = VectorXd::Zero(quad1.size());
  AssembledOperator op = assemble_steady_1d(theta, f, 0.0, 0.0, b, quad1);
  MatrixXd a_hat = op.F.partialPivLu().inverse();
  Greens1DOracle oracle = make_greens_oracle(b);
  const double err_hat = std::sqrt(std::max(oracle.kernel_error2(a_hat), 0.0));
  const double err_opt =
      std::sqrt(std::max(oracle.kernel_error2(oracle.projection_coeffs()), 0.0));
  os << "kernel error " << err_hat << " vs optimal " << err_opt << " (excess "
     << err_hat - err_opt << ")";
  return err_hat <= err_opt + 1e-8 && err_hat >= err_opt - 1e-12;
}

int main(int argc, char** argv) {
  Eigen::setNbThreads(2);
  std::vector<Criterion> criteria = {
      {1, "oracle equivalence of the exact-inverse operator", criterion_1},
      {2, "error ordering projection <= fem <= data-free", criterion_2},
      {3, "geometric decay of the truncated-series remainder", criterion_3},
      {4, "trained accuracy band (in/out of distribution)", criterion_4},
      {5, "scale equivariance of the wrapped system net", criterion_5},
      {6, "time-stepping stability via norm scaling", criterion_6},
      {7, "mass/energy conservation correction", criterion_7},
      {8, "two-level preconditioning of Krylov solvers", criterion_8},
      {9, "fixed-point iteration behavior", criterion_9},
      {10, "gradient correctness on every loss path", criterion_10},
      {11, "factorized space-time assembly", criterion_11},
      {12, "1D kernel extraction vs the projection oracle", criterion_12},
  };

  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failures = 0;
  for (const Criterion& c : criteria) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    std::ostringstream detail;
    bool pass = false;
    const double t0 = now_s();
    try {
      pass = c.run(detail);
    } catch (const std::exception& e) {
      detail << "exception: " << e.what();
    }
    const double dt = now_s() - t0;
    std::cout << "criterion " << c.id << " (" << c.name << "): " << (pass ? "PASS" : "FAIL")
              << " -- " << detail.str() << " [" << dt << " s]\n"
              << std::flush;
    if (!pass) ++failures;
  }
  if (failures == 0)
    std::cout << "all criteria passed\n";
  else
    std::cout << failures << " criteria failed\n";
  return failures;
}
