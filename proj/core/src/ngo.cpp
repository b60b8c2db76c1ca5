#include "ngo/ngo.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <memory>

#include "ngo/errors.hpp"
#include "ngo/timestepper.hpp"

namespace ngo {

std::string to_string(NgoVariant v) {
  switch (v) {
    case NgoVariant::Model: return "model";
    case NgoVariant::DataFree: return "data-free";
    case NgoVariant::Data: return "data";
  }
  return "?";
}

NgoVariant ngo_variant_from_string(const std::string& s) {
  if (s == "model") return NgoVariant::Model;
  if (s == "data-free") return NgoVariant::DataFree;
  if (s == "data") return NgoVariant::Data;
  throw ConfigError("unknown NGO variant: " + s);
}

VectorXd integrate_against_basis(const VectorXd& samples, const TensorBasis& basis,
                                 const QuadratureRule& quad) {
  if (samples.size() != quad.size())
    throw std::invalid_argument("integrate_against_basis: sample size mismatch");
  VectorXd out = VectorXd::Zero(basis.count());
  ActiveEval ae;
  for (int q = 0; q < quad.size(); ++q) {
    const double ws = quad.weights(q) * samples(q);
    basis.eval_active(quad.points.row(q).data(), ae);
    for (int k = 0; k < ae.size(); ++k) out(ae.index[k]) += ws * ae.value[k];
  }
  return out;
}

NgoInputs make_ngo_inputs_steady(const NgoModel& model, const AssembledOperator& op,
                                 const SteadyFields& fields, const SteadyDiscretization& disc) {
  NgoInputs in;
  in.d = op.d;
  if (model.nitsche_in_inputs) in.d += op.nitsche_d;
  if (model.variant == NgoVariant::Data) {
    const int n = disc.basis.count();
    const int ch = fields.has_advection() ? 3 : 1;
    in.Fvec.resize(ch * n);
    in.Fvec.head(n) = integrate_against_basis(fields.theta, disc.basis, disc.quads.domain);
    if (fields.has_advection()) {
      in.Fvec.segment(n, n) = integrate_against_basis(fields.cx, disc.basis, disc.quads.domain);
      in.Fvec.segment(2 * n, n) =
          integrate_against_basis(fields.cy, disc.basis, disc.quads.domain);
    }
  } else {
    in.F = op.F;
    if (model.nitsche_in_inputs) in.F += op.nitsche_F;
  }
  return in;
}

NgoInputs make_ngo_inputs_space_time(const NgoModel& model, const AssembledOperator& op,
                                     const SpaceTimeFields& fields,
                                     const SpaceTimeDiscretization& disc) {
  NgoInputs in;
  in.d = op.d;
  if (model.nitsche_in_inputs) in.d += op.nitsche_d;
  if (model.variant == NgoVariant::Data) {
    const int n = disc.basis.count();
    VectorXd ftheta =
        disc.dt * integrate_against_basis(fields.theta, disc.basis, disc.quads.domain);
    if (model.data_has_ft) {
      in.Fvec.resize(2 * n);
      in.Fvec.head(n) = ftheta;
      in.Fvec.tail(n) = op.trace_integral;
    } else {
      in.Fvec = ftheta;
    }
  } else {
    in.F = op.F;
    if (model.nitsche_in_inputs) in.F += op.nitsche_F;
  }
  return in;
}

MatrixXd neumann_apply(const MatrixXd& f0_inverse, const MatrixXd& delta_f, int K,
                       const MatrixXd& net_correction) {
  if (K < 0) throw std::invalid_argument("neumann_apply: K >= 0");
  const int n = static_cast<int>(f0_inverse.rows());
  MatrixXd b = -delta_f * f0_inverse;
  MatrixXd series = MatrixXd::Identity(n, n);
  MatrixXd power = MatrixXd::Identity(n, n);
  for (int k = 1; k <= K; ++k) {
    power = b * power;
    series += power;
  }
  if (net_correction.size() > 0) series += net_correction;
  return f0_inverse * series;
}

namespace {

MatrixXd unflatten(const VectorXd& y, int n) {
  return Eigen::Map<const MatrixXd>(y.data(), n, n);
}

VectorXd flatten(const MatrixXd& a) {
  return Eigen::Map<const VectorXd>(a.data(), a.size());
}

double se_scale(const NgoModel& model, const NgoInputs& in) {
  double s;
  if (model.variant == NgoVariant::Data) {
    // Mean of the theta-moment channel (integral of theta against a
    // partition of unity); positively homogeneous in theta.
    const int n = model.net.input_dim() / std::max(model.data_channels, 1);
    s = in.Fvec.head(n).mean();
  } else {
    s = in.F.norm();  // Frobenius
  }
  if (std::abs(s) < 1e-12)
    throw NumericalError("scale-equivariant forward: degenerate coefficient scale");
  return s;
}

}  // namespace

MatrixXd ngo_system_matrix(const NgoModel& model, const NgoInputs& inputs) {
  if (model.oracle_exact_inverse) {
    if (inputs.F.size() == 0)
      throw ConfigError("oracle inverse requires model-family inputs (F)");
    return inputs.F.partialPivLu().inverse();
  }
  if (model.variant == NgoVariant::Data) {
    if (inputs.Fvec.size() != model.net.input_dim())
      throw std::invalid_argument("ngo_system_matrix: data input size mismatch");
    const int n = static_cast<int>(std::lround(std::sqrt(model.net.output_dim())));
    if (model.scale_equivariant) {
      const double s = se_scale(model, inputs);
      return unflatten(mlp_forward(model.net, inputs.Fvec / s), n) / s;
    }
    return unflatten(mlp_forward(model.net, inputs.Fvec), n);
  }

  const int n = static_cast<int>(inputs.F.rows());
  if (model.neumann) {
    if (model.F0_inverse.size() == 0)
      throw ConfigError("Neumann preconditioning enabled but F0 inverse missing");
    if (model.scale_equivariant)
      throw ConfigError("scale equivariance applies to the plain system-net input");
    MatrixXd delta_f = inputs.F - model.F0;
    MatrixXd b = -delta_f * model.F0_inverse;
    MatrixXd correction = unflatten(mlp_forward(model.net, flatten(b)), n);
    return neumann_apply(model.F0_inverse, delta_f, model.neumann_K, correction);
  }
  if (model.scale_equivariant) {
    const double s = se_scale(model, inputs);
    return unflatten(mlp_forward(model.net, flatten(inputs.F) / s), n) / s;
  }
  return unflatten(mlp_forward(model.net, flatten(inputs.F)), n);
}

VectorXd ngo_solution_coeffs(const NgoModel& model, const NgoInputs& inputs) {
  return ngo_system_matrix(model, inputs) * inputs.d;
}

MatrixXd extract_greens(const TensorBasis& trial, const TensorBasis& test, const MatrixXd& a_hat,
                        const RowMatrixXd& x_grid, const RowMatrixXd& xp_grid) {
  if (a_hat.rows() != trial.count() || a_hat.cols() != test.count())
    throw std::invalid_argument("extract_greens: matrix/basis size mismatch");
  MatrixXd phi(x_grid.rows(), trial.count());
  for (int i = 0; i < x_grid.rows(); ++i)
    phi.row(i) = trial.values(x_grid.row(i).data()).transpose();
  MatrixXd psi(xp_grid.rows(), test.count());
  for (int j = 0; j < xp_grid.rows(); ++j)
    psi.row(j) = test.values(xp_grid.row(j).data()).transpose();
  return phi * a_hat * psi.transpose();
}

double relative_l2_error(const VectorXd& u_hat_samples, const VectorXd& u_ref,
                         const VectorXd& weights) {
  const double denom = std::sqrt((u_ref.array().square() * weights.array()).sum());
  const double num = std::sqrt(((u_hat_samples - u_ref).array().square() * weights.array()).sum());
  return denom > 1e-300 ? num / denom : num;
}

std::vector<AssembledOperator> assemble_dataset(const Dataset& ds,
                                                const SteadyDiscretization& disc,
                                                const AssemblyOptions& opts) {
  std::vector<AssembledOperator> ops;
  ops.reserve(ds.samples.size());
  for (const ProblemSample& s : ds.samples) {
    if (s.family == PdeFamily::AdvectionDiffusion)
      ops.push_back(assemble_advection_diffusion(s.fields, disc.basis, disc.quads,
                                                 /*supg=*/false, opts));
    else
      ops.push_back(assemble_steady(s.fields, disc.basis, disc.quads, opts));
  }
  return ops;
}

double NgoTrainProblem::batch_loss_grad(const std::vector<int>& batch,
                                        std::vector<MatrixXd>& grads) {
  return run(batch, &grads);
}

double NgoTrainProblem::eval_loss(const std::vector<int>& batch) { return run(batch, nullptr); }

double NgoTrainProblem::run(const std::vector<int>& batch, std::vector<MatrixXd>* grads) {
  const int bsz = static_cast<int>(batch.size());
  const int n = static_cast<int>(std::lround(std::sqrt(model.net.output_dim())));
  MatrixXd xb(model.net.input_dim(), bsz);
  for (int c = 0; c < bsz; ++c) xb.col(c) = x[batch[c]];
  MlpCache cache;
  MatrixXd yb = mlp_forward(model.net, xb, grads ? &cache : nullptr);
  MatrixXd dyb = MatrixXd::Zero(yb.rows(), bsz);
  PowerIterWorkspace power_ws;

  double loss = 0.0;
  for (int c = 0; c < bsz; ++c) {
    const int i = batch[c];
    MatrixXd net_out = unflatten(yb.col(c), n);
    if (solution_loss) {
      VectorXd coeffs;
      double sigma = 1.0;
      if (model.neumann) {
        coeffs = base_u[i] + model.F0_inverse * (net_out * d[i]);
      } else {
        MatrixXd a_hat = net_out / scale[i];
        if (norm_S > 0.0) {
          if (freeze_norm_scale && frozen_sigma_.empty())
            frozen_sigma_.assign(x.size(), -1.0);
          if (freeze_norm_scale && frozen_sigma_[i] >= 0.0) {
            sigma = frozen_sigma_[i];
          } else {
            const double nu = generalized_operator_norm(
                a_hat.bottomLeftCorner(spatial_mass.rows(), spatial_mass.cols()) * spatial_mass,
                spatial_mass, power_ws);
            if (nu > norm_S) sigma = norm_S / nu;
            if (freeze_norm_scale) frozen_sigma_[i] = sigma;
          }
        }
        coeffs = sigma * (a_hat * d[i]);
      }
      VectorXd u_hat = eval_table * coeffs;
      VectorXd r = u_hat - u_ref[i];
      const double denom = std::sqrt((u_ref[i].array().square() * eval_w.array()).sum());
      const double num = std::sqrt((r.array().square() * eval_w.array()).sum());
      loss += num / denom;
      if (grads) {
        VectorXd g_coeff =
            eval_table.transpose() * (eval_w.cwiseProduct(r)) / (std::max(num, 1e-300) * denom);
        g_coeff *= sigma / static_cast<double>(bsz);
        if (model.neumann)
          dyb.col(c) = flatten((model.F0_inverse.transpose() * g_coeff) * d[i].transpose());
        else
          dyb.col(c) = flatten(g_coeff * d[i].transpose()) / scale[i];
      }
    } else {
      MatrixXd a_hat = model.neumann ? (base_mat[i] + model.F0_inverse * net_out).eval()
                                     : (net_out / scale[i]).eval();
      MatrixXd m = f_mat[i] * a_hat * f_mat[i] - f_mat[i];
      const double norm = m.norm();
      loss += norm;
      if (grads) {
        MatrixXd da =
            f_mat[i].transpose() * m * f_mat[i].transpose() / (std::max(norm, 1e-300) * bsz);
        if (model.neumann)
          dyb.col(c) = flatten((model.F0_inverse.transpose() * da).eval());
        else
          dyb.col(c) = flatten(da) / scale[i];
      }
    }
  }
  if (grads) mlp_backward(model.net, cache, dyb, *grads);
  return loss / bsz;
}

namespace {

VectorXd constant_field(double v, const QuadratureRule& r) {
  return VectorXd::Constant(r.size(), v);
}

// F at the dataset-mean coefficient (with Nitsche terms when requested).
MatrixXd mean_coefficient_operator(double theta_mean, const SteadyDiscretization& disc,
                                   bool with_nitsche) {
  SteadyFields f;
  f.theta = constant_field(theta_mean, disc.quads.domain);
  f.f = constant_field(0.0, disc.quads.domain);
  f.theta_gd_left = constant_field(theta_mean, disc.quads.gd_left);
  f.theta_gd_right = constant_field(theta_mean, disc.quads.gd_right);
  f.eta_bottom = constant_field(0.0, disc.quads.gn_bottom);
  f.eta_top = constant_field(0.0, disc.quads.gn_top);
  f.g_left = constant_field(0.0, disc.quads.gd_left);
  f.g_right = constant_field(0.0, disc.quads.gd_right);
  AssembledOperator op = assemble_steady(f, disc.basis, disc.quads);
  return with_nitsche ? (op.F + op.nitsche_F).eval() : op.F;
}

double dataset_theta_mean(const Dataset& ds, const VectorXd& weights) {
  double acc = 0.0;
  const double wsum = weights.sum();
  for (const ProblemSample& s : ds.samples)
    acc += (s.fields.theta.array() * weights.array()).sum() / wsum;
  return acc / ds.samples.size();
}

NgoModel make_proto(const NgoTrainSetup& setup, int in_dim, int out_dim, int data_channels,
                    bool data_ft) {
  NgoModel m;
  m.variant = setup.variant;
  m.neumann = setup.neumann;
  m.neumann_K = setup.neumann_K;
  m.scale_equivariant = setup.scale_equivariant;
  m.nitsche_in_inputs = setup.nitsche;
  m.norm_scale_S = setup.norm_scale_S;
  m.data_channels = data_channels;
  m.data_has_ft = data_ft;
  std::vector<int> widths;
  widths.push_back(in_dim);
  for (int h : setup.hidden) widths.push_back(h);
  widths.push_back(out_dim);
  m.net = make_mlp(widths, setup.train.seed, setup.last_layer_scale);
  return m;
}

std::unique_ptr<NgoTrainProblem> make_steady_train_problem_impl(
    const Dataset& ds, const SteadyDiscretization& disc, const NgoTrainSetup& setup) {
  const int n = disc.basis.count();
  const bool advection = ds.family == PdeFamily::AdvectionDiffusion;
  const int channels = advection ? 3 : 1;
  const bool data_variant = setup.variant == NgoVariant::Data;
  const int in_dim = data_variant ? channels * n : n * n;

  auto problem = std::make_unique<NgoTrainProblem>();
  problem->model = make_proto(setup, in_dim, n * n, channels, false);
  problem->solution_loss = setup.variant != NgoVariant::DataFree;
  problem->eval_table = disc.eval_table;
  problem->eval_w = disc.eval.weights;

  std::vector<AssembledOperator> ops = assemble_dataset(ds, disc);

  if (setup.neumann) {
    problem->model.theta_mean = dataset_theta_mean(ds, disc.quads.domain.weights);
    problem->model.F0 = mean_coefficient_operator(problem->model.theta_mean, disc, setup.nitsche);
    problem->model.F0_inverse = problem->model.F0.partialPivLu().inverse();
  }

  const int count = ds.size();
  const bool matrix_loss = setup.variant == NgoVariant::DataFree;
  problem->x.resize(count);
  problem->scale.assign(count, 1.0);
  problem->d.resize(count);
  if (problem->solution_loss) problem->u_ref.resize(count);
  if (matrix_loss) problem->f_mat.resize(count);
  if (setup.neumann && problem->solution_loss) problem->base_u.resize(count);
  if (setup.neumann && matrix_loss) problem->base_mat.resize(count);

  for (int i = 0; i < count; ++i) {
    NgoInputs in = make_ngo_inputs_steady(problem->model, ops[i], ds.samples[i].fields, disc);
    problem->d[i] = in.d;
    if (problem->solution_loss) problem->u_ref[i] = ds.samples[i].u_ref;
    if (matrix_loss) problem->f_mat[i] = in.F;
    if (data_variant) {
      double s = 1.0;
      if (setup.scale_equivariant) s = in.Fvec.head(n).mean();
      problem->scale[i] = s;
      problem->x[i] = in.Fvec / s;
    } else if (setup.neumann) {
      MatrixXd delta_f = in.F - problem->model.F0;
      MatrixXd b = -delta_f * problem->model.F0_inverse;
      problem->x[i] = flatten(b);
      MatrixXd series = MatrixXd::Identity(n, n);
      MatrixXd power = MatrixXd::Identity(n, n);
      for (int k = 1; k <= setup.neumann_K; ++k) {
        power = b * power;
        series += power;
      }
      if (matrix_loss) problem->base_mat[i] = problem->model.F0_inverse * series;
      if (problem->solution_loss)
        problem->base_u[i] = problem->model.F0_inverse * (series * in.d);
    } else {
      double s = 1.0;
      if (setup.scale_equivariant) s = in.F.norm();
      problem->scale[i] = s;
      problem->x[i] = flatten(in.F) / s;
    }
  }

  return problem;
}

NgoTrainOutput train_steady_impl(const Dataset& ds, const SteadyDiscretization& disc,
                                 const NgoTrainSetup& setup) {
  auto problem = make_steady_train_problem_impl(ds, disc, setup);
  NgoTrainOutput out;
  out.history = train(*problem, setup.train);
  out.model = std::move(problem->model);
  return out;
}

}  // namespace

std::unique_ptr<NgoTrainProblem> make_steady_train_problem(const Dataset& ds,
                                                           const SteadyDiscretization& disc,
                                                           const NgoTrainSetup& setup) {
  return make_steady_train_problem_impl(ds, disc, setup);
}

NgoTrainOutput train_model_ngo(const Dataset& ds, const SteadyDiscretization& disc,
                               const NgoTrainSetup& setup) {
  NgoTrainSetup s = setup;
  s.variant = NgoVariant::Model;
  return train_steady_impl(ds, disc, s);
}

NgoTrainOutput train_data_free_ngo(const Dataset& ds, const SteadyDiscretization& disc,
                                   const NgoTrainSetup& setup) {
  NgoTrainSetup s = setup;
  s.variant = NgoVariant::DataFree;
  return train_steady_impl(ds, disc, s);
}

NgoTrainOutput train_data_ngo(const Dataset& ds, const SteadyDiscretization& disc,
                              const NgoTrainSetup& setup) {
  NgoTrainSetup s = setup;
  s.variant = NgoVariant::Data;
  return train_steady_impl(ds, disc, s);
}

std::unique_ptr<NgoTrainProblem> make_space_time_train_problem(
    const Dataset& ds, const SpaceTimeDiscretization& disc, const NgoTrainSetup& setup) {
  const int n = disc.basis.count();
  const bool data_variant = setup.variant == NgoVariant::Data;
  const bool with_ft = data_variant;  // trace-integral channel breaks scale symmetry
  const int in_dim = data_variant ? (with_ft ? 2 * n : n) : n * n;

  auto problem = std::make_unique<NgoTrainProblem>();
  problem->model = make_proto(setup, in_dim, n * n, 1, with_ft);
  problem->solution_loss = setup.variant != NgoVariant::DataFree;
  problem->eval_table = disc.eval_table;
  problem->eval_w = disc.eval.weights;
  problem->norm_S = setup.norm_scale_S;

  const int count = ds.size();
  problem->x.resize(count);
  problem->scale.assign(count, 1.0);
  problem->d.resize(count);
  if (problem->solution_loss) problem->u_ref.resize(count);
  if (setup.variant == NgoVariant::DataFree) problem->f_mat.resize(count);

  for (int i = 0; i < count; ++i) {
    const ProblemSample& s = ds.samples[i];
    AssembledOperator op = assemble_space_time(s.st_fields, disc.basis, disc.quads,
                                               /*slab=*/0, disc.dt, nullptr);
    if (i == 0) problem->spatial_mass = op.spatial_mass;
    NgoInputs in = make_ngo_inputs_space_time(problem->model, op, s.st_fields, disc);
    problem->d[i] = in.d;
    if (problem->solution_loss) problem->u_ref[i] = s.u_ref;
    if (data_variant) {
      double se = 1.0;
      if (setup.scale_equivariant) se = in.Fvec.head(n).mean();
      problem->scale[i] = se;
      problem->x[i] = in.Fvec / se;
    } else {
      problem->x[i] = flatten(in.F);
      if (setup.variant == NgoVariant::DataFree) problem->f_mat[i] = in.F;
    }
  }

  return problem;
}

NgoTrainOutput train_ngo_space_time(const Dataset& ds, const SpaceTimeDiscretization& disc,
                                    const NgoTrainSetup& setup) {
  auto problem = make_space_time_train_problem(ds, disc, setup);
  NgoTrainOutput out;
  out.history = train(*problem, setup.train);
  out.model = std::move(problem->model);
  return out;
}

double ngo_eval_error(const NgoModel& model, const Dataset& ds,
                      const SteadyDiscretization& disc, std::vector<double>* per_sample) {
  double acc = 0.0;
  if (per_sample) per_sample->clear();
  for (const ProblemSample& s : ds.samples) {
    AssembledOperator op =
        s.family == PdeFamily::AdvectionDiffusion
            ? assemble_advection_diffusion(s.fields, disc.basis, disc.quads, false)
            : assemble_steady(s.fields, disc.basis, disc.quads);
    NgoInputs in = make_ngo_inputs_steady(model, op, s.fields, disc);
    VectorXd u_hat = disc.eval_table * ngo_solution_coeffs(model, in);
    const double e = relative_l2_error(u_hat, s.u_ref, disc.eval.weights);
    if (per_sample) per_sample->push_back(e);
    acc += e;
  }
  return acc / ds.size();
}

}  // namespace ngo
