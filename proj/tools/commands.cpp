#include "commands.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>

#include "ngo/errors.hpp"
#include "ngo/io.hpp"
#include "ngo/krylov.hpp"
#include "ngo/solvers.hpp"
#include "ngo/timestepper.hpp"

namespace ngo::cli {

namespace {

std::uint64_t effective_seed(const json& config, const CommonArgs& args) {
  if (args.seed_set) return args.seed;
  return config.value("seed", 0ULL);
}

GrfDatasetOptions grf_options(const json& config) {
  GrfDatasetOptions opts;
  if (config.contains("lambda")) {
    opts.lambda_lo = config["lambda"].at(0).get<double>();
    opts.lambda_hi = config["lambda"].at(1).get<double>();
  }
  if (config.contains("tau")) {
    opts.tau_lo = config["tau"].at(0).get<double>();
    opts.tau_hi = config["tau"].at(1).get<double>();
  }
  opts.features = config.value("features", 2048);
  return opts;
}

SteadyDiscretization steady_disc(const json& config) {
  json d = config.value("discretization", json::object());
  return make_steady_discretization(d.value("n_per_dim", 10), d.value("degree", 3),
                                    d.value("quad_ppc", 6), d.value("eval_ppc", 4));
}

SpaceTimeDiscretization space_time_disc(const json& config) {
  json d = config.value("discretization", json::object());
  return make_space_time_discretization(d.value("n_per_dim", 10), d.value("dt", 1e-3),
                                        d.value("nt", 2), d.value("degree", 3),
                                        d.value("quad_ppc", 5), d.value("eval_ppc", 4));
}

json steady_disc_json(const json& config) {
  json d = config.value("discretization", json::object());
  json out;
  out["type"] = "steady";
  out["n_per_dim"] = d.value("n_per_dim", 10);
  out["degree"] = d.value("degree", 3);
  out["quad_ppc"] = d.value("quad_ppc", 6);
  out["eval_ppc"] = d.value("eval_ppc", 4);
  return out;
}

json space_time_disc_json(const json& config) {
  json d = config.value("discretization", json::object());
  json out;
  out["type"] = "space-time";
  out["n_per_dim"] = d.value("n_per_dim", 10);
  out["degree"] = d.value("degree", 3);
  out["nt"] = d.value("nt", 2);
  out["dt"] = d.value("dt", 1e-3);
  out["quad_ppc"] = d.value("quad_ppc", 5);
  out["eval_ppc"] = d.value("eval_ppc", 4);
  return out;
}

struct ErrorStats {
  int n = 0;
  double mean = 0.0, stddev = 0.0, ci95 = 0.0;
};

ErrorStats stats_of(const std::vector<double>& errors) {
  ErrorStats s;
  s.n = static_cast<int>(errors.size());
  if (s.n == 0) return s;
  double acc = 0.0;
  for (double e : errors) acc += e;
  s.mean = acc / s.n;
  double var = 0.0;
  for (double e : errors) var += (e - s.mean) * (e - s.mean);
  s.stddev = s.n > 1 ? std::sqrt(var / (s.n - 1)) : 0.0;
  s.ci95 = 1.96 * s.stddev / std::sqrt(static_cast<double>(s.n));
  return s;
}

std::vector<double> model_errors(const NgoModel& model, const Dataset& ds,
                                 const SteadyDiscretization& disc) {
  std::vector<double> per_sample;
  ngo_eval_error(model, ds, disc, &per_sample);
  return per_sample;
}

std::vector<double> baseline_errors(const std::string& kind, const Dataset& ds,
                                    const SteadyDiscretization& disc) {
  std::vector<double> errs;
  errs.reserve(ds.size());
  for (const ProblemSample& s : ds.samples) {
    if (kind == "projection") {
      errs.push_back(project_L2(s.u_ref, disc.basis, disc.eval).rel_error);
    } else if (kind == "fem" || kind == "fem-stabilized") {
      AssembledOperator op =
          s.family == PdeFamily::AdvectionDiffusion
              ? assemble_advection_diffusion(s.fields, disc.basis, disc.quads,
                                             kind == "fem-stabilized")
              : assemble_steady(s.fields, disc.basis, disc.quads);
      VectorXd u = fem_solve(op, kind == "fem-stabilized");
      errs.push_back(relative_l2_error(disc.eval_table * u, s.u_ref, disc.eval.weights));
    } else {
      throw ConfigError("unknown baseline: " + kind);
    }
  }
  return errs;
}

void write_eval_csv(const fs::path& path, const json& rows) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot open " + path.string());
  os << "model,dataset,n,mean,stddev,ci95\n";
  os.precision(12);
  for (const auto& r : rows)
    os << r["model"].get<std::string>() << "," << r["dataset"].get<std::string>() << ","
       << r["n"].get<int>() << "," << r["mean"].get<double>() << ","
       << r["stddev"].get<double>() << "," << r["ci95"].get<double>() << "\n";
}

NgoTrainSetup setup_from_config(const json& config, std::uint64_t seed) {
  NgoTrainSetup setup;
  setup.variant = ngo_variant_from_string(config.value("variant", "model"));
  setup.hidden = config.value("hidden", std::vector<int>{32});
  if (config.contains("neumann")) {
    setup.neumann = config["neumann"].value("enabled", false);
    setup.neumann_K = config["neumann"].value("K", 1);
  }
  setup.scale_equivariant = config.value("scale_equivariant", false);
  setup.nitsche = config.value("nitsche", false);
  setup.norm_scale_S = config.value("norm_scale_S", 0.0);
  setup.last_layer_scale = config.value("last_layer_scale", 1e-2);
  json t = config.value("train", json::object());
  setup.train.learning_rate = t.value("learning_rate", 1e-3);
  setup.train.batch_size = t.value("batch_size", 100);
  setup.train.epochs = t.value("epochs", 100);
  setup.train.validation_fraction = t.value("validation_fraction", 0.1);
  setup.train.seed = seed;
  return setup;
}

}  // namespace

void cmd_generate(const json& config, const CommonArgs& args) {
  const std::string family = config.value("family", "C");
  const int n = config.value("n", 0);
  if (n < 1) throw ConfigError("generate: n >= 1 required");
  const std::uint64_t seed = effective_seed(config, args);

  Dataset ds;
  json disc_json;
  if (family == "D") {
    SpaceTimeDiscretization disc = space_time_disc(config);
    ds = make_dataset_D(n, seed, disc, grf_options(config));
    disc_json = space_time_disc_json(config);
  } else {
    SteadyDiscretization disc = steady_disc(config);
    disc_json = steady_disc_json(config);
    if (family == "C") {
      ds = make_dataset_C(n, seed, disc, grf_options(config));
    } else if (family == "F") {
      ds = make_dataset_F(n, seed, disc, grf_options(config));
    } else if (family == "B") {
      ds = make_dataset_B(n, seed, disc, config.value("features", 2048));
    } else if (family == "A") {
      DatasetAOptions opts;
      opts.features = config.value("features", 2048);
      opts.fine_n = config.value("fine_n", 23);
      ds = make_dataset_A_surrogate(n, seed, disc, opts);
    } else if (family == "E") {
      DatasetEOptions opts;
      opts.features = config.value("features", 2048);
      opts.fine_n = config.value("fine_n", 53);
      ds = make_dataset_E(n, seed, disc, opts);
    } else {
      throw ConfigError("generate: unknown family " + family);
    }
  }
  save_dataset(args.out, ds, disc_json);
  std::cout << "wrote dataset " << family << " (" << n << " samples) to " << args.out << "\n";
}

void cmd_train(const json& config, const CommonArgs& args) {
  if (!config.contains("dataset")) throw ConfigError("train: 'dataset' path required");
  json manifest;
  Dataset ds = load_dataset(config["dataset"].get<std::string>(), &manifest);
  const std::uint64_t seed = effective_seed(config, args);
  NgoTrainSetup setup = setup_from_config(config, seed);

  NgoTrainOutput out;
  json disc_json = manifest.at("discretization");
  if (ds.family == PdeFamily::SpaceTimeDiffusion) {
    SpaceTimeDiscretization disc = space_time_discretization_from_config(disc_json);
    out = train_ngo_space_time(ds, disc, setup);
  } else {
    SteadyDiscretization disc = steady_discretization_from_config(disc_json);
    switch (setup.variant) {
      case NgoVariant::Model: out = train_model_ngo(ds, disc, setup); break;
      case NgoVariant::DataFree: out = train_data_free_ngo(ds, disc, setup); break;
      case NgoVariant::Data: out = train_data_ngo(ds, disc, setup); break;
    }
  }

  // Resume support: prepend the previous history so the bundle's record
  // continues across runs.
  if (config.contains("resume_from")) {
    const fs::path prev = config["resume_from"].get<std::string>();
    std::ifstream is(prev / "history.csv");
    if (is) {
      TrainResult merged;
      std::string line;
      std::getline(is, line);  // header
      while (std::getline(is, line)) {
        const auto c1 = line.find(','), c2 = line.rfind(',');
        merged.train_history.push_back(std::stod(line.substr(c1 + 1, c2 - c1 - 1)));
        merged.val_history.push_back(std::stod(line.substr(c2 + 1)));
      }
      merged.train_history.insert(merged.train_history.end(), out.history.train_history.begin(),
                                  out.history.train_history.end());
      merged.val_history.insert(merged.val_history.end(), out.history.val_history.begin(),
                                out.history.val_history.end());
      out.history = std::move(merged);
    }
  }

  save_ngo_model(args.out, out.model, disc_json, seed);
  save_history_csv(args.out / "history.csv", out.history);
  std::cout << "trained " << to_string(out.model.variant) << " operator; "
            << out.history.train_history.size() << " epochs recorded, best validation "
            << out.history.best_val << "\n";
}

void cmd_eval(const json& config, const CommonArgs& args) {
  if (!config.contains("datasets")) throw ConfigError("eval: 'datasets' required");
  fs::create_directories(args.out);
  json rows = json::array();
  for (const auto& dsj : config["datasets"]) {
    json manifest;
    Dataset ds = load_dataset(dsj.at("path").get<std::string>(), &manifest);
    if (ds.family == PdeFamily::SpaceTimeDiffusion)
      throw ConfigError("eval: use 'rollout' for the time-dependent family");
    SteadyDiscretization disc = steady_discretization_from_config(manifest.at("discretization"));
    const std::string ds_name = dsj.value("name", ds.name);

    auto add_row = [&](const std::string& model_name, const std::vector<double>& errs) {
      ErrorStats s = stats_of(errs);
      json r;
      r["model"] = model_name;
      r["dataset"] = ds_name;
      r["n"] = s.n;
      r["mean"] = s.mean;
      r["stddev"] = s.stddev;
      r["ci95"] = s.ci95;
      rows.push_back(r);
    };

    for (const auto& b : config.value("baselines", json::array()))
      add_row(b.get<std::string>(), baseline_errors(b.get<std::string>(), ds, disc));
    for (const auto& mj : config.value("models", json::array())) {
      NgoModel model = load_ngo_model(mj.at("path").get<std::string>());
      add_row(mj.value("name", to_string(model.variant)), model_errors(model, ds, disc));
    }
  }
  json doc;
  doc["schema_version"] = 1;
  doc["rows"] = rows;
  save_json(args.out / "eval.json", doc);
  write_eval_csv(args.out / "eval.csv", rows);
  std::cout << "wrote " << rows.size() << " evaluation rows to " << args.out << "\n";
}

void cmd_sweep(const json& config, const CommonArgs& args) {
  const std::string axis = config.value("axis", "lambda");
  if (!config.contains("values")) throw ConfigError("sweep: 'values' required");
  json base = config.value("base", json::object());
  const int n = base.value("n", 100);
  const std::uint64_t seed = effective_seed(config, args);
  SteadyDiscretization disc = steady_disc(base);
  fs::create_directories(args.out);

  json rows = json::array();
  for (const auto& vj : config["values"]) {
    const double v = vj.get<double>();
    GrfDatasetOptions opts = grf_options(base);
    if (axis == "lambda") {
      opts.lambda_lo = opts.lambda_hi = v;
    } else if (axis == "tau") {
      opts.tau_lo = opts.tau_hi = v;
    } else {
      throw ConfigError("sweep: unknown axis " + axis);
    }
    Dataset ds = base.value("family", "C") == std::string("F")
                     ? make_dataset_F(n, seed, disc, opts)
                     : make_dataset_C(n, seed, disc, opts);

    auto add_row = [&](const std::string& model_name, const std::vector<double>& errs) {
      ErrorStats s = stats_of(errs);
      json r;
      r["axis"] = axis;
      r["value"] = v;
      r["model"] = model_name;
      r["n"] = s.n;
      r["mean"] = s.mean;
      r["stddev"] = s.stddev;
      r["ci95"] = s.ci95;
      rows.push_back(r);
    };
    for (const auto& b : config.value("baselines", json::array()))
      add_row(b.get<std::string>(), baseline_errors(b.get<std::string>(), ds, disc));
    for (const auto& mj : config.value("models", json::array())) {
      NgoModel model = load_ngo_model(mj.at("path").get<std::string>());
      add_row(mj.value("name", to_string(model.variant)), model_errors(model, ds, disc));
    }
  }
  json doc;
  doc["schema_version"] = 1;
  doc["rows"] = rows;
  save_json(args.out / "sweep.json", doc);
  std::ofstream os(args.out / "sweep.csv");
  os << "axis,value,model,n,mean,stddev,ci95\n";
  os.precision(12);
  for (const auto& r : rows)
    os << r["axis"].get<std::string>() << "," << r["value"].get<double>() << ","
       << r["model"].get<std::string>() << "," << r["n"].get<int>() << ","
       << r["mean"].get<double>() << "," << r["stddev"].get<double>() << ","
       << r["ci95"].get<double>() << "\n";
  std::cout << "wrote " << rows.size() << " sweep rows to " << args.out << "\n";
}

void cmd_rollout(const json& config, const CommonArgs& args) {
  SpaceTimeDiscretization disc = space_time_disc(config);
  const std::uint64_t seed = effective_seed(config, args);
  GrfDatasetOptions opts = grf_options(config);
  SpaceTimeManufactured problem = draw_manufactured_D(seed, opts);

  RolloutOptions ro;
  ro.n_steps = config.value("n_steps", 1000);
  ro.norm_scaling = config.value("norm_scaling", false);
  ro.s_bound = config.value("S", 0.8);
  ro.conservation = config.value("conservation", false);

  SlabMatrixFn fn;
  if (config.contains("model")) {
    auto model = std::make_shared<NgoModel>(load_ngo_model(config["model"].get<std::string>()));
    auto disc_ptr = std::make_shared<SpaceTimeDiscretization>(disc);
    ro.stabilized_rhs = model->nitsche_in_inputs;
    fn = [model, disc_ptr](const AssembledOperator& op, const SpaceTimeFields& fields, int) {
      NgoInputs in = make_ngo_inputs_space_time(*model, op, fields, *disc_ptr);
      return ngo_system_matrix(*model, in);
    };
  } else {
    // Stabilized space-time Galerkin baseline.
    ro.stabilized_rhs = true;
    fn = [](const AssembledOperator& op, const SpaceTimeFields&, int) {
      return (op.F + op.nitsche_F).partialPivLu().inverse().eval();
    };
  }

  RolloutResult res = rollout(problem, disc, fn, ro);
  fs::create_directories(args.out);
  std::ofstream os(args.out / "rollout.csv");
  os << "step,rel_error,mass_error,energy,scaled,a,b\n";
  os.precision(12);
  for (const StepTelemetry& t : res.telemetry)
    os << t.step << "," << t.rel_error << "," << std::abs(t.mass_hat - t.mass_true) << ","
       << t.energy_hat << "," << (t.scaled ? 1 : 0) << "," << t.a << "," << t.b << "\n";
  json doc;
  doc["schema_version"] = 1;
  doc["steps"] = static_cast<int>(res.telemetry.size());
  doc["aborted"] = res.aborted;
  doc["abort_step"] = res.abort_step;
  save_json(args.out / "rollout.json", doc);
  if (res.aborted)
    throw NumericalError("rollout aborted at step " + std::to_string(res.abort_step));
  std::cout << "rollout completed " << res.telemetry.size() << " steps\n";
}

void cmd_picard(const json& config, const CommonArgs& args) {
  SteadyDiscretization disc = steady_disc(config);
  const std::uint64_t seed = effective_seed(config, args);
  GrfDatasetOptions opts = grf_options(config);
  NonlinearManufactured problem = draw_manufactured_F(seed, opts);
  ProblemSample sample = problem.realize(disc);

  PicardConfig pc;
  pc.max_iterations = config.value("max_iterations", 30);
  pc.tol = config.value("tol", config.contains("model") ? 1e-6 : 1e-10);

  LinearPdeSolver inner;
  std::shared_ptr<NgoModel> model;
  std::shared_ptr<SteadyDiscretization> disc_ptr = std::make_shared<SteadyDiscretization>(disc);
  if (config.contains("model")) {
    model = std::make_shared<NgoModel>(load_ngo_model(config["model"].get<std::string>()));
    model->nitsche_in_inputs = true;  // stabilization is required inside the loop
    inner = [model, disc_ptr](const SteadyFields& fields) {
      AssembledOperator op = assemble_steady(fields, disc_ptr->basis, disc_ptr->quads);
      NgoInputs in = make_ngo_inputs_steady(*model, op, fields, *disc_ptr);
      return ngo_solution_coeffs(*model, in);
    };
  } else {
    inner = make_fem_inner_solver(*disc_ptr);
  }

  PicardResult res = picard_solve(sample.fields, sample.alpha, disc, inner, pc);
  fs::create_directories(args.out);
  std::ofstream os(args.out / "picard.csv");
  os << "k,update_norm,error_vs_reference,theta_positive\n";
  os.precision(12);
  for (size_t k = 0; k < res.iterates.size(); ++k) {
    const double err =
        relative_l2_error(disc.eval_table * res.iterates[k], sample.u_ref, disc.eval.weights);
    os << (k + 1) << "," << res.update_norms[k] << "," << err << ","
       << (res.theta_positive[k] ? 1 : 0) << "\n";
  }
  std::cout << "picard " << (res.converged ? "converged" : "stopped") << " after "
            << res.iterations << " iterations\n";
}

void cmd_precon_bench(const json& config, const CommonArgs& args) {
  const int n_systems = config.value("n_systems", 20);
  const double h = config.value("h", 1.0 / 49.0);
  const double tol = config.value("tol", 1e-8);
  const std::uint64_t seed = effective_seed(config, args);
  const auto solvers = config.value(
      "solvers", std::vector<std::string>{"gmres", "gmres50", "fgmres", "fgmres50", "bicgstab"});
  const auto precons =
      config.value("preconditioners", std::vector<std::string>{"none", "blkjac", "blkjac+ngo"});
  if (solvers.empty()) throw ConfigError("precon-bench: empty solver list");
  if (precons.empty()) throw ConfigError("precon-bench: empty preconditioner list");

  SteadyDiscretization disc = steady_disc(config);
  std::shared_ptr<NgoModel> model;
  bool oracle = config.value("oracle", !config.contains("model"));
  if (config.contains("model"))
    model = std::make_shared<NgoModel>(load_ngo_model(config["model"].get<std::string>()));

  struct Key {
    std::string solver, precon;
  };
  std::vector<Key> keys;
  for (const auto& s : solvers)
    for (const auto& p : precons) keys.push_back({s, p});
  std::vector<std::vector<double>> iters(keys.size());
  std::vector<int> fails(keys.size(), 0);

  for (int sys = 0; sys < n_systems; ++sys) {
    SteadyManufactured m = draw_manufactured_C(seed + sys, grf_options(config));
    FdSystem fd = fd_discretize(
        [&](double x, double y) { return m.theta_at(x, y); },
        [&](double x, double y) { return m.f_at(x, y); },
        [&](double x, double y) { return m.eta_at(x, y, -1.0); },
        [&](double x, double y) { return m.eta_at(x, y, 1.0); },
        [&](double x, double y) { return m.u_at(x, y); }, h);
    LinearMap a = [&fd](const VectorXd& v) { return fd.apply(v); };

    LinearMap blkjac = block_jacobi(fd);
    LinearMap ngo_map;
    if (std::find_if(precons.begin(), precons.end(), [](const std::string& p) {
          return p.find("ngo") != std::string::npos;
        }) != precons.end()) {
      NgoModel local = model ? *model : NgoModel{};
      if (!model) local.oracle_exact_inverse = oracle;
      SteadyFields fields;
      fields.theta = m.theta.sample(disc.quads.domain, false).value;
      fields.theta_gd_left = m.theta.sample(disc.quads.gd_left, false).value;
      fields.theta_gd_right = m.theta.sample(disc.quads.gd_right, false).value;
      fields.f = VectorXd::Zero(disc.quads.domain.size());
      fields.eta_bottom = VectorXd::Zero(disc.quads.gn_bottom.size());
      fields.eta_top = VectorXd::Zero(disc.quads.gn_top.size());
      fields.g_left = VectorXd::Zero(disc.quads.gd_left.size());
      fields.g_right = VectorXd::Zero(disc.quads.gd_right.size());
      auto pre = std::make_shared<NgoPreconditioner>(
          make_ngo_preconditioner(local, disc, fd, fields));
      LinearMap coarse = [pre](const VectorXd& v) { return (*pre)(v); };
      ngo_map = multiplicative_precon(coarse, blkjac, fd);
    }

    for (size_t k = 0; k < keys.size(); ++k) {
      const LinearMap* prec = nullptr;
      if (keys[k].precon == "blkjac") prec = &blkjac;
      else if (keys[k].precon == "blkjac+ngo") prec = &ngo_map;
      else if (keys[k].precon != "none")
        throw ConfigError("unknown preconditioner " + keys[k].precon);

      KrylovResult r;
      const std::string& s = keys[k].solver;
      if (s == "gmres") r = gmres(a, fd.b, prec, 0, tol);
      else if (s == "gmres50") r = gmres(a, fd.b, prec, 50, tol);
      else if (s == "fgmres") r = fgmres(a, fd.b, prec, 0, tol);
      else if (s == "fgmres50") r = fgmres(a, fd.b, prec, 50, tol);
      else if (s == "bicgstab") r = bicgstab(a, fd.b, prec, tol);
      else throw ConfigError("unknown solver " + s);
      if (r.converged)
        iters[k].push_back(r.iterations);
      else
        ++fails[k];
    }
  }

  fs::create_directories(args.out);
  json rows = json::array();
  for (size_t k = 0; k < keys.size(); ++k) {
    ErrorStats s = stats_of(iters[k]);
    json r;
    r["solver"] = keys[k].solver;
    r["preconditioner"] = keys[k].precon;
    r["n_converged"] = static_cast<int>(iters[k].size());
    r["n_failed"] = fails[k];
    r["mean_iterations"] = s.mean;
    rows.push_back(r);
  }
  json doc;
  doc["schema_version"] = 1;
  doc["h"] = h;
  doc["n_systems"] = n_systems;
  doc["rows"] = rows;
  save_json(args.out / "precon.json", doc);
  std::ofstream os(args.out / "precon.csv");
  os << "solver,preconditioner,n_converged,n_failed,mean_iterations\n";
  for (const auto& r : rows)
    os << r["solver"].get<std::string>() << "," << r["preconditioner"].get<std::string>() << ","
       << r["n_converged"].get<int>() << "," << r["n_failed"].get<int>() << ","
       << r["mean_iterations"].get<double>() << "\n";
  std::cout << "wrote preconditioner benchmark (" << rows.size() << " rows) to " << args.out
            << "\n";
}

}  // namespace ngo::cli
