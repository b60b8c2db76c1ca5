#include "ngo/io.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <nlohmann/json.hpp>

#include "ngo/errors.hpp"

namespace ngo {

namespace {

constexpr std::uint32_t kArrayMagic = 0x424F474EU;   // "NGOB"
constexpr std::uint32_t kWeightMagic = 0x574F474EU;  // "NGOW"
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ofstream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_u64(std::ofstream& os, std::uint64_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
std::uint32_t read_u32(std::ifstream& is) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}
std::uint64_t read_u64(std::ifstream& is) {
  std::uint64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw ConfigError("cannot open for writing: " + p.string());
  return os;
}

std::ifstream open_in(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw ConfigError("cannot open for reading: " + p.string());
  return is;
}

}  // namespace

void save_array(const fs::path& path, const MatrixXd& m) {
  std::ofstream os = open_out(path);
  write_u32(os, kArrayMagic);
  write_u32(os, kVersion);
  write_u32(os, 2);
  write_u64(os, static_cast<std::uint64_t>(m.rows()));
  write_u64(os, static_cast<std::uint64_t>(m.cols()));
  os.write(reinterpret_cast<const char*>(m.data()),
           static_cast<std::streamsize>(sizeof(double) * m.size()));
}

void save_array(const fs::path& path, const VectorXd& v) {
  std::ofstream os = open_out(path);
  write_u32(os, kArrayMagic);
  write_u32(os, kVersion);
  write_u32(os, 1);
  write_u64(os, static_cast<std::uint64_t>(v.size()));
  os.write(reinterpret_cast<const char*>(v.data()),
           static_cast<std::streamsize>(sizeof(double) * v.size()));
}

MatrixXd load_matrix(const fs::path& path) {
  std::ifstream is = open_in(path);
  if (read_u32(is) != kArrayMagic) throw ConfigError("bad array magic in " + path.string());
  if (read_u32(is) != kVersion) throw ConfigError("unsupported array version in " + path.string());
  const std::uint32_t rank = read_u32(is);
  if (rank == 1) {
    const auto n = static_cast<Eigen::Index>(read_u64(is));
    MatrixXd m(n, 1);
    is.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(sizeof(double) * n));
    return m;
  }
  if (rank != 2) throw ConfigError("unsupported array rank in " + path.string());
  const auto r = static_cast<Eigen::Index>(read_u64(is));
  const auto c = static_cast<Eigen::Index>(read_u64(is));
  MatrixXd m(r, c);
  is.read(reinterpret_cast<char*>(m.data()),
          static_cast<std::streamsize>(sizeof(double) * m.size()));
  if (!is) throw ConfigError("truncated array file " + path.string());
  return m;
}

VectorXd load_vector(const fs::path& path) {
  MatrixXd m = load_matrix(path);
  if (m.cols() != 1) throw ConfigError("expected a vector in " + path.string());
  return m.col(0);
}

void save_matrix_market(const fs::path& path, const MatrixXd& m) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot open for writing: " + path.string());
  os << "%%MatrixMarket matrix array real general\n";
  os << m.rows() << " " << m.cols() << "\n";
  os.precision(17);
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i) os << m(i, j) << "\n";
}

void export_assembled(const fs::path& dir, const AssembledOperator& op) {
  fs::create_directories(dir);
  save_array(dir / "F.bin", op.F);
  save_array(dir / "d.bin", op.d);
  save_array(dir / "nitsche_F.bin", op.nitsche_F);
  save_array(dir / "nitsche_d.bin", op.nitsche_d);
  save_matrix_market(dir / "F.mtx", op.F);
  if (op.M_lr.size() > 0) {
    save_array(dir / "M_lr.bin", op.M_lr);
    save_array(dir / "M_rr.bin", op.M_rr);
  }
}

json discretization_config(const SteadyDiscretization& disc) {
  const Basis1D& b = disc.basis.factor(0);
  json j;
  j["type"] = "steady";
  j["n_per_dim"] = b.count();
  j["degree"] = b.degree();
  j["quad_ppc"] = disc.quads.domain.size() > 0
                      ? static_cast<int>(std::lround(std::sqrt(double(disc.quads.domain.size())))) /
                            std::max(b.count() - b.degree(), 1)
                      : 0;
  j["eval_ppc"] = disc.eval.size() > 0
                      ? static_cast<int>(std::lround(std::sqrt(double(disc.eval.size())))) /
                            std::max(b.count() - b.degree(), 1)
                      : 0;
  return j;
}

json discretization_config(const SpaceTimeDiscretization& disc) {
  const Basis1D& bt = disc.basis.factor(0);
  const Basis1D& bx = disc.basis.factor(1);
  json j;
  j["type"] = "space-time";
  j["n_per_dim"] = bx.count();
  j["degree"] = bx.degree();
  j["nt"] = bt.count();
  j["dt"] = disc.dt;
  const int cells = std::max(bx.count() - bx.degree(), 1);
  const int q_per_dim = static_cast<int>(std::lround(std::cbrt(double(disc.quads.domain.size()))));
  j["quad_ppc"] = q_per_dim > 0 ? q_per_dim / cells : 0;
  j["eval_ppc"] = j["quad_ppc"];
  return j;
}

SteadyDiscretization steady_discretization_from_config(const json& j) {
  return make_steady_discretization(j.at("n_per_dim").get<int>(), j.at("degree").get<int>(),
                                    j.value("quad_ppc", 6), j.value("eval_ppc", 4));
}

SpaceTimeDiscretization space_time_discretization_from_config(const json& j) {
  return make_space_time_discretization(j.at("n_per_dim").get<int>(), j.at("dt").get<double>(),
                                        j.value("nt", 2), j.at("degree").get<int>(),
                                        j.value("quad_ppc", 6), j.value("eval_ppc", 4));
}

namespace {

const char* family_name(PdeFamily f) {
  switch (f) {
    case PdeFamily::SteadyDiffusion: return "steady-diffusion";
    case PdeFamily::AdvectionDiffusion: return "advection-diffusion";
    case PdeFamily::SpaceTimeDiffusion: return "space-time-diffusion";
    case PdeFamily::NonlinearDiffusion: return "nonlinear-diffusion";
  }
  return "?";
}

PdeFamily family_from_name(const std::string& s) {
  if (s == "steady-diffusion") return PdeFamily::SteadyDiffusion;
  if (s == "advection-diffusion") return PdeFamily::AdvectionDiffusion;
  if (s == "space-time-diffusion") return PdeFamily::SpaceTimeDiffusion;
  if (s == "nonlinear-diffusion") return PdeFamily::NonlinearDiffusion;
  throw ConfigError("unknown PDE family: " + s);
}

MatrixXd stack_columns(const Dataset& ds, const std::function<const VectorXd&(const ProblemSample&)>& get) {
  const Eigen::Index rows = get(ds.samples.front()).size();
  MatrixXd m(rows, ds.size());
  for (int i = 0; i < ds.size(); ++i) m.col(i) = get(ds.samples[i]);
  return m;
}

}  // namespace

void save_dataset(const fs::path& dir, const Dataset& ds, const json& disc_config) {
  if (ds.samples.empty()) throw ConfigError("save_dataset: empty dataset");
  fs::create_directories(dir);
  json manifest;
  manifest["version"] = 1;
  manifest["family"] = family_name(ds.family);
  manifest["name"] = ds.name;
  manifest["n"] = ds.size();
  manifest["seed"] = ds.seed;
  manifest["alpha"] = ds.alpha;
  manifest["dt"] = ds.dt;
  manifest["provenance"] =
      ds.samples.front().provenance == Provenance::Manufactured ? "manufactured" : "fem-solved";
  manifest["discretization"] = disc_config;
  save_json(dir / "manifest.json", manifest);

  const bool st = ds.family == PdeFamily::SpaceTimeDiffusion;
  auto field = [&](const char* name, auto getter) {
    save_array(dir / (std::string(name) + ".bin"),
               stack_columns(ds, std::function<const VectorXd&(const ProblemSample&)>(getter)));
  };
  if (st) {
    field("theta", [](const ProblemSample& s) -> const VectorXd& { return s.st_fields.theta; });
    field("f", [](const ProblemSample& s) -> const VectorXd& { return s.st_fields.f; });
    field("theta_gd_left",
          [](const ProblemSample& s) -> const VectorXd& { return s.st_fields.theta_gd_left; });
    field("theta_gd_right",
          [](const ProblemSample& s) -> const VectorXd& { return s.st_fields.theta_gd_right; });
    field("eta_bottom",
          [](const ProblemSample& s) -> const VectorXd& { return s.st_fields.eta_bottom; });
    field("eta_top", [](const ProblemSample& s) -> const VectorXd& { return s.st_fields.eta_top; });
    field("g_left", [](const ProblemSample& s) -> const VectorXd& { return s.st_fields.g_left; });
    field("g_right", [](const ProblemSample& s) -> const VectorXd& { return s.st_fields.g_right; });
    field("u0", [](const ProblemSample& s) -> const VectorXd& { return s.st_fields.u0; });
  } else {
    field("theta", [](const ProblemSample& s) -> const VectorXd& { return s.fields.theta; });
    field("f", [](const ProblemSample& s) -> const VectorXd& { return s.fields.f; });
    field("theta_gd_left",
          [](const ProblemSample& s) -> const VectorXd& { return s.fields.theta_gd_left; });
    field("theta_gd_right",
          [](const ProblemSample& s) -> const VectorXd& { return s.fields.theta_gd_right; });
    field("eta_bottom",
          [](const ProblemSample& s) -> const VectorXd& { return s.fields.eta_bottom; });
    field("eta_top", [](const ProblemSample& s) -> const VectorXd& { return s.fields.eta_top; });
    field("g_left", [](const ProblemSample& s) -> const VectorXd& { return s.fields.g_left; });
    field("g_right", [](const ProblemSample& s) -> const VectorXd& { return s.fields.g_right; });
    if (ds.family == PdeFamily::AdvectionDiffusion) {
      field("cx", [](const ProblemSample& s) -> const VectorXd& { return s.fields.cx; });
      field("cy", [](const ProblemSample& s) -> const VectorXd& { return s.fields.cy; });
      field("cx_gd_left",
            [](const ProblemSample& s) -> const VectorXd& { return s.fields.cx_gd_left; });
      field("cx_gd_right",
            [](const ProblemSample& s) -> const VectorXd& { return s.fields.cx_gd_right; });
      field("cy_gn_bottom",
            [](const ProblemSample& s) -> const VectorXd& { return s.fields.cy_gn_bottom; });
      field("cy_gn_top",
            [](const ProblemSample& s) -> const VectorXd& { return s.fields.cy_gn_top; });
      if (ds.samples.front().fields.dtheta_x.size() > 0) {
        field("dtheta_x",
              [](const ProblemSample& s) -> const VectorXd& { return s.fields.dtheta_x; });
        field("dtheta_y",
              [](const ProblemSample& s) -> const VectorXd& { return s.fields.dtheta_y; });
      }
    }
  }
  if (ds.samples.front().u_ref.size() > 0)
    field("u_ref", [](const ProblemSample& s) -> const VectorXd& { return s.u_ref; });
}

Dataset load_dataset(const fs::path& dir, json* manifest_out) {
  json manifest = load_json(dir / "manifest.json");
  if (manifest_out) *manifest_out = manifest;
  Dataset ds;
  ds.family = family_from_name(manifest.at("family").get<std::string>());
  ds.name = manifest.value("name", "");
  ds.seed = manifest.value("seed", 0ULL);
  ds.alpha = manifest.value("alpha", 0.0);
  ds.dt = manifest.value("dt", 0.0);
  const int n = manifest.at("n").get<int>();
  ds.samples.resize(n);
  const bool st = ds.family == PdeFamily::SpaceTimeDiffusion;
  const Provenance prov = manifest.value("provenance", std::string("manufactured")) ==
                                  std::string("manufactured")
                              ? Provenance::Manufactured
                              : Provenance::FemSolved;

  auto load_field = [&](const char* name, auto setter, bool required) {
    const fs::path p = dir / (std::string(name) + ".bin");
    if (!fs::exists(p)) {
      if (required) throw ConfigError("dataset field missing: " + p.string());
      return;
    }
    MatrixXd m = load_matrix(p);
    if (m.cols() != n) throw ConfigError("dataset field has wrong sample count: " + p.string());
    for (int i = 0; i < n; ++i) setter(ds.samples[i], VectorXd(m.col(i)));
  };

  for (int i = 0; i < n; ++i) {
    ds.samples[i].family = ds.family;
    ds.samples[i].provenance = prov;
    ds.samples[i].alpha = ds.alpha;
  }
  if (st) {
    load_field("theta", [](ProblemSample& s, VectorXd v) { s.st_fields.theta = std::move(v); }, true);
    load_field("f", [](ProblemSample& s, VectorXd v) { s.st_fields.f = std::move(v); }, true);
    load_field("theta_gd_left",
               [](ProblemSample& s, VectorXd v) { s.st_fields.theta_gd_left = std::move(v); }, true);
    load_field("theta_gd_right",
               [](ProblemSample& s, VectorXd v) { s.st_fields.theta_gd_right = std::move(v); },
               true);
    load_field("eta_bottom",
               [](ProblemSample& s, VectorXd v) { s.st_fields.eta_bottom = std::move(v); }, true);
    load_field("eta_top", [](ProblemSample& s, VectorXd v) { s.st_fields.eta_top = std::move(v); },
               true);
    load_field("g_left", [](ProblemSample& s, VectorXd v) { s.st_fields.g_left = std::move(v); },
               true);
    load_field("g_right", [](ProblemSample& s, VectorXd v) { s.st_fields.g_right = std::move(v); },
               true);
    load_field("u0", [](ProblemSample& s, VectorXd v) { s.st_fields.u0 = std::move(v); }, true);
  } else {
    load_field("theta", [](ProblemSample& s, VectorXd v) { s.fields.theta = std::move(v); }, true);
    load_field("f", [](ProblemSample& s, VectorXd v) { s.fields.f = std::move(v); }, true);
    load_field("theta_gd_left",
               [](ProblemSample& s, VectorXd v) { s.fields.theta_gd_left = std::move(v); }, true);
    load_field("theta_gd_right",
               [](ProblemSample& s, VectorXd v) { s.fields.theta_gd_right = std::move(v); }, true);
    load_field("eta_bottom",
               [](ProblemSample& s, VectorXd v) { s.fields.eta_bottom = std::move(v); }, true);
    load_field("eta_top", [](ProblemSample& s, VectorXd v) { s.fields.eta_top = std::move(v); },
               true);
    load_field("g_left", [](ProblemSample& s, VectorXd v) { s.fields.g_left = std::move(v); },
               true);
    load_field("g_right", [](ProblemSample& s, VectorXd v) { s.fields.g_right = std::move(v); },
               true);
    load_field("cx", [](ProblemSample& s, VectorXd v) { s.fields.cx = std::move(v); }, false);
    load_field("cy", [](ProblemSample& s, VectorXd v) { s.fields.cy = std::move(v); }, false);
    load_field("cx_gd_left",
               [](ProblemSample& s, VectorXd v) { s.fields.cx_gd_left = std::move(v); }, false);
    load_field("cx_gd_right",
               [](ProblemSample& s, VectorXd v) { s.fields.cx_gd_right = std::move(v); }, false);
    load_field("cy_gn_bottom",
               [](ProblemSample& s, VectorXd v) { s.fields.cy_gn_bottom = std::move(v); }, false);
    load_field("cy_gn_top",
               [](ProblemSample& s, VectorXd v) { s.fields.cy_gn_top = std::move(v); }, false);
    load_field("dtheta_x", [](ProblemSample& s, VectorXd v) { s.fields.dtheta_x = std::move(v); },
               false);
    load_field("dtheta_y", [](ProblemSample& s, VectorXd v) { s.fields.dtheta_y = std::move(v); },
               false);
  }
  load_field("u_ref", [](ProblemSample& s, VectorXd v) { s.u_ref = std::move(v); }, false);
  return ds;
}

void save_ngo_model(const fs::path& dir, const NgoModel& model, const json& disc_config,
                    std::uint64_t weight_seed) {
  fs::create_directories(dir);
  json header;
  header["version"] = 1;
  header["variant"] = to_string(model.variant);
  header["neumann"] = model.neumann;
  header["neumann_K"] = model.neumann_K;
  header["theta_mean"] = model.theta_mean;
  header["scale_equivariant"] = model.scale_equivariant;
  header["nitsche_in_inputs"] = model.nitsche_in_inputs;
  header["norm_scale_S"] = model.norm_scale_S;
  header["data_channels"] = model.data_channels;
  header["data_has_ft"] = model.data_has_ft;
  header["widths"] = model.net.widths;
  header["discretization"] = disc_config;
  save_json(dir / "model.json", header);

  std::ofstream os = open_out(dir / "weights.bin");
  write_u32(os, kWeightMagic);
  write_u32(os, kVersion);
  write_u64(os, weight_seed);
  write_u32(os, static_cast<std::uint32_t>(model.net.weights.size()));
  for (const MatrixXd& w : model.net.weights) {
    write_u64(os, static_cast<std::uint64_t>(w.rows()));
    write_u64(os, static_cast<std::uint64_t>(w.cols()));
    os.write(reinterpret_cast<const char*>(w.data()),
             static_cast<std::streamsize>(sizeof(double) * w.size()));
  }
  if (model.neumann) {
    save_array(dir / "f0.bin", model.F0);
    save_array(dir / "f0_inverse.bin", model.F0_inverse);
  }
}

NgoModel load_ngo_model(const fs::path& dir, json* header_out) {
  json header = load_json(dir / "model.json");
  if (header_out) *header_out = header;
  NgoModel model;
  model.variant = ngo_variant_from_string(header.at("variant").get<std::string>());
  model.neumann = header.value("neumann", false);
  model.neumann_K = header.value("neumann_K", 1);
  model.theta_mean = header.value("theta_mean", 1.0);
  model.scale_equivariant = header.value("scale_equivariant", false);
  model.nitsche_in_inputs = header.value("nitsche_in_inputs", false);
  model.norm_scale_S = header.value("norm_scale_S", 0.0);
  model.data_channels = header.value("data_channels", 1);
  model.data_has_ft = header.value("data_has_ft", false);

  std::ifstream is = open_in(dir / "weights.bin");
  if (read_u32(is) != kWeightMagic) throw ConfigError("bad weights magic");
  if (read_u32(is) != kVersion) throw ConfigError("unsupported weights version");
  read_u64(is);  // seed, informational
  const std::uint32_t layers = read_u32(is);
  model.net.widths = header.at("widths").get<std::vector<int>>();
  model.net.weights.resize(layers);
  for (std::uint32_t l = 0; l < layers; ++l) {
    const auto r = static_cast<Eigen::Index>(read_u64(is));
    const auto c = static_cast<Eigen::Index>(read_u64(is));
    model.net.weights[l].resize(r, c);
    is.read(reinterpret_cast<char*>(model.net.weights[l].data()),
            static_cast<std::streamsize>(sizeof(double) * r * c));
  }
  if (!is) throw ConfigError("truncated weights file");
  if (model.neumann) {
    model.F0 = load_matrix(dir / "f0.bin");
    model.F0_inverse = load_matrix(dir / "f0_inverse.bin");
  }
  return model;
}

void save_history_csv(const fs::path& path, const TrainResult& history) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot open for writing: " + path.string());
  os << "epoch,train_loss,validation_loss\n";
  os.precision(12);
  for (size_t e = 0; e < history.train_history.size(); ++e)
    os << e << "," << history.train_history[e] << "," << history.val_history[e] << "\n";
}

json load_json(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open for reading: " + path.string());
  json j;
  is >> j;
  return j;
}

void save_json(const fs::path& path, const json& j) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot open for writing: " + path.string());
  os << j.dump(2) << "\n";
}

}  // namespace ngo
