#include <benchmark/benchmark.h>

#include <Eigen/Dense>

#include "ngo/assembly.hpp"
#include "ngo/datasets.hpp"
#include "ngo/krylov.hpp"
#include "ngo/ngo.hpp"
#include "ngo/solvers.hpp"

namespace {

using namespace ngo;

GrfDatasetOptions bench_opts() {
  GrfDatasetOptions o;
  o.features = 512;
  return o;
}

const SteadyDiscretization& bench_disc() {
  static SteadyDiscretization d = make_steady_discretization(10, 3, 6, 4);
  return d;
}

const ProblemSample& bench_sample() {
  static ProblemSample s = draw_manufactured_C(1234, bench_opts()).realize(bench_disc());
  return s;
}

void bm_grf_sample(benchmark::State& state) {
  GrfSpec spec;
  spec.length_scale = 0.6;
  spec.seed = 1;
  spec.features = static_cast<int>(state.range(0));
  GrfField f(spec);
  const SteadyDiscretization& d = bench_disc();
  for (auto _ : state) {
    GrfEval e = f.sample(d.quads.domain, true);
    benchmark::DoNotOptimize(e.value.sum());
  }
}
BENCHMARK(bm_grf_sample)->Arg(256)->Arg(2048);

void bm_assemble_steady(benchmark::State& state) {
  const SteadyDiscretization& d = bench_disc();
  const ProblemSample& s = bench_sample();
  for (auto _ : state) {
    AssembledOperator op = assemble_steady(s.fields, d.basis, d.quads);
    benchmark::DoNotOptimize(op.F(0, 0));
  }
}
BENCHMARK(bm_assemble_steady);

void bm_fem_solve(benchmark::State& state) {
  const SteadyDiscretization& d = bench_disc();
  AssembledOperator op = assemble_steady(bench_sample().fields, d.basis, d.quads);
  for (auto _ : state) {
    VectorXd u = fem_solve(op, false);
    benchmark::DoNotOptimize(u.sum());
  }
}
BENCHMARK(bm_fem_solve);

void bm_operator_forward(benchmark::State& state) {
  const SteadyDiscretization& d = bench_disc();
  const ProblemSample& s = bench_sample();
  AssembledOperator op = assemble_steady(s.fields, d.basis, d.quads);
  NgoModel model;
  model.variant = NgoVariant::Model;
  const int n = d.basis.count();
  model.net = make_mlp({n * n, 24, n * n}, 3);
  NgoInputs in = make_ngo_inputs_steady(model, op, s.fields, d);
  for (auto _ : state) {
    VectorXd u = ngo_solution_coeffs(model, in);
    benchmark::DoNotOptimize(u.sum());
  }
}
BENCHMARK(bm_operator_forward);

void bm_gmres_block_jacobi(benchmark::State& state) {
  SteadyManufactured m = draw_manufactured_C(7, bench_opts());
  FdSystem fd = fd_discretize([&](double x, double y) { return m.theta_at(x, y); },
                              [&](double x, double y) { return m.f_at(x, y); },
                              [&](double x, double y) { return m.eta_at(x, y, -1.0); },
                              [&](double x, double y) { return m.eta_at(x, y, 1.0); },
                              [&](double x, double y) { return m.u_at(x, y); }, 1.0 / 49.0);
  LinearMap a = [&fd](const VectorXd& v) { return fd.apply(v); };
  LinearMap bj = block_jacobi(fd);
  for (auto _ : state) {
    KrylovResult r = gmres(a, fd.b, &bj, 0, 1e-8, 4000);
    benchmark::DoNotOptimize(r.iterations);
  }
}
BENCHMARK(bm_gmres_block_jacobi);

}  // namespace

BENCHMARK_MAIN();
