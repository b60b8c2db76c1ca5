#include <CLI11.hpp>
#include <Eigen/Core>
#include <iostream>

#include "commands.hpp"
#include "ngo/errors.hpp"
#include "ngo/io.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Finite-dimensional learnable Green's-operator solvers for parametric PDEs"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = "out";
  std::uint64_t seed = 0;
  int threads = 0;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON configuration file")->required();
    cmd->add_option("--out", out_dir, "output directory");
    cmd->add_option("--seed", seed, "seed override");
    cmd->add_option("--threads", threads, "linear algebra thread count");
  };

  CLI::App* c_generate = app.add_subcommand("generate", "generate a dataset");
  CLI::App* c_train = app.add_subcommand("train", "train an operator");
  CLI::App* c_eval = app.add_subcommand("eval", "evaluate models against datasets");
  CLI::App* c_sweep = app.add_subcommand("sweep", "evaluate over a parameter axis");
  CLI::App* c_rollout = app.add_subcommand("rollout", "autoregressive time stepping");
  CLI::App* c_picard = app.add_subcommand("picard", "fixed-point run on a nonlinear sample");
  CLI::App* c_precon = app.add_subcommand("precon-bench", "Krylov preconditioner benchmark");
  for (CLI::App* c : {c_generate, c_train, c_eval, c_sweep, c_rollout, c_picard, c_precon})
    add_common(c);

  CLI11_PARSE(app, argc, argv);

  try {
    ngo::cli::CommonArgs args;
    args.out = out_dir;
    args.seed = seed;
    args.seed_set = app.get_subcommands().front()->count("--seed") > 0;
    args.threads = threads;
    if (threads > 0) Eigen::setNbThreads(threads);

    ngo::json config = ngo::load_json(config_path);
    CLI::App* sub = app.get_subcommands().front();
    if (sub == c_generate) ngo::cli::cmd_generate(config, args);
    else if (sub == c_train) ngo::cli::cmd_train(config, args);
    else if (sub == c_eval) ngo::cli::cmd_eval(config, args);
    else if (sub == c_sweep) ngo::cli::cmd_sweep(config, args);
    else if (sub == c_rollout) ngo::cli::cmd_rollout(config, args);
    else if (sub == c_picard) ngo::cli::cmd_picard(config, args);
    else if (sub == c_precon) ngo::cli::cmd_precon_bench(config, args);
  } catch (const ngo::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const ngo::json::exception& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
