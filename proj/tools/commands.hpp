#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

namespace ngo::cli {

namespace fs = std::filesystem;
using nlohmann::json;

struct CommonArgs {
  fs::path out;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int threads = 0;
};

/// Each command consumes a parsed config document and writes its artifacts
/// under args.out. They throw ConfigError for invalid configs and
/// NumericalError/SolverError for numerical failures.
void cmd_generate(const json& config, const CommonArgs& args);
void cmd_train(const json& config, const CommonArgs& args);
void cmd_eval(const json& config, const CommonArgs& args);
void cmd_sweep(const json& config, const CommonArgs& args);
void cmd_rollout(const json& config, const CommonArgs& args);
void cmd_picard(const json& config, const CommonArgs& args);
void cmd_precon_bench(const json& config, const CommonArgs& args);

}  // namespace ngo::cli
