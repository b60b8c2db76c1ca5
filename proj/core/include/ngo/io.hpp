#pragma once

#include <filesystem>
#include <string>

#include <nlohmann/json_fwd.hpp>

#include "ngo/datasets.hpp"
#include "ngo/ngo.hpp"

namespace ngo {

namespace fs = std::filesystem;
using nlohmann::json;

/// Dense binary array format: magic "NGOB", version, rank, dims, f64 data
/// (column-major).
void save_array(const fs::path& path, const MatrixXd& m);
void save_array(const fs::path& path, const VectorXd& v);
MatrixXd load_matrix(const fs::path& path);
VectorXd load_vector(const fs::path& path);

/// Matrix-market (array format) export for external inspection.
void save_matrix_market(const fs::path& path, const MatrixXd& m);

/// Assembled operator export: dense binaries plus matrix-market text.
void export_assembled(const fs::path& dir, const AssembledOperator& op);

json discretization_config(const SteadyDiscretization& disc);
json discretization_config(const SpaceTimeDiscretization& disc);
SteadyDiscretization steady_discretization_from_config(const json& j);
SpaceTimeDiscretization space_time_discretization_from_config(const json& j);

/// Dataset directory: manifest.json plus one binary array per field
/// (columns = samples).
void save_dataset(const fs::path& dir, const Dataset& ds, const json& disc_config);
Dataset load_dataset(const fs::path& dir, json* manifest_out = nullptr);

/// Model bundle: model.json header, versioned weights binary, F0 blocks.
void save_ngo_model(const fs::path& dir, const NgoModel& model, const json& disc_config,
                    std::uint64_t weight_seed = 0);
NgoModel load_ngo_model(const fs::path& dir, json* header_out = nullptr);

/// Loss history as CSV (epoch, train, validation).
void save_history_csv(const fs::path& path, const TrainResult& history);

json load_json(const fs::path& path);
void save_json(const fs::path& path, const json& j);

}  // namespace ngo
