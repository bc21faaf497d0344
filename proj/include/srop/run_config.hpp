#pragma once

// Run configuration: one JSON document with the sections experiment, data,
// model, train, eval and paths. Unknown keys are rejected everywhere.

#include <filesystem>
#include <string>

#include "json.hpp"
#include "srop/dataset.hpp"
#include "srop/model.hpp"
#include "srop/training.hpp"

namespace srop {

struct RunConfig {
  std::string experiment = "run";
  std::string notes;
  DatasetConfig data;
  /// Raw model section; resolved against layout defaults by model_config_for.
  nlohmann::ordered_json model = nlohmann::ordered_json::object();
  TrainConfig train;
  std::string eval_baseline;
  std::string dataset_path;
  std::string test_dataset_path;
  std::string out_dir;
};

RunConfig parse_run_config(const nlohmann::ordered_json& j);
RunConfig load_run_config(const std::filesystem::path& path);
nlohmann::ordered_json run_config_to_json(const RunConfig& config);

nlohmann::ordered_json dataset_config_to_json(const DatasetConfig& config);
DatasetConfig dataset_config_from_json(const nlohmann::ordered_json& j);

/// Architecture defaults for a dataset layout and spatial dimension.
ModelConfig default_model_config(Layout layout, std::size_t d);
/// Overlays a model section onto the layout defaults.
ModelConfig model_config_from_json(const nlohmann::ordered_json& j, const ModelConfig& defaults);
nlohmann::ordered_json model_config_to_json(const ModelConfig& config);

}  // namespace srop
