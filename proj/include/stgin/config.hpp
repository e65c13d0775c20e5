#pragma once

#include <filesystem>

#include <json.hpp>

#include "stgin/data.hpp"
#include "stgin/model.hpp"
#include "stgin/training.hpp"

namespace stgin {

/// Everything a run needs besides the data. Read from a JSON file with the
/// sections "model", "training" and "data"; keys not listed in README.md are
/// rejected.
struct ExperimentConfig {
  model::ModelConfig model;
  train::TrainingConfig training;
  NormScheme scheme = NormScheme::minmax;
  std::size_t steps_per_day = 288;
};

ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);
nlohmann::ordered_json to_json(const ExperimentConfig& c);

}  // namespace stgin
