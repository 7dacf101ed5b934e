#pragma once

// Run configuration file (JSON). Every section and key is optional and falls
// back to the library defaults; unknown keys are errors. See
// configs/schema.json for the full key list.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "occlusim/adaptation.hpp"
#include "occlusim/imaging.hpp"
#include "occlusim/losses.hpp"
#include "occlusim/network.hpp"
#include "occlusim/training.hpp"

namespace occlusim {

inline constexpr int kConfigSchemaVersion = 1;

struct DatasetSection {
  int height = 64;
  int width = 64;
  int count_per_kind = 60;
  double train_fraction = 200.0 / 240.0;
};

struct PathsSection {
  std::string base_images;
  std::string data;
  std::string out;
};

struct RunConfigFile {
  int schema_version = kConfigSchemaVersion;
  std::optional<uint64_t> seed;
  DatasetSection dataset;
  std::vector<DegradationSpec> degradations;  // defaults: all four kinds
  NetworkConfig network;
  LossConfig loss;
  TrainConfig train;  // its network/loss members are filled from the sections above
  AdaptConfig adapt;  // its loss member likewise
  PathsSection paths;
};

RunConfigFile default_run_config();
RunConfigFile run_config_from_json(const nlohmann::json& j);
RunConfigFile load_run_config(const std::filesystem::path& path);
nlohmann::json run_config_to_json(const RunConfigFile& config);

nlohmann::json loss_to_json(const LossConfig& c);
nlohmann::json train_to_json(const TrainConfig& c);
nlohmann::json adapt_to_json(const AdaptConfig& c);

/// Seed precedence: explicit flag, then config file, then OCCLUSIM_SEED, then 0.
uint64_t resolve_seed(std::optional<uint64_t> flag, const RunConfigFile& config);

}  // namespace occlusim
