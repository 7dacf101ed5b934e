#pragma once

// Checkpoint archive:
//   bytes 0-7   magic "OCCLCKPT"
//   u32 LE      format version (kCheckpointFormat)
//   u64 LE      header length in bytes
//   header      JSON: {"format", "param_version", "config", "arrays": [
//                 {"name", "group", "shape": [n, c, h, w], "offset"}]}
//   payload     float32 LE values, `offset` counted in floats

#include <filesystem>

#include <json.hpp>

#include "occlusim/network.hpp"

namespace occlusim {

inline constexpr uint32_t kCheckpointFormat = 1;

nlohmann::json config_to_json(const NetworkConfig& config);
NetworkConfig config_from_json(const nlohmann::json& j);

void save_checkpoint(const std::filesystem::path& path, const ParamSet& params);
/// Validates the archive and the parameter layout against the stored config.
ParamSet load_checkpoint(const std::filesystem::path& path);

}  // namespace occlusim
