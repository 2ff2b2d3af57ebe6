#pragma once

#include <filesystem>
#include <string>

#include "oedflow/trainer.hpp"

namespace oedflow {

/// "OEDF" checkpoint: magic, u32 version, u32 metadata length, UTF-8 JSON
/// metadata (configs, step, RNG states, block table), then float64
/// little-endian blocks in the order the block table lists them.
void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::string encode_checkpoint(const Checkpoint& c);
Checkpoint decode_checkpoint(const std::string& bytes, const std::string& name = "checkpoint");

nlohmann::json flow_config_to_json(const FlowConfig& cfg);
FlowConfig flow_config_from_json(const nlohmann::json& j);
nlohmann::json train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);

}  // namespace oedflow
