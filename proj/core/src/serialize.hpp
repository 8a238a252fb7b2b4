#pragma once

// JSON adapters for the config structs, shared by checkpoints and run
// configuration files. Internal header, not installed.

#include <json.hpp>

#include "iptdet/model.hpp"
#include "iptdet/training.hpp"

namespace iptdet {

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);
void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

} // namespace iptdet
