#pragma once

// JSON conversions for the model configuration, shared by checkpoints and the
// command-line front end.

#include <json.hpp>

#include "dgcn/model.hpp"

namespace dgcn {

nlohmann::json model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);

}  // namespace dgcn
