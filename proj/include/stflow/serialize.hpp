#pragma once

#include "json.hpp"

#include "stflow/flow.hpp"
#include "stflow/model.hpp"
#include "stflow/training.hpp"

namespace stflow {

// JSON views of the configuration structs. Reading accepts partial objects;
// missing keys keep their defaults.
void to_json(nlohmann::json& j, const FlowParams& p);
void from_json(const nlohmann::json& j, FlowParams& p);
void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);
void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);
void to_json(nlohmann::json& j, const EpochRecord& e);

}  // namespace stflow
