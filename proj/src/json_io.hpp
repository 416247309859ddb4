#pragma once

#include "ionlock/noise_synthesis.hpp"

#include <json.hpp>

#include <string>

namespace ionlock {

nlohmann::json model_to_json_value(const NoiseModel& m);
NoiseModel model_from_json_value(const nlohmann::json& j, const std::string& where);
nlohmann::json drift_to_json(const DriftProcess& d);
DriftProcess drift_from_json(const nlohmann::json& j, const std::string& where);

} // namespace ionlock
