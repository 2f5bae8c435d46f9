#pragma once

#include <json.hpp>

#include "dcreg/simulation.hpp"

namespace dcreg {

/// Overwrites the fields present in `j`; unknown keys are rejected. A
/// "preset" key, if present, is applied first.
void apply_scenario_json(ScenarioConfig& cfg, const nlohmann::json& j);
nlohmann::json scenario_to_json(const ScenarioConfig& cfg);

}  // namespace dcreg
