#include "dcreg/scenario_json.hpp"

#include "dcreg/error.hpp"

namespace dcreg {

namespace {

template <class T>
void read(const nlohmann::json& j, T& out, const std::string& key) {
  try {
    out = j.get<T>();
  } catch (const nlohmann::json::exception&) {
    throw Error(ErrorCode::ConfigInvalid, "scenario: field '" + key + "' has the wrong type");
  }
}

}  // namespace

void apply_scenario_json(ScenarioConfig& cfg, const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorCode::ConfigInvalid, "scenario: JSON must be an object");
  if (j.contains("preset")) {
    std::string name;
    read(j.at("preset"), name, "preset");
    cfg = scenario_preset(name);
  }
  for (const auto& [key, val] : j.items()) {
    if (key == "preset") continue;
    std::string text;
    if (key == "id") read(val, cfg.id, key);
    else if (key == "model") { read(val, text, key); cfg.model = parse_event_model(text); }
    else if (key == "generator") { read(val, text, key); cfg.generator = parse_generator(text); }
    else if (key == "n") read(val, cfg.n, key);
    else if (key == "reps") read(val, cfg.reps, key);
    else if (key == "seed" || key == "base_seed") read(val, cfg.base_seed, key);
    else if (key == "s") read(val, cfg.s, key);
    else if (key == "floor_pi") read(val, cfg.floor_pi, key);
    else if (key == "horizon") read(val, cfg.horizon, key);
    else if (key == "a1") read(val, cfg.a1, key);
    else if (key == "a2") read(val, cfg.a2, key);
    else if (key == "p_bern") read(val, cfg.p_bern, key);
    else if (key == "v_scale") read(val, cfg.v_scale, key);
    else if (key == "psi3_0") read(val, cfg.psi3_0, key);
    else if (key == "psi3_1") read(val, cfg.psi3_1, key);
    else if (key == "psi4_0") read(val, cfg.psi4_0, key);
    else if (key == "psi4_1") read(val, cfg.psi4_1, key);
    else if (key == "gap") read(val, cfg.gap, key);
    else if (key == "gamma0") read(val, cfg.gamma0, key);
    else if (key == "gamma1") read(val, cfg.gamma1, key);
    else if (key == "beta1") read(val, cfg.beta1, key);
    else if (key == "beta2") read(val, cfg.beta2, key);
    else if (key == "gamma02") read(val, cfg.gamma02, key);
    else if (key == "beta22") read(val, cfg.beta22, key);
    else if (key == "v_threshold") read(val, cfg.v_threshold, key);
    else if (key == "lambda") read(val, cfg.lambda, key);
    else if (key == "nu") read(val, cfg.nu, key);
    else if (key == "t0_grid") read(val, cfg.t0_grid, key);
    else throw Error(ErrorCode::ConfigInvalid, "scenario: unknown field '" + key + "'");
  }
  cfg.validate();
}

nlohmann::json scenario_to_json(const ScenarioConfig& c) {
  return {
      {"id", c.id},         {"model", std::string(to_string(c.model))},
      {"generator", std::string(to_string(c.generator))},
      {"n", c.n},           {"reps", c.reps},
      {"seed", c.base_seed}, {"s", c.s},
      {"floor_pi", c.floor_pi}, {"horizon", c.horizon},
      {"a1", c.a1},         {"a2", c.a2},
      {"p_bern", c.p_bern}, {"v_scale", c.v_scale},
      {"psi3_0", c.psi3_0}, {"psi3_1", c.psi3_1},
      {"psi4_0", c.psi4_0}, {"psi4_1", c.psi4_1},
      {"gap", c.gap},       {"gamma0", c.gamma0},
      {"gamma1", c.gamma1}, {"beta1", c.beta1},
      {"beta2", c.beta2},   {"gamma02", c.gamma02},
      {"beta22", c.beta22}, {"v_threshold", c.v_threshold},
      {"lambda", c.lambda}, {"nu", c.nu},
      {"t0_grid", c.t0_grid},
  };
}

}  // namespace dcreg
