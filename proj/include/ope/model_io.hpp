#pragma once

#include <string>
#include <variant>

#include <json.hpp>

#include "ope/model.hpp"

namespace ope {

using AnyModel = std::variant<TabularPOMDP, TabularDPOMDP>;

ModelKind kind_of(const AnyModel& m);
const SpaceSpec& spaces_of(const AnyModel& m);
double gamma_of(const AnyModel& m);
ValidationReport validate_model(const AnyModel& m);

// Model documents:
//   {"kind": "pomdp"|"dpomdp", "spaces": {"n_u","n_z","n_a",["n_o"],"reward_values"},
//    "transition", "observation"/"independent_observation", "pre_observation" (pomdp),
//    "reward", "gamma", "init"}
// Nested arrays follow the index order documented on the model structs.
nlohmann::json model_to_json(const AnyModel& m);
AnyModel model_from_json(const nlohmann::json& j);

// Policy documents: {"kind": "behavior"|"eval_memoryless", "model_kind": "pomdp"|"dpomdp",
// "tables": [t][context][a]}. Decoupled behavior contexts are u * n_z + z,
// Decoupled evaluation contexts are z * n_o + o. "model_kind" defaults to pomdp.
using StoredPolicy = std::variant<BehaviorPolicy, EvaluationPolicy>;

nlohmann::json policy_to_json(const BehaviorPolicy& p);
nlohmann::json policy_to_json(const EvaluationPolicy& p);
StoredPolicy policy_from_json(const nlohmann::json& j);

nlohmann::json read_json_file(const std::string& path);
void write_json_file(const std::string& path, const nlohmann::json& j);

AnyModel load_model(const std::string& path);
StoredPolicy load_policy(const std::string& path);

}  // namespace ope
