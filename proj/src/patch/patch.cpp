#include "reopt/patch.hpp"

#include <array>

#include <fmt/format.h>

namespace reopt {

namespace {

struct OpName {
  PatchOp op;
  std::string_view name;
};

constexpr std::array<OpName, 13> kOps{{
    {PatchOp::update_parameter, "UPDATE_PARAMETER"},
    {PatchOp::update_bound, "UPDATE_BOUND"},
    {PatchOp::update_constraint_rhs, "UPDATE_CONSTRAINT_RHS"},
    {PatchOp::update_constraint_lhs, "UPDATE_CONSTRAINT_LHS"},
    {PatchOp::update_objective_coeff, "UPDATE_OBJECTIVE_COEFF"},
    {PatchOp::update_objective_weight, "UPDATE_OBJECTIVE_WEIGHT"},
    {PatchOp::update_coefficient, "UPDATE_COEFFICIENT"},
    {PatchOp::fix_variables_by_pattern, "FIX_VARIABLES_BY_PATTERN"},
    {PatchOp::update_constraint_rhs_by_pattern, "UPDATE_CONSTRAINT_RHS_BY_PATTERN"},
    {PatchOp::add_variable_family, "ADD_VARIABLE_FAMILY"},
    {PatchOp::add_constraint_family, "ADD_CONSTRAINT_FAMILY"},
    {PatchOp::remove_constraint_family, "REMOVE_CONSTRAINT_FAMILY"},
    {PatchOp::add_objective_component, "ADD_OBJECTIVE_COMPONENT"},
}};

// Scope and update may be omitted or null in planner output.
Json object_or_empty(const Json& j, const char* field, const std::string& path) {
  auto it = j.find(field);
  if (it == j.end() || it->is_null()) return Json::object();
  if (!it->is_object()) throw ParseError(path + "/" + field, "expected an object");
  return *it;
}

std::vector<std::string> string_list(const Json& j, const std::string& path) {
  std::vector<std::string> out;
  if (j.is_string()) return {j.get<std::string>()};
  if (!j.is_array()) throw ParseError(path, "expected a list of strings");
  for (const auto& item : j) {
    out.push_back(item.is_string() ? item.get<std::string>() : item.dump());
  }
  return out;
}

}  // namespace

std::string_view to_string(PatchOp op) {
  for (const auto& entry : kOps) {
    if (entry.op == op) return entry.name;
  }
  return "UNKNOWN";
}

std::optional<PatchOp> parse_patch_op(std::string_view name) {
  for (const auto& entry : kOps) {
    if (entry.name == name) return entry.op;
  }
  return std::nullopt;
}

const std::vector<PatchOp>& all_patch_ops() {
  static const std::vector<PatchOp> ops = [] {
    std::vector<PatchOp> out;
    for (const auto& entry : kOps) out.push_back(entry.op);
    return out;
  }();
  return ops;
}

bool is_pattern_op(PatchOp op) {
  return op == PatchOp::update_coefficient || op == PatchOp::fix_variables_by_pattern ||
         op == PatchOp::update_constraint_rhs_by_pattern;
}

bool is_structural_op(PatchOp op) {
  return op == PatchOp::update_constraint_lhs || op == PatchOp::add_variable_family ||
         op == PatchOp::add_constraint_family || op == PatchOp::remove_constraint_family ||
         op == PatchOp::add_objective_component;
}

Json patch_to_json(const Patch& patch) {
  Json out{{"op", to_string(patch.op)}, {"target", patch.target}, {"scope", patch.scope}, {"update", patch.update}};
  if (patch.notes) out["notes"] = *patch.notes;
  return out;
}

Patch patch_from_json(const Json& j, const std::string& path) {
  if (!j.is_object()) throw ParseError(path, "expected a patch object");
  auto op_field = j.find("op");
  if (op_field == j.end()) throw ParseError(path, "missing required field 'op'");
  if (!op_field->is_string()) throw ParseError(path + "/op", "expected an operation name");
  const auto name = op_field->get<std::string>();
  auto op = parse_patch_op(name);
  if (!op) throw Error("UnknownOp", fmt::format("{}: unknown patch operation '{}'", path.empty() ? "patch" : path, name));

  Patch patch;
  patch.op = *op;
  if (auto t = j.find("target"); t != j.end() && !t->is_null()) {
    if (!t->is_string()) throw ParseError(path + "/target", "expected a string");
    patch.target = t->get<std::string>();
  }
  patch.scope = object_or_empty(j, "scope", path);
  patch.update = object_or_empty(j, "update", path);
  if (auto n = j.find("notes"); n != j.end() && n->is_string()) patch.notes = n->get<std::string>();
  return patch;
}

Json action_set_to_json(const ActionSet& actions) {
  Json list = Json::array();
  for (const auto& patch : actions.actions) list.push_back(patch_to_json(patch));
  return {{"actions", std::move(list)}};
}

ActionSet action_set_from_json(const Json& j, const std::string& path) {
  const Json* list = &j;
  std::string list_path = path;
  if (j.is_object()) {
    auto it = j.find("actions");
    if (it == j.end()) throw ParseError(path, "missing required field 'actions'");
    list = &*it;
    list_path += "/actions";
  }
  if (!list->is_array()) throw ParseError(list_path, "expected an array of patches");
  ActionSet out;
  for (std::size_t i = 0; i < list->size(); ++i) {
    out.actions.push_back(patch_from_json((*list)[i], fmt::format("{}/{}", list_path, i)));
  }
  return out;
}

Json planner_output_to_json(const PlannerOutput& output) {
  Json sets = Json::array();
  for (const auto& set : output.candidate_action_sets) sets.push_back(action_set_to_json(set));
  Json out{{"edit_summary", output.edit_summary},
           {"affected_sets", output.affected_sets},
           {"relevant_components", output.relevant_components},
           {"candidate_action_sets", std::move(sets)},
           {"planning_hints", output.planning_hints}};
  if (output.intention) out["intention"] = *output.intention;
  return out;
}

PlannerOutput planner_output_from_json(const Json& document) {
  if (!document.is_object()) throw Error("MalformedDocument", "planner output is not a JSON object");
  PlannerOutput out;
  auto summary = document.find("edit_summary");
  if (summary == document.end()) throw Error("MissingKey", "planner output lacks 'edit_summary'");
  out.edit_summary = summary->is_string() ? summary->get<std::string>() : summary->dump();

  if (auto sets = document.find("candidate_action_sets"); sets != document.end()) {
    if (!sets->is_array()) throw ParseError("/candidate_action_sets", "expected an array of action sets");
    for (std::size_t i = 0; i < sets->size(); ++i) {
      out.candidate_action_sets.push_back(action_set_from_json((*sets)[i], fmt::format("/candidate_action_sets/{}", i)));
    }
  } else if (auto actions = document.find("actions"); actions != document.end()) {
    out.candidate_action_sets.push_back(action_set_from_json(*actions, "/actions"));
  } else {
    throw Error("MissingKey", "planner output lacks 'candidate_action_sets'");
  }

  if (auto affected = document.find("affected_sets"); affected != document.end() && affected->is_object()) {
    for (const auto& [label, ids] : affected->items()) {
      out.affected_sets[label] = string_list(ids, "/affected_sets/" + label);
    }
  }
  if (auto relevant = document.find("relevant_components"); relevant != document.end() && !relevant->is_null()) {
    out.relevant_components = string_list(*relevant, "/relevant_components");
  }
  if (auto hints = document.find("planning_hints"); hints != document.end() && hints->is_object()) {
    out.planning_hints = *hints;
  }
  if (auto intention = document.find("intention"); intention != document.end() && intention->is_string()) {
    out.intention = intention->get<std::string>();
  }
  return out;
}

PlannerOutput parse_planner_output(std::string_view document) {
  Json j;
  try {
    j = extract_json(document);
  } catch (const Error&) {
    throw Error("MalformedDocument", "planner output contains no parsable JSON object");
  }
  return planner_output_from_json(j);
}

}  // namespace reopt
