#include <fmt/format.h>

#include "reopt/llm.hpp"

namespace reopt {

namespace {

constexpr std::string_view kPlanner = R"(You are a reoptimization planner. Use the deterministic model representation to interpret the requested change and propose candidate model edits. Return JSON only. Use candidate_action_sets as the canonical output format.

Each candidate_action_set is one executable plan; put all coordinated edits for a single plan in the same action set. Each item must be a JSON object with actions=[...]; the patch list key inside each item must be actions. Each patch object must use the canonical keys op, target, scope, update, and optional notes. Return multiple candidate action sets only when they are genuinely different alternative plans, and do not duplicate the same edits in both grouped and flat forms.

Patch payloads must be executable as written: use concrete ids and numeric literals for indices, row labels, and values whenever the model representation provides enough information. Do not emit pseudo-code, formulas, set names, or symbolic placeholders inside patch indices or values. For keyed parameter edits, place the concrete sub-index in update.key. For numeric requests phrased as "increase by", "decrease by", or other additive changes, use update.delta instead of overwriting with update.value. For materialized_linear constraint families, use matching concrete row ids in lhs_spec.rows and rhs_spec, and concrete executable variable indices in every term. If the representation explicitly exposes a compact problem-specific semantic lhs_spec.kind, that semantic payload may be used instead of materializing every row term. If a valid executable patch cannot be expressed, return empty candidate lists rather than a symbolic or guessed placeholder patch.

Required JSON keys:
edit_summary (short free-form summary of the requested edit);
affected_sets (object mapping entity or set labels to identifiers mentioned or strongly implied by the delta, or {} if none);
relevant_components (list of model component names);
candidate_action_sets (list of executable candidate plans, each {actions: [...]});
planning_hints (optional planner hints such as edit_scope='local|structural' or expected_reuse='high|low').)";

constexpr std::string_view kPrelude =
    "This is a fresh repair attempt for the same user request from a fresh planning pass. Preserve the user's "
    "intent, not the previous implementation details. Use the runtime feedback below only to avoid the previous "
    "failure mode. The items below are runtime feedback from earlier attempts in this same run.";

constexpr std::string_view kSelector = R"(You choose the fastest safe reoptimization solve strategy. Return JSON only.

Pick exactly one solve strategy from the allowed list. Do not invent toolbox items or unsupported strategies. Toolbox plans are executable in this runtime and must match the chosen solve strategy.

Prefer warm+tuned over warm alone when both warm reuse and tuned solving are available and the edit looks reuse-friendly. Prefer warm reuse for local edits when a reusable solution exists but tuned solving is unavailable or unnecessary. Prefer tuned or scratch for structural edits when warm reuse looks fragile.

Required JSON keys: solve_strategy, toolbox_plan, rationale. Optional JSON key: confidence as a number in [0,1].)";

// Keep in step with the executor in patch/apply.cpp.
constexpr std::string_view kSchemas = R"(Patch schemas (indices are arrays of entity ids, e.g. ["P2","C2"]):
- UPDATE_PARAMETER: target=<parameter>; update.key=<index> (keyed parameters only); exactly one of update.value | update.delta. A whole keyed map may be replaced by update.value=[[<index>, <number>], ...] without a key; key-list parameters take only update.value=[<index>, ...].
- UPDATE_BOUND: target=<variable family>; scope.index=<index> (omit to change the family default); update.bound_type=lower|upper|fixed; exactly one of update.value | update.delta.
- UPDATE_CONSTRAINT_RHS: target=<constraint family>; scope.row=<row key> (omit for every row); exactly one of update.value | update.delta | update.rhs (a number or {"param": <name>, "key": [...]}).
- UPDATE_CONSTRAINT_LHS: target=<constraint family>; update.lhs_spec=<lhs spec>; optional update.index_set=[<row key>, ...].
- UPDATE_OBJECTIVE_COEFF: target=<objective component>; scope.variable=<variable family>; scope.index=<index>; exactly one of update.value | update.delta.
- UPDATE_OBJECTIVE_WEIGHT: target=<objective component>; exactly one of update.value | update.delta.
- UPDATE_COEFFICIENT: target=<row-name regex>; scope.variable_pattern=<column-name regex>; exactly one of update.value | update.scale. Applies to explicit-term rows only.
- FIX_VARIABLES_BY_PATTERN: target=<column-name regex>; optional scope.filters={family, var_type}; update.value=<number>.
- UPDATE_CONSTRAINT_RHS_BY_PATTERN: target=<row-name regex>; exactly one of update.value | update.scale.
- ADD_VARIABLE_FAMILY: update.family={name, index_set, var_type, default_bounds?, description?, tags?}; optional update.parameters=[<parameter entry>, ...].
- ADD_CONSTRAINT_FAMILY: update.family={name, index_set, lhs_spec, sense, rhs_spec, description?, tags?}; optional update.parameters.
- REMOVE_CONSTRAINT_FAMILY: target=<constraint family>.
- ADD_OBJECTIVE_COMPONENT: update.family={name, weight, terms:[{family, index?, coefficient}], description?, tags?}; optional update.parameters.
Row and column names look like family(id1,id2). lhs_spec kinds: {"kind":"indexed_sum","family":..,"match_positions":[..],"coefficient":..}, {"kind":"explicit_terms","rows":[{"row":[..],"terms":[{"family":..,"index":[..],"coefficient":..}]}]}, or a semantic kind listed in the model representation.)";

}  // namespace

std::string_view planner_instruction() { return kPlanner; }
std::string_view repair_prelude() { return kPrelude; }
std::string_view selector_instruction() { return kSelector; }
std::string patch_schema_text() { return std::string(kSchemas); }

void check_request(const ChatRequest& request) {
  if (request.system.empty() || request.user.empty()) {
    throw Error("InvalidRequest", "chat request needs both a system and a user message");
  }
  if (!(request.timeout > 0)) throw Error("InvalidRequest", "chat request timeout must be positive");
  if (request.max_tokens <= 0) throw Error("InvalidRequest", "max_tokens must be positive");
}

Json chat_request_body(const ChatRequest& request) {
  return {{"model", request.model},
          {"temperature", request.temperature},
          {"max_tokens", request.max_tokens},
          {"messages",
           Json::array({{{"role", "system"}, {"content", request.system}}, {{"role", "user"}, {"content", request.user}}})}};
}

ChatRequest assemble_planner_prompt(std::string_view render, std::string_view delta, const FailureRecord* repair,
                                    std::string_view framing, std::string_view op_schemas,
                                    const PromptSettings& settings) {
  ChatRequest request;
  request.model = settings.model;
  request.temperature = settings.temperature;
  request.max_tokens = settings.max_tokens;
  request.timeout = settings.timeout;

  std::string system(planner_instruction());
  if (!framing.empty()) fmt::format_to(std::back_inserter(system), "\n\n{}", framing);
  system += "\n\nAllowed patch operators: ";
  for (std::size_t i = 0; i < all_patch_ops().size(); ++i) {
    if (i) system += ", ";
    system += to_string(all_patch_ops()[i]);
  }
  system += '.';
  if (!op_schemas.empty()) fmt::format_to(std::back_inserter(system), "\n\n{}", op_schemas);
  request.system = std::move(system);

  std::string user;
  if (repair) {
    user += repair_prelude();
    user += '\n';
    fmt::format_to(std::back_inserter(user), "- failure_stage: {}\n", to_string(repair->stage));
    fmt::format_to(std::back_inserter(user), "- failure_kind: {}\n", repair->kind);
    fmt::format_to(std::back_inserter(user), "- failure_message: {}\n", repair->message);
    fmt::format_to(std::back_inserter(user), "- repair_instruction: {}\n", repair->repair_instruction);
    if (!repair->attempt_history.empty()) {
      user += "- attempt_history:\n";
      for (std::size_t i = 0; i < repair->attempt_history.size(); ++i) {
        const auto& a = repair->attempt_history[i];
        fmt::format_to(std::back_inserter(user), "  - attempt {}: {} / {}: {}\n", i + 1, to_string(a.stage), a.kind,
                       a.message);
      }
    }
    user += '\n';
  }
  fmt::format_to(std::back_inserter(user), "Model representation:\n{}\n\nRequested change:\n{}\n", render, delta);
  request.user = std::move(user);
  return request;
}

ChatRequest assemble_selector_prompt(const std::vector<ActionSet>& action_sets, const StrategyCatalog& catalog,
                                     const Json& hints, bool prior_available, const PromptSettings& settings) {
  const auto allowed = catalog.available();
  if (allowed.empty()) throw Error("InvalidRequest", "strategy catalog has no available entry");
  ChatRequest request;
  request.model = settings.model;
  request.temperature = settings.temperature;
  request.max_tokens = settings.max_tokens;
  request.timeout = settings.timeout;
  request.system = std::string(selector_instruction());

  std::string user = "Allowed solve strategies:\n";
  for (const auto& name : allowed) {
    const auto* entry = catalog.find(name);
    fmt::format_to(std::back_inserter(user), "- {}: {}{}\n", name, entry->description,
                   entry->preset_name ? fmt::format(" (preset {})", *entry->preset_name) : "");
  }
  Json sets = Json::array();
  for (const auto& set : action_sets) sets.push_back(action_set_to_json(set));
  fmt::format_to(std::back_inserter(user), "\nNormalized candidate action sets:\n{}\n", sets.dump(2));
  if (hints.is_object() && !hints.empty()) fmt::format_to(std::back_inserter(user), "\nPlanning hints:\n{}\n", hints.dump(2));
  fmt::format_to(std::back_inserter(user), "\nPrior solution available: {}\n", prior_available ? "yes" : "no");
  user +=
      "\nRespond with one JSON object: {\"solve_strategy\": <one allowed name>, \"toolbox_plan\": [<toolbox items>], "
      "\"rationale\": <text>, \"confidence\": <number in [0,1], optional>}.\n";
  request.user = std::move(user);
  return request;
}

}  // namespace reopt
