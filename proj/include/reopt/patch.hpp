#pragma once

// Patch language: parsing planner documents, validation, normalization (the
// deterministic "programmer") and atomic application of action sets.

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "reopt/diff.hpp"
#include "reopt/model.hpp"
#include "reopt/model_io.hpp"

namespace reopt {

enum class PatchOp {
  update_parameter,
  update_bound,
  update_constraint_rhs,
  update_constraint_lhs,
  update_objective_coeff,
  update_objective_weight,
  update_coefficient,
  fix_variables_by_pattern,
  update_constraint_rhs_by_pattern,
  add_variable_family,
  add_constraint_family,
  remove_constraint_family,
  add_objective_component,
};

/// Wire names, e.g. "UPDATE_PARAMETER".
std::string_view to_string(PatchOp op);
std::optional<PatchOp> parse_patch_op(std::string_view name);
const std::vector<PatchOp>& all_patch_ops();
bool is_pattern_op(PatchOp op);
bool is_structural_op(PatchOp op);

/// pi = (op, target, scope, update). Scope and update stay JSON because their
/// shape depends on the op; validate_patch decodes them.
struct Patch {
  PatchOp op = PatchOp::update_parameter;
  std::string target;
  Json scope = Json::object();
  Json update = Json::object();
  std::optional<std::string> notes;

  bool operator==(const Patch&) const = default;
};

/// Ordered group of patches applied as one unit.
struct ActionSet {
  std::vector<Patch> actions;

  bool operator==(const ActionSet&) const = default;
};

struct PlannerOutput {
  std::string edit_summary;
  std::map<std::string, std::vector<std::string>> affected_sets;
  std::vector<std::string> relevant_components;
  std::vector<ActionSet> candidate_action_sets;
  Json planning_hints = Json::object();
  std::optional<std::string> intention;
};

Json patch_to_json(const Patch& patch);
/// Throws Error("UnknownOp") for an op outside the vocabulary, ParseError for
/// anything else malformed.
Patch patch_from_json(const Json& j, const std::string& path = "");
Json action_set_to_json(const ActionSet& actions);
ActionSet action_set_from_json(const Json& j, const std::string& path = "");
Json planner_output_to_json(const PlannerOutput& output);
PlannerOutput planner_output_from_json(const Json& document);

/// Strips code fences, finds the outermost well-formed object and maps it.
/// Throws Error("MalformedDocument" | "MissingKey" | "UnknownOp").
PlannerOutput parse_planner_output(std::string_view document);

// --- Validation ------------------------------------------------------------

enum class ViolationKind {
  schema,
  unknown_target,
  unknown_index,
  bound_inversion,
  type_mismatch,
  pattern_matches_nothing,
  duplicate_name,
  unresolved_reference,
};

/// "UnknownTarget", "BoundInversion", ...
std::string_view to_string(ViolationKind kind);

struct Violation {
  ViolationKind kind;
  std::string message;
};

struct PatchOptions {
  /// When false a pattern op selecting nothing is accepted as a no-op and a
  /// warning is reported instead.
  bool empty_pattern_is_error = true;
  const SemanticRegistry* registry = &SemanticRegistry::global();
};

/// Never throws for bad patches and never mutates the state; returns the
/// violations found (empty = ok).
std::vector<Violation> validate_patch(const Patch& patch, const ModelState& state, const PatchOptions& options = {});

// --- Normalization ---------------------------------------------------------

/// Canonicalizes entity labels through the entity registry, coerces index
/// forms into arrays of ids, moves payload fields to their canonical keys and
/// rewrites RHS edits that are pure parameter reads into UPDATE_PARAMETER.
/// Deterministic and idempotent. Throws Error("UnmappableLabel").
ActionSet normalize_action_set(const ActionSet& actions, const ModelState& state,
                               const SemanticRegistry& registry = SemanticRegistry::global());

// --- Application -----------------------------------------------------------

class ApplyError : public Error {
 public:
  ApplyError(std::optional<std::size_t> patch_index, std::vector<Violation> violations);

  /// Failing patch; empty when the assembled action set as a whole did not
  /// instantiate.
  std::optional<std::size_t> patch_index() const noexcept { return patch_index_; }
  const std::vector<Violation>& violations() const noexcept { return violations_; }

 private:
  std::optional<std::size_t> patch_index_;
  std::vector<Violation> violations_;
};

/// Applies one validated patch. The version is not touched. Throws ApplyError.
ModelState apply_patch(const ModelState& state, const Patch& patch, const PatchOptions& options = {},
                       std::vector<std::string>* warnings = nullptr);

struct ApplyResult {
  ModelState state;
  StateDiff diff;
  std::vector<std::string> warnings;
};

/// All-or-nothing: on success the version advances by one (unless the set is
/// empty); on failure ApplyError is thrown and the caller's state is intact.
/// The final state must instantiate.
ApplyResult apply_action_set(const ModelState& state, const ActionSet& actions, const PatchOptions& options = {});

/// Names of every object a patch touches: the target, added family names and,
/// for pattern ops when a state is given, the families owning matched keys.
std::vector<std::string> patch_targets(const Patch& patch, const ModelState* state = nullptr);

}  // namespace reopt
