#pragma once

// JSON state documents, planner-facing rendering and CPLEX LP text.

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>

#include <json.hpp>

#include "reopt/model.hpp"

namespace reopt {

using Json = nlohmann::json;

// --- JSON encoding of the model pieces -------------------------------------
//
// Index keys are arrays of strings; a bare string or number is accepted on
// input as a 1-tuple. Infinite bounds are written as "inf" / "-inf".
// Every *_from_json reports problems as ParseError with a JSON-pointer-like
// location rooted at `path`.

Json key_to_json(const IndexKey& key);
IndexKey key_from_json(const Json& j, const std::string& path = "");
/// Scalar entity id from a string or integral number.
std::string entity_from_json(const Json& j, const std::string& path = "");

Json bound_to_json(double value);
double bound_from_json(const Json& j, const std::string& path = "");

Json coef_to_json(const CoefExpr& expr);
CoefExpr coef_from_json(const Json& j, const std::string& path = "");

Json lhs_to_json(const LhsSpec& lhs);
LhsSpec lhs_from_json(const Json& j, const std::string& path = "");

Json rhs_to_json(const RhsSpec& rhs);
RhsSpec rhs_from_json(const Json& j, const std::string& path = "");

Json parameter_value_to_json(const ParameterValue& value);
ParameterValue parameter_value_from_json(const Json& j, const std::string& path = "");

Json parameter_to_json(const ParameterEntry& entry);
ParameterEntry parameter_from_json(const Json& j, const std::string& path = "");
Json variable_family_to_json(const VariableFamily& family);
VariableFamily variable_family_from_json(const Json& j, const std::string& path = "");
Json constraint_family_to_json(const ConstraintFamily& family);
ConstraintFamily constraint_family_from_json(const Json& j, const std::string& path = "");
Json objective_component_to_json(const ObjectiveComponent& component);
ObjectiveComponent objective_component_from_json(const Json& j, const std::string& path = "");

// --- State documents ----------------------------------------------------------

Json save_state(const ModelState& state);
/// Canonical text form (2-space indent, trailing newline). Byte-stable.
std::string save_state_text(const ModelState& state);

/// Builds a state through the registering builders so every invariant is
/// enforced. Unknown top-level keys are ignored (scenario files carry extra
/// metadata next to the state).
ModelState load_state(const Json& document);
ModelState load_state_text(std::string_view text);
ModelState load_state_file(const std::filesystem::path& path);

/// Parses JSON text, mapping syntax errors to ParseError("byte N").
Json parse_json_text(std::string_view text);
Json read_json_file(const std::filesystem::path& path);

/// Pulls a JSON object out of free text: markdown fences are stripped and the
/// outermost balanced object that parses is returned. Throws
/// Error("NoObjectFound").
Json extract_json(std::string_view text);
std::string read_text_file(const std::filesystem::path& path);

// --- Planner rendering ------------------------------------------------------

struct RenderOptions {
  std::size_t index_cap = 200;
};

inline constexpr std::string_view kTruncationMarker = "... truncated:";

/// Deterministic text view of the model for the patch planner.
std::string render_for_planner(const ModelState& state, const RenderOptions& options = {});

// --- CPLEX LP text ----------------------------------------------------------

/// Makes a flat key safe as an LP name (illegal characters become '_').
std::string sanitize_lp_name(std::string_view name);

std::string write_lp(const Instance& instance, std::string_view problem_name = "reopt");

/// Reads the LP subset produced by write_lp plus the usual spelling variants
/// (st / s.t., Generals / Binaries, free bounds). Maximize is rejected.
Instance read_lp(std::string_view text);

}  // namespace reopt
