#pragma once

// Structured optimization model: parameter store, variable / constraint /
// objective families, entity registry and the flattening into a concrete
// Instance that the solver consumes.
//
// A ModelState is a value. Every builder returns a new state and leaves its
// argument untouched, so older versions stay readable while a newer one is
// being built or patched.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

#include <json.hpp>

#include "reopt/error.hpp"

namespace reopt {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

/// Ordered tuple of entity ids. Scalar indices are 1-tuples.
using IndexKey = std::vector<std::string>;

/// "P1,C2" form used in diff paths and renderings.
std::string format_key(const IndexKey& key);
/// Inverse of format_key.
IndexKey parse_key(std::string_view text);
/// "flows(P1,C2)": the flat name of one variable or row.
std::string flat_key(std::string_view family, const IndexKey& key);
/// Splits a flat key back into family and index. Throws ParseError.
std::pair<std::string, IndexKey> parse_flat_key(std::string_view flat);

/// True for names usable as family / parameter identifiers.
bool is_identifier(std::string_view name);
/// True for strings usable as one component of an IndexKey. A leading '$' is
/// reserved for key projections.
bool is_entity_id(std::string_view id);

enum class VarType { binary, integer, continuous };
enum class Sense { less_equal, greater_equal, equal };

std::string_view to_string(VarType type);
std::string_view to_string(Sense sense);
VarType parse_var_type(std::string_view text);
Sense parse_sense(std::string_view text);

struct Bounds {
  double lower = 0.0;
  double upper = kInfinity;

  bool operator==(const Bounds&) const = default;
};

/// Default bounds for a family of the given type: [0,1] for binaries and
/// [0, +inf) otherwise.
Bounds default_bounds_for(VarType type);

using KeyedValues = std::map<IndexKey, double>;
using KeyList = std::vector<IndexKey>;
using ParameterValue = std::variant<double, KeyedValues, KeyList>;

struct ParameterEntry {
  std::string name;
  ParameterValue value = 0.0;
  std::string description;
  std::set<std::string> tags;

  bool operator==(const ParameterEntry&) const = default;
};

/// Parameter lookup. Each key part is either a literal entity id or a
/// projection "$n" selecting component n of the context index (the variable
/// index for coefficients, the row key for right-hand sides). An empty key
/// reads a scalar parameter.
struct ParamRef {
  std::string parameter;
  std::vector<std::string> key;

  bool operator==(const ParamRef&) const = default;
};

using CoefExpr = std::variant<double, ParamRef>;

struct Term {
  std::string family;
  IndexKey index;
  CoefExpr coefficient = 1.0;

  bool operator==(const Term&) const = default;
};

/// Row-by-row listing of terms. Rows absent from the map are empty.
struct ExplicitTerms {
  std::map<IndexKey, std::vector<Term>> rows;

  bool operator==(const ExplicitTerms&) const = default;
};

/// Sum over the members of `family` whose components at `match_positions`
/// equal the row key, component by component.
struct IndexedSum {
  std::string family;
  std::vector<std::size_t> match_positions;
  CoefExpr coefficient = 1.0;

  bool operator==(const IndexedSum&) const = default;
};

/// Rows generated by a registered domain expander.
struct SemanticLhs {
  std::string kind;
  nlohmann::json payload;

  bool operator==(const SemanticLhs&) const = default;
};

using LhsSpec = std::variant<ExplicitTerms, IndexedSum, SemanticLhs>;

/// Right-hand sides: a per-row entry wins over the uniform expression.
struct RhsSpec {
  std::optional<CoefExpr> uniform;
  std::map<IndexKey, CoefExpr> rows;

  bool operator==(const RhsSpec&) const = default;
};

struct VariableFamily {
  std::string name;
  KeyList index_set;
  VarType var_type = VarType::continuous;
  Bounds default_bounds;
  std::map<IndexKey, Bounds> bound_overrides;
  std::string description;
  std::set<std::string> tags;

  Bounds bounds_at(const IndexKey& index) const;
  bool contains(const IndexKey& index) const;

  bool operator==(const VariableFamily&) const = default;
};

struct ConstraintFamily {
  std::string name;
  KeyList index_set;
  LhsSpec lhs = ExplicitTerms{};
  Sense sense = Sense::less_equal;
  RhsSpec rhs;
  std::string description;
  std::set<std::string> tags;

  bool operator==(const ConstraintFamily&) const = default;
};

/// A term without an index applies to every member of the family.
struct ObjectiveTerm {
  std::string family;
  std::optional<IndexKey> index;
  CoefExpr coefficient = 1.0;

  bool operator==(const ObjectiveTerm&) const = default;
};

struct ObjectiveComponent {
  std::string name;
  double weight = 1.0;
  std::vector<ObjectiveTerm> terms;
  /// Literal coefficients keyed by flat variable key; replaces whatever the
  /// terms produce for that variable.
  std::map<std::string, double> coefficient_overrides;
  std::string description;
  std::set<std::string> tags;

  bool operator==(const ObjectiveComponent&) const = default;
};

enum class NameKind { parameter, variable_family, constraint_family, objective_component };
std::string_view to_string(NameKind kind);

/// Z = (M, P, p). Families keep registration order; that order fixes the
/// column and row order of the instantiated model. The objective sense is
/// always minimization.
struct ModelState {
  std::vector<ParameterEntry> parameters;
  std::vector<VariableFamily> variable_families;
  std::vector<ConstraintFamily> constraint_families;
  std::vector<ObjectiveComponent> objective_components;
  std::map<std::string, std::string> entity_registry;
  std::uint64_t version = 0;

  const ParameterEntry* find_parameter(std::string_view name) const;
  const VariableFamily* find_variable_family(std::string_view name) const;
  const ConstraintFamily* find_constraint_family(std::string_view name) const;
  const ObjectiveComponent* find_objective_component(std::string_view name) const;
  ParameterEntry* find_parameter(std::string_view name);
  VariableFamily* find_variable_family(std::string_view name);
  ConstraintFamily* find_constraint_family(std::string_view name);
  ObjectiveComponent* find_objective_component(std::string_view name);

  /// Which namespace (if any) already holds `name`.
  std::optional<NameKind> lookup(std::string_view name) const;

  bool operator==(const ModelState&) const = default;
};

ModelState new_state();

ModelState register_parameter(const ModelState& state, ParameterEntry entry);
ModelState register_variable_family(const ModelState& state, VariableFamily family);
/// With `check_references`, every variable and parameter reference must
/// resolve now instead of at instantiation.
ModelState register_constraint_family(const ModelState& state, ConstraintFamily family,
                                      bool check_references = false);
ModelState register_objective_component(const ModelState& state, ObjectiveComponent component,
                                        bool check_references = false);
ModelState register_entity(const ModelState& state, std::string label, std::string canonical_id);

/// Checks per-entry invariants shared by the builders and the patch engine.
/// Throws Error("MalformedKeys" | "InvalidModel").
void check_parameter(const ParameterEntry& entry);
void check_variable_family(const VariableFamily& family);
void check_constraint_family(const ConstraintFamily& family);
void check_objective_component(const ObjectiveComponent& component);

/// Resolves a coefficient expression against the parameter store.
/// Throws Error("UnresolvedReference").
double resolve(const CoefExpr& expr, const ModelState& state, const IndexKey& context);
/// The concrete parameter key a reference selects for `context`.
IndexKey select_key(const ParamRef& ref, const IndexKey& context);

// ---------------------------------------------------------------------------
// Semantic constraint kinds

struct SemanticTerm {
  std::string family;
  IndexKey index;
  double coefficient = 1.0;
};

struct SemanticRow {
  IndexKey key;
  std::vector<SemanticTerm> terms;
};

using SemanticExpander =
    std::function<std::vector<SemanticRow>(const nlohmann::json& payload, const ModelState& state)>;

/// Domain packs register expanders for their semantic lhs kinds here.
class SemanticRegistry {
 public:
  static SemanticRegistry& global();

  /// `reads` names the parameters the expander looks at by itself (beyond
  /// any named in the payload); normalization uses it to keep rewrites safe.
  void register_kind(const std::string& kind, SemanticExpander expander, std::vector<std::string> reads = {});
  bool contains(std::string_view kind) const;
  std::vector<std::string> parameters_read(std::string_view kind) const;
  std::vector<SemanticRow> expand(const SemanticLhs& lhs, const ModelState& state) const;
  std::vector<std::string> kinds() const;

 private:
  mutable std::shared_mutex mutex_;
  std::map<std::string, SemanticExpander, std::less<>> expanders_;
  std::map<std::string, std::vector<std::string>, std::less<>> reads_;
};

// ---------------------------------------------------------------------------
// Instantiation

struct InstanceVariable {
  std::string key;
  VarType type = VarType::continuous;
  double lower = 0.0;
  double upper = kInfinity;
  double objective = 0.0;

  bool operator==(const InstanceVariable&) const = default;
};

struct InstanceRow {
  std::string key;
  std::vector<std::pair<std::size_t, double>> terms;  // (column, coefficient)
  Sense sense = Sense::less_equal;
  double rhs = 0.0;

  bool operator==(const InstanceRow&) const = default;
};

/// Flattened min c'x s.t. Ax (<=,>=,=) b, l <= x <= u, x_j integer for
/// binary/integer columns.
struct Instance {
  std::vector<InstanceVariable> variables;
  std::vector<InstanceRow> rows;

  std::optional<std::size_t> column(std::string_view key) const;
  std::optional<std::size_t> row(std::string_view key) const;
  std::unordered_map<std::string, std::size_t> column_map() const;
  bool has_integers() const;

  bool operator==(const Instance& other) const {
    return variables == other.variables && rows == other.rows;
  }
};

/// Throws Error("UnresolvedReference" | "UnregisteredSemanticKind").
Instance instantiate(const ModelState& state,
                     const SemanticRegistry& registry = SemanticRegistry::global());

/// Row keys of one constraint family in instantiation order.
KeyList row_keys(const ConstraintFamily& family, const ModelState& state,
                 const SemanticRegistry& registry = SemanticRegistry::global());

}  // namespace reopt
