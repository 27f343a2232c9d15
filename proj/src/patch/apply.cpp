#include <algorithm>
#include <cmath>
#include <regex>

#include <fmt/format.h>

#include "reopt/patch.hpp"

namespace reopt {

namespace {

// One executor serves both validate_patch and apply_patch: it works on a copy
// and records violations instead of throwing, so the two can never disagree.
class Executor {
 public:
  Executor(const ModelState& state, const PatchOptions& options) : state_(state), options_(options) {}

  void run(const Patch& patch) {
    try {
      dispatch(patch);
      if (violations_.empty()) (void)instantiate(state_, registry());
    } catch (const Error& e) {
      violate_from(e);
    } catch (const std::exception& e) {
      violate(ViolationKind::schema, e.what());
    }
  }

  ModelState& state() { return state_; }
  std::vector<Violation>& violations() { return violations_; }
  std::vector<std::string>& warnings() { return warnings_; }

 private:
  enum class Numeric { value, delta, scale, none };
  struct NumericUpdate {
    Numeric kind = Numeric::none;
    double amount = 0.0;
  };

  const SemanticRegistry& registry() const {
    return options_.registry ? *options_.registry : SemanticRegistry::global();
  }

  void violate(ViolationKind kind, std::string message) { violations_.push_back({kind, std::move(message)}); }

  void violate_from(const Error& e) {
    const auto& code = e.code();
    if (code == "DuplicateName") {
      violate(ViolationKind::duplicate_name, e.what());
    } else if (code == "UnresolvedReference" || code == "UnregisteredSemanticKind") {
      violate(ViolationKind::unresolved_reference, e.what());
    } else {
      violate(ViolationKind::schema, e.what());
    }
  }

  // Missing names become UnknownTarget, names of the wrong kind TypeMismatch.
  void missing_target(const std::string& name, NameKind wanted) {
    if (auto kind = state_.lookup(name)) {
      violate(ViolationKind::type_mismatch,
              fmt::format("'{}' is a {}, not a {}", name, to_string(*kind), to_string(wanted)));
    } else {
      violate(ViolationKind::unknown_target, fmt::format("no {} named '{}'", to_string(wanted), name));
    }
  }

  static std::optional<double> number_of(const Json& j) {
    if (j.is_number()) return j.get<double>();
    if (j.is_string()) {
      const auto s = j.get<std::string>();
      if (s == "inf" || s == "+inf" || s == "Infinity") return kInfinity;
      if (s == "-inf" || s == "-Infinity") return -kInfinity;
    }
    return std::nullopt;
  }

  /// Reads exactly one of the allowed numeric fields from `update`.
  std::optional<NumericUpdate> numeric(const Json& update, std::initializer_list<Numeric> allowed) {
    static constexpr std::pair<Numeric, const char*> kFields[] = {
        {Numeric::value, "value"}, {Numeric::delta, "delta"}, {Numeric::scale, "scale"}};
    std::vector<std::string> names;
    std::optional<NumericUpdate> found;
    int present = 0;
    for (auto [kind, field] : kFields) {
      if (std::find(allowed.begin(), allowed.end(), kind) == allowed.end()) continue;
      names.emplace_back(field);
      auto it = update.find(field);
      if (it == update.end() || it->is_null()) continue;
      ++present;
      auto number = number_of(*it);
      if (!number || (kind != Numeric::value && !std::isfinite(*number))) {
        violate(ViolationKind::schema, fmt::format("update.{} must be a number", field));
        return std::nullopt;
      }
      found = NumericUpdate{kind, *number};
    }
    if (present != 1) {
      violate(ViolationKind::schema, fmt::format("update needs exactly one of {}", fmt::join(names, ", ")));
      return std::nullopt;
    }
    return found;
  }

  static double combine(const NumericUpdate& u, double current) {
    switch (u.kind) {
      case Numeric::delta:
        return current + u.amount;
      case Numeric::scale:
        return current * u.amount;
      default:
        return u.amount;
    }
  }

  std::optional<IndexKey> key_field(const Json& object, const char* field, const char* where) {
    auto it = object.find(field);
    if (it == object.end() || it->is_null()) return std::nullopt;
    return key_from_json(*it, fmt::format("{}.{}", where, field));
  }

  std::optional<std::regex> compile(const std::string& pattern, const char* what) {
    if (pattern.empty()) {
      violate(ViolationKind::schema, fmt::format("{} pattern is empty", what));
      return std::nullopt;
    }
    try {
      return std::regex(pattern, std::regex::ECMAScript);
    } catch (const std::regex_error& e) {
      violate(ViolationKind::schema, fmt::format("{} pattern '{}' is not a valid regular expression", what, pattern));
      return std::nullopt;
    }
  }

  void nothing_matched(const std::string& message) {
    if (options_.empty_pattern_is_error) {
      violate(ViolationKind::pattern_matches_nothing, message);
    } else {
      warnings_.push_back(message);
    }
  }

  void dispatch(const Patch& patch) {
    switch (patch.op) {
      case PatchOp::update_parameter:
        return update_parameter(patch);
      case PatchOp::update_bound:
        return update_bound(patch);
      case PatchOp::update_constraint_rhs:
        return update_constraint_rhs(patch);
      case PatchOp::update_constraint_lhs:
        return update_constraint_lhs(patch);
      case PatchOp::update_objective_coeff:
        return update_objective_coeff(patch);
      case PatchOp::update_objective_weight:
        return update_objective_weight(patch);
      case PatchOp::update_coefficient:
        return update_coefficient(patch);
      case PatchOp::fix_variables_by_pattern:
        return fix_variables(patch);
      case PatchOp::update_constraint_rhs_by_pattern:
        return update_rhs_by_pattern(patch);
      case PatchOp::add_variable_family:
      case PatchOp::add_constraint_family:
      case PatchOp::add_objective_component:
        return add_family(patch);
      case PatchOp::remove_constraint_family:
        return remove_constraint_family(patch);
    }
  }

  void update_parameter(const Patch& patch) {
    auto* entry = state_.find_parameter(patch.target);
    if (!entry) return missing_target(patch.target, NameKind::parameter);
    const auto key = key_field(patch.update, "key", "update");

    if (auto* scalar = std::get_if<double>(&entry->value)) {
      if (key && !key->empty()) {
        return violate(ViolationKind::type_mismatch, fmt::format("parameter '{}' is scalar and takes no key", entry->name));
      }
      auto u = numeric(patch.update, {Numeric::value, Numeric::delta});
      if (!u) return;
      *scalar = combine(*u, *scalar);
      if (!std::isfinite(*scalar)) violate(ViolationKind::schema, "parameter values must be finite");
      return;
    }

    if (auto* keyed = std::get_if<KeyedValues>(&entry->value)) {
      if (!key) {
        // Whole-map replacement.
        auto it = patch.update.find("value");
        if (it == patch.update.end() || it->is_number() || patch.update.contains("delta")) {
          return violate(ViolationKind::schema,
                         fmt::format("keyed parameter '{}' needs update.key (or a full keyed value)", entry->name));
        }
        auto value = parameter_value_from_json(*it, "update.value");
        if (!std::holds_alternative<KeyedValues>(value)) {
          return violate(ViolationKind::type_mismatch, fmt::format("'{}' holds keyed values", entry->name));
        }
        entry->value = std::move(value);
        check_parameter(*entry);
        return;
      }
      auto u = numeric(patch.update, {Numeric::value, Numeric::delta});
      if (!u) return;
      auto it = keyed->find(*key);
      if (it == keyed->end()) {
        if (u->kind == Numeric::delta) {
          return violate(ViolationKind::unknown_index,
                         fmt::format("parameter '{}' has no entry ({}) to add to", entry->name, format_key(*key)));
        }
        if (!keyed->empty() && keyed->begin()->first.size() != key->size()) {
          return violate(ViolationKind::unknown_index,
                         fmt::format("key ({}) does not match the arity of parameter '{}'", format_key(*key), entry->name));
        }
        it = keyed->emplace(*key, 0.0).first;
      }
      it->second = combine(*u, it->second);
      if (!std::isfinite(it->second)) violate(ViolationKind::schema, "parameter values must be finite");
      check_parameter(*entry);
      return;
    }

    // Key lists are replaced wholesale.
    auto it = patch.update.find("value");
    if (key || it == patch.update.end() || patch.update.contains("delta")) {
      return violate(ViolationKind::schema, fmt::format("key-list parameter '{}' takes only update.value", entry->name));
    }
    KeyList keys;
    if (!it->is_array()) return violate(ViolationKind::type_mismatch, "update.value must be a list of keys");
    for (std::size_t i = 0; i < it->size(); ++i) keys.push_back(key_from_json((*it)[i], fmt::format("update.value/{}", i)));
    entry->value = std::move(keys);
    check_parameter(*entry);
  }

  bool check_bounds(const VariableFamily& family, const Bounds& b, const std::string& where) {
    if (std::isnan(b.lower) || std::isnan(b.upper)) {
      violate(ViolationKind::schema, fmt::format("{}: bound is not a number", where));
      return false;
    }
    if (b.lower > b.upper) {
      violate(ViolationKind::bound_inversion, fmt::format("{}: lower {} exceeds upper {}", where, b.lower, b.upper));
      return false;
    }
    if (family.var_type == VarType::binary && (b.lower < 0.0 || b.upper > 1.0)) {
      violate(ViolationKind::type_mismatch, fmt::format("{}: binary bounds must lie within [0, 1]", where));
      return false;
    }
    return true;
  }

  void update_bound(const Patch& patch) {
    auto* family = state_.find_variable_family(patch.target);
    if (!family) return missing_target(patch.target, NameKind::variable_family);
    const auto index = key_field(patch.scope, "index", "scope");
    if (index && !family->contains(*index)) {
      return violate(ViolationKind::unknown_index,
                     fmt::format("variable family '{}' has no index ({})", family->name, format_key(*index)));
    }
    auto type = patch.update.find("bound_type");
    if (type == patch.update.end() || !type->is_string() ||
        (*type != "lower" && *type != "upper" && *type != "fixed")) {
      return violate(ViolationKind::schema, "update.bound_type must be 'lower', 'upper' or 'fixed'");
    }
    auto u = numeric(patch.update, {Numeric::value, Numeric::delta});
    if (!u) return;

    Bounds b = index ? family->bounds_at(*index) : family->default_bounds;
    if (*type == "lower") {
      b.lower = combine(*u, b.lower);
    } else if (*type == "upper") {
      b.upper = combine(*u, b.upper);
    } else {
      b.lower = b.upper = combine(*u, b.lower);
    }
    const auto where = index ? flat_key(family->name, *index) : family->name;
    if (!check_bounds(*family, b, where)) return;
    if (index) {
      family->bound_overrides[*index] = b;
    } else {
      family->default_bounds = b;
    }
  }

  std::optional<CoefExpr> rhs_expression(const ConstraintFamily& family, const IndexKey& row) const {
    if (auto it = family.rhs.rows.find(row); it != family.rhs.rows.end()) return it->second;
    return family.rhs.uniform;
  }

  void update_constraint_rhs(const Patch& patch) {
    auto* family = state_.find_constraint_family(patch.target);
    if (!family) return missing_target(patch.target, NameKind::constraint_family);
    const auto rows = row_keys(*family, state_, registry());
    const auto row = key_field(patch.scope, "row", "scope");
    if (row && std::find(rows.begin(), rows.end(), *row) == rows.end()) {
      return violate(ViolationKind::unknown_index,
                     fmt::format("constraint family '{}' has no row ({})", family->name, format_key(*row)));
    }

    std::optional<CoefExpr> expr;
    std::optional<NumericUpdate> u;
    if (auto rhs = patch.update.find("rhs"); rhs != patch.update.end()) {
      if (patch.update.contains("value") || patch.update.contains("delta")) {
        return violate(ViolationKind::schema, "update needs exactly one of value, delta, rhs");
      }
      expr = coef_from_json(*rhs, "update.rhs");
    } else {
      u = numeric(patch.update, {Numeric::value, Numeric::delta});
      if (!u) return;
      if (u->kind == Numeric::value) {
        if (!std::isfinite(u->amount)) return violate(ViolationKind::schema, "right-hand sides must be finite");
        expr = u->amount;
      }
    }

    auto shifted = [&](const IndexKey& r) -> CoefExpr {
      auto current = rhs_expression(*family, r);
      if (!current) {
        throw Error("UnresolvedReference",
                    fmt::format("{}: row ({}) has no right-hand side to add to", family->name, format_key(r)));
      }
      return resolve(*current, state_, r) + u->amount;
    };

    if (row) {
      family->rhs.rows[*row] = expr ? *expr : shifted(*row);
    } else if (expr) {
      family->rhs.uniform = *expr;
      family->rhs.rows.clear();
    } else {
      std::map<IndexKey, CoefExpr> updated;
      for (const auto& r : rows) updated[r] = shifted(r);
      family->rhs.rows = std::move(updated);
    }
  }

  void update_constraint_lhs(const Patch& patch) {
    auto* family = state_.find_constraint_family(patch.target);
    if (!family) return missing_target(patch.target, NameKind::constraint_family);
    auto spec = patch.update.find("lhs_spec");
    if (spec == patch.update.end()) return violate(ViolationKind::schema, "update.lhs_spec is required");
    family->lhs = lhs_from_json(*spec, "update.lhs_spec");
    if (auto rows = patch.update.find("index_set"); rows != patch.update.end()) {
      if (!rows->is_array()) return violate(ViolationKind::schema, "update.index_set must be a list of keys");
      KeyList keys;
      for (std::size_t i = 0; i < rows->size(); ++i) keys.push_back(key_from_json((*rows)[i], fmt::format("update.index_set/{}", i)));
      family->index_set = std::move(keys);
    }
    if (const auto* semantic = std::get_if<SemanticLhs>(&family->lhs); semantic && !registry().contains(semantic->kind)) {
      return violate(ViolationKind::unresolved_reference,
                     fmt::format("semantic lhs kind '{}' is not registered", semantic->kind));
    }
    check_constraint_family(*family);
  }

  // Coefficient of one variable inside one objective component, before the
  // weight is applied.
  double objective_coefficient(const ObjectiveComponent& component, const std::string& family, const IndexKey& index) {
    if (auto it = component.coefficient_overrides.find(flat_key(family, index)); it != component.coefficient_overrides.end()) {
      return it->second;
    }
    double total = 0.0;
    for (const auto& term : component.terms) {
      if (term.family != family || (term.index && *term.index != index)) continue;
      total += resolve(term.coefficient, state_, index);
    }
    return total;
  }

  void update_objective_coeff(const Patch& patch) {
    auto* component = state_.find_objective_component(patch.target);
    if (!component) return missing_target(patch.target, NameKind::objective_component);
    auto variable = patch.scope.find("variable");
    if (variable == patch.scope.end() || !variable->is_string()) {
      return violate(ViolationKind::schema, "scope.variable must name a variable family");
    }
    const auto* family = state_.find_variable_family(variable->get<std::string>());
    if (!family) return missing_target(variable->get<std::string>(), NameKind::variable_family);
    const auto index = key_field(patch.scope, "index", "scope");
    if (!index) return violate(ViolationKind::schema, "scope.index is required");
    if (!family->contains(*index)) {
      return violate(ViolationKind::unknown_index,
                     fmt::format("variable family '{}' has no index ({})", family->name, format_key(*index)));
    }
    auto u = numeric(patch.update, {Numeric::value, Numeric::delta});
    if (!u) return;
    const double value = combine(*u, objective_coefficient(*component, family->name, *index));
    if (!std::isfinite(value)) return violate(ViolationKind::schema, "objective coefficients must be finite");
    component->coefficient_overrides[flat_key(family->name, *index)] = value;
  }

  void update_objective_weight(const Patch& patch) {
    auto* component = state_.find_objective_component(patch.target);
    if (!component) return missing_target(patch.target, NameKind::objective_component);
    auto u = numeric(patch.update, {Numeric::value, Numeric::delta});
    if (!u) return;
    const double weight = combine(*u, component->weight);
    if (!std::isfinite(weight)) return violate(ViolationKind::schema, "weights must be finite");
    component->weight = weight;
  }

  void update_coefficient(const Patch& patch) {
    auto rows = compile(patch.target, "row");
    if (!rows) return;
    std::string var_pattern = ".";
    if (auto it = patch.scope.find("variable_pattern"); it != patch.scope.end()) {
      if (!it->is_string()) return violate(ViolationKind::schema, "scope.variable_pattern must be a string");
      var_pattern = it->get<std::string>();
    }
    auto vars = compile(var_pattern, "variable");
    if (!vars) return;
    auto u = numeric(patch.update, {Numeric::value, Numeric::scale});
    if (!u) return;
    if (!std::isfinite(u->amount)) return violate(ViolationKind::schema, "coefficients must be finite");

    std::size_t changed = 0;
    std::vector<std::string> generated;
    for (auto& family : state_.constraint_families) {
      auto* explicit_terms = std::get_if<ExplicitTerms>(&family.lhs);
      if (!explicit_terms) {
        for (const auto& row : row_keys(family, state_, registry())) {
          if (std::regex_search(flat_key(family.name, row), *rows)) {
            generated.push_back(family.name);
            break;
          }
        }
        continue;
      }
      for (auto& [row, terms] : explicit_terms->rows) {
        if (!std::regex_search(flat_key(family.name, row), *rows)) continue;
        for (auto& term : terms) {
          if (!std::regex_search(flat_key(term.family, term.index), *vars)) continue;
          term.coefficient = combine(*u, resolve(term.coefficient, state_, term.index));
          ++changed;
        }
      }
    }
    if (changed == 0 && !generated.empty()) {
      return violate(ViolationKind::type_mismatch,
                     fmt::format("matched rows belong to generated families ({}); only explicit_terms rows carry "
                                 "editable coefficients",
                                 fmt::join(generated, ", ")));
    }
    if (changed == 0) {
      nothing_matched(fmt::format("no coefficient matches rows '{}' and variables '{}'", patch.target, var_pattern));
    }
  }

  void fix_variables(const Patch& patch) {
    auto pattern = compile(patch.target, "variable");
    if (!pattern) return;
    auto u = numeric(patch.update, {Numeric::value});
    if (!u) return;
    std::optional<std::string> only_family;
    std::optional<VarType> only_type;
    if (auto filters = patch.scope.find("filters"); filters != patch.scope.end() && filters->is_object()) {
      if (auto f = filters->find("family"); f != filters->end() && f->is_string()) only_family = f->get<std::string>();
      if (auto t = filters->find("var_type"); t != filters->end() && t->is_string()) {
        only_type = parse_var_type(t->get<std::string>());
      }
    }
    std::size_t fixed = 0;
    for (auto& family : state_.variable_families) {
      if ((only_family && family.name != *only_family) || (only_type && family.var_type != *only_type)) continue;
      for (const auto& index : family.index_set) {
        const auto key = flat_key(family.name, index);
        if (!std::regex_search(key, *pattern)) continue;
        if (family.var_type != VarType::continuous && std::floor(u->amount) != u->amount) {
          return violate(ViolationKind::type_mismatch, fmt::format("{}: cannot fix an integer variable to {}", key, u->amount));
        }
        if (!check_bounds(family, {u->amount, u->amount}, key)) return;
        family.bound_overrides[index] = {u->amount, u->amount};
        ++fixed;
      }
    }
    if (fixed == 0) nothing_matched(fmt::format("no variable matches '{}'", patch.target));
  }

  void update_rhs_by_pattern(const Patch& patch) {
    auto pattern = compile(patch.target, "row");
    if (!pattern) return;
    auto u = numeric(patch.update, {Numeric::value, Numeric::scale});
    if (!u) return;
    if (!std::isfinite(u->amount)) return violate(ViolationKind::schema, "right-hand sides must be finite");
    std::size_t changed = 0;
    for (auto& family : state_.constraint_families) {
      for (const auto& row : row_keys(family, state_, registry())) {
        if (!std::regex_search(flat_key(family.name, row), *pattern)) continue;
        double current = 0.0;
        if (u->kind == Numeric::scale) {
          auto expr = rhs_expression(family, row);
          if (!expr) throw Error("UnresolvedReference", fmt::format("{}: row ({}) has no right-hand side", family.name, format_key(row)));
          current = resolve(*expr, state_, row);
        }
        family.rhs.rows[row] = combine(*u, current);
        ++changed;
      }
    }
    if (changed == 0) nothing_matched(fmt::format("no constraint row matches '{}'", patch.target));
  }

  static const Json* definition(const Json& update) {
    for (const char* field : {"family", "definition", "variable", "constraint", "objective", "component"}) {
      if (auto it = update.find(field); it != update.end() && it->is_object()) return &*it;
    }
    return nullptr;
  }

  void add_family(const Patch& patch) {
    const Json* found = definition(patch.update);
    Json def = found ? *found : patch.update;
    if (!def.contains("name")) {
      if (patch.target.empty()) return violate(ViolationKind::schema, "the new family needs a name");
      def["name"] = patch.target;
    }
    if (auto params = patch.update.find("parameters"); params != patch.update.end() && params->is_array()) {
      for (std::size_t i = 0; i < params->size(); ++i) {
        state_ = register_parameter(state_, parameter_from_json((*params)[i], fmt::format("update.parameters/{}", i)));
      }
    }
    switch (patch.op) {
      case PatchOp::add_variable_family:
        state_ = register_variable_family(state_, variable_family_from_json(def, "update.family"));
        break;
      case PatchOp::add_constraint_family: {
        auto family = constraint_family_from_json(def, "update.family");
        if (const auto* semantic = std::get_if<SemanticLhs>(&family.lhs); semantic && !registry().contains(semantic->kind)) {
          return violate(ViolationKind::unresolved_reference,
                         fmt::format("semantic lhs kind '{}' is not registered", semantic->kind));
        }
        state_ = register_constraint_family(state_, std::move(family));
        break;
      }
      default:
        state_ = register_objective_component(state_, objective_component_from_json(def, "update.family"));
        break;
    }
  }

  void remove_constraint_family(const Patch& patch) {
    auto& families = state_.constraint_families;
    auto it = std::find_if(families.begin(), families.end(), [&](const auto& f) { return f.name == patch.target; });
    if (it == families.end()) return missing_target(patch.target, NameKind::constraint_family);
    families.erase(it);
  }

  ModelState state_;
  const PatchOptions& options_;
  std::vector<Violation> violations_;
  std::vector<std::string> warnings_;
};

std::string describe(const std::vector<Violation>& violations) {
  std::vector<std::string> parts;
  for (const auto& v : violations) parts.push_back(fmt::format("{}: {}", to_string(v.kind), v.message));
  return fmt::format("{}", fmt::join(parts, "; "));
}

}  // namespace

std::string_view to_string(ViolationKind kind) {
  switch (kind) {
    case ViolationKind::schema:
      return "SchemaViolation";
    case ViolationKind::unknown_target:
      return "UnknownTarget";
    case ViolationKind::unknown_index:
      return "UnknownIndex";
    case ViolationKind::bound_inversion:
      return "BoundInversion";
    case ViolationKind::type_mismatch:
      return "TypeMismatch";
    case ViolationKind::pattern_matches_nothing:
      return "PatternMatchesNothing";
    case ViolationKind::duplicate_name:
      return "DuplicateName";
    case ViolationKind::unresolved_reference:
      return "UnresolvedReference";
  }
  return "SchemaViolation";
}

ApplyError::ApplyError(std::optional<std::size_t> patch_index, std::vector<Violation> violations)
    : Error(violations.empty() ? std::string("ApplyError") : std::string(to_string(violations.front().kind)),
            patch_index ? fmt::format("patch {}: {}", *patch_index, describe(violations))
                        : fmt::format("action set: {}", describe(violations))),
      patch_index_(patch_index),
      violations_(std::move(violations)) {}

std::vector<Violation> validate_patch(const Patch& patch, const ModelState& state, const PatchOptions& options) {
  Executor executor(state, options);
  executor.run(patch);
  return std::move(executor.violations());
}

ModelState apply_patch(const ModelState& state, const Patch& patch, const PatchOptions& options,
                       std::vector<std::string>* warnings) {
  Executor executor(state, options);
  executor.run(patch);
  if (!executor.violations().empty()) throw ApplyError(0, std::move(executor.violations()));
  if (warnings) warnings->insert(warnings->end(), executor.warnings().begin(), executor.warnings().end());
  return std::move(executor.state());
}

ApplyResult apply_action_set(const ModelState& state, const ActionSet& actions, const PatchOptions& options) {
  ApplyResult result{state, {}, {}};
  for (std::size_t i = 0; i < actions.actions.size(); ++i) {
    Executor executor(result.state, options);
    executor.run(actions.actions[i]);
    if (!executor.violations().empty()) throw ApplyError(i, std::move(executor.violations()));
    result.state = std::move(executor.state());
    result.warnings.insert(result.warnings.end(), executor.warnings().begin(), executor.warnings().end());
  }
  if (!actions.actions.empty()) {
    try {
      (void)instantiate(result.state, options.registry ? *options.registry : SemanticRegistry::global());
    } catch (const Error& e) {
      throw ApplyError(std::nullopt, {{ViolationKind::unresolved_reference, e.what()}});
    }
    result.state.version = state.version + 1;
  }
  result.diff = diff_states(state, result.state);
  return result;
}

std::vector<std::string> patch_targets(const Patch& patch, const ModelState* state) {
  std::vector<std::string> out;
  auto add = [&](const std::string& name) {
    if (!name.empty() && std::find(out.begin(), out.end(), name) == out.end()) out.push_back(name);
  };
  if (!is_pattern_op(patch.op)) add(patch.target);
  if (auto it = patch.scope.find("variable"); it != patch.scope.end() && it->is_string()) add(it->get<std::string>());
  for (const char* field : {"family", "definition", "variable", "constraint", "objective", "component"}) {
    if (auto it = patch.update.find(field); it != patch.update.end() && it->is_object()) {
      if (auto name = it->find("name"); name != it->end() && name->is_string()) add(name->get<std::string>());
    }
  }
  if (is_pattern_op(patch.op) && state) {
    std::regex pattern;
    try {
      pattern = std::regex(patch.target, std::regex::ECMAScript);
    } catch (const std::regex_error&) {
      return out;
    }
    if (patch.op == PatchOp::fix_variables_by_pattern) {
      for (const auto& family : state->variable_families) {
        for (const auto& index : family.index_set) {
          if (std::regex_search(flat_key(family.name, index), pattern)) {
            add(family.name);
            break;
          }
        }
      }
    } else {
      for (const auto& family : state->constraint_families) {
        for (const auto& row : family.index_set) {
          if (std::regex_search(flat_key(family.name, row), pattern)) {
            add(family.name);
            break;
          }
        }
      }
    }
  }
  return out;
}

}  // namespace reopt
