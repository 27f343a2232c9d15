#include "reopt/model.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>

#include <fmt/format.h>

namespace reopt {

namespace {

template <typename Range, typename Name>
auto find_named(Range& range, Name name) -> decltype(&*range.begin()) {
  auto it = std::find_if(range.begin(), range.end(), [&](const auto& item) { return item.name == name; });
  return it == range.end() ? nullptr : &*it;
}

void require_fresh(const ModelState& state, const std::string& name) {
  if (!is_identifier(name)) {
    throw Error("InvalidName", fmt::format("'{}' is not a valid identifier", name));
  }
  if (auto kind = state.lookup(name)) {
    throw Error("DuplicateName", fmt::format("name '{}' is already registered as a {}", name, to_string(*kind)));
  }
}

void check_key(const IndexKey& key, std::string_view where) {
  for (const auto& part : key) {
    if (!is_entity_id(part)) {
      throw Error("MalformedKeys", fmt::format("{}: invalid entity id '{}'", where, part));
    }
  }
}

void check_keys(const KeyList& keys, std::string_view where) {
  std::set<IndexKey> seen;
  for (const auto& key : keys) {
    check_key(key, where);
    if (key.size() != keys.front().size()) {
      throw Error("MalformedKeys", fmt::format("{}: index keys have mixed arity", where));
    }
    if (!seen.insert(key).second) {
      throw Error("MalformedKeys", fmt::format("{}: duplicate index ({})", where, format_key(key)));
    }
  }
}

void check_coef(const CoefExpr& expr, std::string_view where) {
  if (const auto* literal = std::get_if<double>(&expr); literal && !std::isfinite(*literal)) {
    throw Error("InvalidModel", fmt::format("{}: coefficient must be finite", where));
  }
}

/// Every variable and parameter reference of a family must resolve.
void check_references(const ConstraintFamily& family, const ModelState& state) {
  // Instantiating a scratch state holding only this family exercises exactly
  // the resolution path used later.
  ModelState probe = state;
  probe.constraint_families = {family};
  probe.objective_components.clear();
  (void)instantiate(probe);
}

}  // namespace

std::string format_key(const IndexKey& key) {
  std::string out;
  for (std::size_t i = 0; i < key.size(); ++i) {
    if (i) out += ',';
    out += key[i];
  }
  return out;
}

IndexKey parse_key(std::string_view text) {
  IndexKey key;
  if (text.empty()) return key;
  std::size_t start = 0;
  while (true) {
    auto comma = text.find(',', start);
    key.emplace_back(text.substr(start, comma == std::string_view::npos ? text.size() - start : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return key;
}

std::string flat_key(std::string_view family, const IndexKey& key) {
  return fmt::format("{}({})", family, format_key(key));
}

std::pair<std::string, IndexKey> parse_flat_key(std::string_view flat) {
  auto open = flat.find('(');
  if (open == std::string_view::npos || flat.empty() || flat.back() != ')') {
    throw ParseError(std::string(flat), "not a flat key of the form family(index)");
  }
  return {std::string(flat.substr(0, open)), parse_key(flat.substr(open + 1, flat.size() - open - 2))};
}

bool is_identifier(std::string_view name) {
  if (name.empty()) return false;
  return std::all_of(name.begin(), name.end(), [](unsigned char c) {
    return std::isalnum(c) || c == '_' || c == '-';
  });
}

bool is_entity_id(std::string_view id) {
  if (id.empty() || id.front() == '$') return false;
  return std::none_of(id.begin(), id.end(), [](unsigned char c) {
    return c == '(' || c == ')' || c == ',' || std::isspace(c) || std::iscntrl(c);
  });
}

std::string_view to_string(VarType type) {
  switch (type) {
    case VarType::binary: return "binary";
    case VarType::integer: return "integer";
    case VarType::continuous: return "continuous";
  }
  return "continuous";
}

std::string_view to_string(Sense sense) {
  switch (sense) {
    case Sense::less_equal: return "<=";
    case Sense::greater_equal: return ">=";
    case Sense::equal: return "=";
  }
  return "<=";
}

std::string_view to_string(NameKind kind) {
  switch (kind) {
    case NameKind::parameter: return "parameter";
    case NameKind::variable_family: return "variable family";
    case NameKind::constraint_family: return "constraint family";
    case NameKind::objective_component: return "objective component";
  }
  return "parameter";
}

VarType parse_var_type(std::string_view text) {
  if (text == "binary") return VarType::binary;
  if (text == "integer") return VarType::integer;
  if (text == "continuous") return VarType::continuous;
  throw ParseError("var_type", fmt::format("unknown variable type '{}'", text));
}

Sense parse_sense(std::string_view text) {
  if (text == "<=" || text == "le" || text == "less_equal") return Sense::less_equal;
  if (text == ">=" || text == "ge" || text == "greater_equal") return Sense::greater_equal;
  if (text == "=" || text == "==" || text == "eq" || text == "equal") return Sense::equal;
  throw ParseError("sense", fmt::format("unknown constraint sense '{}'", text));
}

Bounds default_bounds_for(VarType type) {
  return type == VarType::binary ? Bounds{0.0, 1.0} : Bounds{0.0, kInfinity};
}

Bounds VariableFamily::bounds_at(const IndexKey& index) const {
  auto it = bound_overrides.find(index);
  return it == bound_overrides.end() ? default_bounds : it->second;
}

bool VariableFamily::contains(const IndexKey& index) const {
  return std::find(index_set.begin(), index_set.end(), index) != index_set.end();
}

const ParameterEntry* ModelState::find_parameter(std::string_view name) const { return find_named(parameters, name); }
const VariableFamily* ModelState::find_variable_family(std::string_view name) const {
  return find_named(variable_families, name);
}
const ConstraintFamily* ModelState::find_constraint_family(std::string_view name) const {
  return find_named(constraint_families, name);
}
const ObjectiveComponent* ModelState::find_objective_component(std::string_view name) const {
  return find_named(objective_components, name);
}
ParameterEntry* ModelState::find_parameter(std::string_view name) { return find_named(parameters, name); }
VariableFamily* ModelState::find_variable_family(std::string_view name) { return find_named(variable_families, name); }
ConstraintFamily* ModelState::find_constraint_family(std::string_view name) {
  return find_named(constraint_families, name);
}
ObjectiveComponent* ModelState::find_objective_component(std::string_view name) {
  return find_named(objective_components, name);
}

std::optional<NameKind> ModelState::lookup(std::string_view name) const {
  if (find_parameter(name)) return NameKind::parameter;
  if (find_variable_family(name)) return NameKind::variable_family;
  if (find_constraint_family(name)) return NameKind::constraint_family;
  if (find_objective_component(name)) return NameKind::objective_component;
  return std::nullopt;
}

ModelState new_state() { return ModelState{}; }

void check_parameter(const ParameterEntry& entry) {
  std::visit(
      [&](const auto& value) {
        using T = std::decay_t<decltype(value)>;
        if constexpr (std::is_same_v<T, double>) {
          if (!std::isfinite(value)) throw Error("InvalidModel", fmt::format("parameter '{}' is not finite", entry.name));
        } else if constexpr (std::is_same_v<T, KeyedValues>) {
          if (value.empty()) return;
          const auto arity = value.begin()->first.size();
          for (const auto& [key, number] : value) {
            check_key(key, entry.name);
            if (key.size() != arity) {
              throw Error("MalformedKeys", fmt::format("parameter '{}' mixes key arities {} and {}", entry.name,
                                                       arity, key.size()));
            }
            if (!std::isfinite(number)) {
              throw Error("InvalidModel", fmt::format("parameter '{}' at ({}) is not finite", entry.name, format_key(key)));
            }
          }
        } else {
          if (value.empty()) return;
          for (const auto& key : value) {
            check_key(key, entry.name);
            if (key.size() != value.front().size()) {
              throw Error("MalformedKeys", fmt::format("parameter '{}' mixes key arities", entry.name));
            }
          }
        }
      },
      entry.value);
}

void check_variable_family(const VariableFamily& family) {
  check_keys(family.index_set, family.name);
  auto check_bounds = [&](const Bounds& b, const std::string& where) {
    if (std::isnan(b.lower) || std::isnan(b.upper) || b.lower > b.upper) {
      throw Error("InvalidModel", fmt::format("{}: lower bound {} exceeds upper bound {}", where, b.lower, b.upper));
    }
    if (family.var_type == VarType::binary && (b.lower < 0.0 || b.upper > 1.0)) {
      throw Error("InvalidModel", fmt::format("{}: binary bounds must lie within [0,1]", where));
    }
  };
  check_bounds(family.default_bounds, family.name);
  for (const auto& [index, bounds] : family.bound_overrides) {
    if (!family.contains(index)) {
      throw Error("UnknownIndex", fmt::format("{}: bound override for unknown index ({})", family.name, format_key(index)));
    }
    check_bounds(bounds, flat_key(family.name, index));
  }
}

void check_constraint_family(const ConstraintFamily& family) {
  check_keys(family.index_set, family.name);
  if (const auto* terms = std::get_if<ExplicitTerms>(&family.lhs)) {
    for (const auto& [row, row_terms] : terms->rows) {
      if (std::find(family.index_set.begin(), family.index_set.end(), row) == family.index_set.end()) {
        throw Error("UnknownIndex", fmt::format("{}: terms for row ({}) outside the index set", family.name,
                                                format_key(row)));
      }
      for (const auto& term : row_terms) check_coef(term.coefficient, family.name);
    }
  } else if (const auto* sum = std::get_if<IndexedSum>(&family.lhs)) {
    check_coef(sum->coefficient, family.name);
    for (const auto& row : family.index_set) {
      if (row.size() != sum->match_positions.size()) {
        throw Error("MalformedKeys", fmt::format("{}: row ({}) arity does not match the projection", family.name,
                                                 format_key(row)));
      }
    }
  } else if (std::get<SemanticLhs>(family.lhs).kind.empty()) {
    throw Error("InvalidModel", fmt::format("{}: semantic lhs without a kind", family.name));
  }
  if (family.rhs.uniform) check_coef(*family.rhs.uniform, family.name);
  for (const auto& [row, expr] : family.rhs.rows) {
    check_key(row, family.name);
    check_coef(expr, family.name);
  }
}

void check_objective_component(const ObjectiveComponent& component) {
  if (!std::isfinite(component.weight)) {
    throw Error("InvalidModel", fmt::format("objective '{}' has a non-finite weight", component.name));
  }
  for (const auto& term : component.terms) check_coef(term.coefficient, component.name);
  for (const auto& [key, value] : component.coefficient_overrides) {
    (void)parse_flat_key(key);
    if (!std::isfinite(value)) {
      throw Error("InvalidModel", fmt::format("objective '{}' override {} is not finite", component.name, key));
    }
  }
}

ModelState register_parameter(const ModelState& state, ParameterEntry entry) {
  require_fresh(state, entry.name);
  check_parameter(entry);
  ModelState next = state;
  next.parameters.push_back(std::move(entry));
  return next;
}

ModelState register_variable_family(const ModelState& state, VariableFamily family) {
  require_fresh(state, family.name);
  check_variable_family(family);
  ModelState next = state;
  next.variable_families.push_back(std::move(family));
  return next;
}

ModelState register_constraint_family(const ModelState& state, ConstraintFamily family, bool check_refs) {
  require_fresh(state, family.name);
  check_constraint_family(family);
  if (check_refs) check_references(family, state);
  ModelState next = state;
  next.constraint_families.push_back(std::move(family));
  return next;
}

ModelState register_objective_component(const ModelState& state, ObjectiveComponent component, bool check_refs) {
  require_fresh(state, component.name);
  check_objective_component(component);
  ModelState next = state;
  next.objective_components.push_back(std::move(component));
  if (check_refs) {
    ModelState probe = next;
    probe.constraint_families.clear();
    (void)instantiate(probe);
  }
  return next;
}

ModelState register_entity(const ModelState& state, std::string label, std::string canonical_id) {
  if (label.empty() || !is_entity_id(canonical_id)) {
    throw Error("MalformedKeys", fmt::format("invalid entity mapping '{}' -> '{}'", label, canonical_id));
  }
  ModelState next = state;
  next.entity_registry[std::move(label)] = std::move(canonical_id);
  return next;
}

IndexKey select_key(const ParamRef& ref, const IndexKey& context) {
  IndexKey key;
  key.reserve(ref.key.size());
  for (const auto& part : ref.key) {
    if (part.size() > 1 && part.front() == '$' &&
        std::all_of(part.begin() + 1, part.end(), [](unsigned char c) { return std::isdigit(c); })) {
      const auto position = static_cast<std::size_t>(std::stoul(part.substr(1)));
      if (position >= context.size()) {
        throw Error("UnresolvedReference", fmt::format("parameter '{}': projection {} outside index ({})",
                                                       ref.parameter, part, format_key(context)));
      }
      key.push_back(context[position]);
    } else {
      key.push_back(part);
    }
  }
  return key;
}

double resolve(const CoefExpr& expr, const ModelState& state, const IndexKey& context) {
  if (const auto* literal = std::get_if<double>(&expr)) return *literal;
  const auto& ref = std::get<ParamRef>(expr);
  const auto* entry = state.find_parameter(ref.parameter);
  if (!entry) throw Error("UnresolvedReference", fmt::format("unknown parameter '{}'", ref.parameter));
  if (const auto* scalar = std::get_if<double>(&entry->value)) {
    if (!ref.key.empty()) {
      throw Error("UnresolvedReference", fmt::format("parameter '{}' is scalar but was read with a key", ref.parameter));
    }
    return *scalar;
  }
  const auto* keyed = std::get_if<KeyedValues>(&entry->value);
  if (!keyed) {
    throw Error("UnresolvedReference", fmt::format("parameter '{}' is a key list, not a number", ref.parameter));
  }
  auto key = select_key(ref, context);
  auto it = keyed->find(key);
  if (it == keyed->end()) {
    throw Error("UnresolvedReference", fmt::format("parameter '{}' has no entry ({})", ref.parameter, format_key(key)));
  }
  return it->second;
}

// ---------------------------------------------------------------------------

SemanticRegistry& SemanticRegistry::global() {
  static SemanticRegistry registry;
  return registry;
}

void SemanticRegistry::register_kind(const std::string& kind, SemanticExpander expander,
                                     std::vector<std::string> reads) {
  std::unique_lock lock(mutex_);
  expanders_[kind] = std::move(expander);
  reads_[kind] = std::move(reads);
}

std::vector<std::string> SemanticRegistry::parameters_read(std::string_view kind) const {
  std::shared_lock lock(mutex_);
  auto it = reads_.find(kind);
  return it == reads_.end() ? std::vector<std::string>{} : it->second;
}

bool SemanticRegistry::contains(std::string_view kind) const {
  std::shared_lock lock(mutex_);
  return expanders_.find(kind) != expanders_.end();
}

std::vector<SemanticRow> SemanticRegistry::expand(const SemanticLhs& lhs, const ModelState& state) const {
  SemanticExpander expander;
  {
    std::shared_lock lock(mutex_);
    auto it = expanders_.find(lhs.kind);
    if (it == expanders_.end()) {
      throw Error("UnregisteredSemanticKind", fmt::format("semantic lhs kind '{}' is not registered", lhs.kind));
    }
    expander = it->second;
  }
  return expander(lhs.payload, state);
}

std::vector<std::string> SemanticRegistry::kinds() const {
  std::shared_lock lock(mutex_);
  std::vector<std::string> out;
  for (const auto& [kind, _] : expanders_) out.push_back(kind);
  return out;
}

// ---------------------------------------------------------------------------

std::optional<std::size_t> Instance::column(std::string_view key) const {
  for (std::size_t j = 0; j < variables.size(); ++j) {
    if (variables[j].key == key) return j;
  }
  return std::nullopt;
}

std::optional<std::size_t> Instance::row(std::string_view key) const {
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].key == key) return i;
  }
  return std::nullopt;
}

std::unordered_map<std::string, std::size_t> Instance::column_map() const {
  std::unordered_map<std::string, std::size_t> out;
  out.reserve(variables.size());
  for (std::size_t j = 0; j < variables.size(); ++j) out.emplace(variables[j].key, j);
  return out;
}

bool Instance::has_integers() const {
  return std::any_of(variables.begin(), variables.end(),
                     [](const InstanceVariable& v) { return v.type != VarType::continuous; });
}

KeyList row_keys(const ConstraintFamily& family, const ModelState& state, const SemanticRegistry& registry) {
  if (const auto* semantic = std::get_if<SemanticLhs>(&family.lhs)) {
    KeyList keys;
    for (auto& row : registry.expand(*semantic, state)) keys.push_back(std::move(row.key));
    return keys;
  }
  return family.index_set;
}

Instance instantiate(const ModelState& state, const SemanticRegistry& registry) {
  Instance instance;
  std::unordered_map<std::string, std::size_t> columns;

  for (const auto& family : state.variable_families) {
    for (const auto& index : family.index_set) {
      const auto bounds = family.bounds_at(index);
      auto key = flat_key(family.name, index);
      columns.emplace(key, instance.variables.size());
      instance.variables.push_back({std::move(key), family.var_type, bounds.lower, bounds.upper, 0.0});
    }
  }

  auto column_of = [&](const std::string& family, const IndexKey& index, std::string_view owner) {
    auto it = columns.find(flat_key(family, index));
    if (it == columns.end()) {
      throw Error("UnresolvedReference",
                  fmt::format("{} references unknown variable {}", owner, flat_key(family, index)));
    }
    return it->second;
  };
  auto variable_family = [&](const std::string& name, std::string_view owner) -> const VariableFamily& {
    const auto* family = state.find_variable_family(name);
    if (!family) throw Error("UnresolvedReference", fmt::format("{} references unknown variable family '{}'", owner, name));
    return *family;
  };
  auto require_finite = [](double value, std::string_view owner) {
    if (!std::isfinite(value)) throw Error("InvalidModel", fmt::format("{}: non-finite coefficient", owner));
    return value;
  };

  for (const auto& component : state.objective_components) {
    std::map<std::size_t, double> coefficients;
    for (const auto& term : component.terms) {
      if (term.index) {
        coefficients[column_of(term.family, *term.index, component.name)] +=
            resolve(term.coefficient, state, *term.index);
        continue;
      }
      const auto& family = variable_family(term.family, component.name);
      for (const auto& index : family.index_set) {
        coefficients[columns.at(flat_key(family.name, index))] += resolve(term.coefficient, state, index);
      }
    }
    for (const auto& [key, value] : component.coefficient_overrides) {
      auto it = columns.find(key);
      if (it == columns.end()) {
        throw Error("UnresolvedReference", fmt::format("{} overrides unknown variable {}", component.name, key));
      }
      coefficients[it->second] = value;
    }
    for (const auto& [column, coefficient] : coefficients) {
      instance.variables[column].objective += require_finite(component.weight * coefficient, component.name);
    }
  }

  for (const auto& family : state.constraint_families) {
    auto rhs_of = [&](const IndexKey& row) {
      auto it = family.rhs.rows.find(row);
      if (it != family.rhs.rows.end()) return resolve(it->second, state, row);
      if (family.rhs.uniform) return resolve(*family.rhs.uniform, state, row);
      throw Error("UnresolvedReference", fmt::format("{}: no right-hand side for row ({})", family.name, format_key(row)));
    };
    auto emit = [&](const IndexKey& row, const std::vector<std::pair<std::size_t, double>>& raw) {
      InstanceRow out;
      out.key = flat_key(family.name, row);
      out.sense = family.sense;
      out.rhs = require_finite(rhs_of(row), out.key);
      for (const auto& [column, value] : raw) {
        auto it = std::find_if(out.terms.begin(), out.terms.end(), [&](const auto& t) { return t.first == column; });
        if (it == out.terms.end()) {
          out.terms.emplace_back(column, require_finite(value, out.key));
        } else {
          it->second += value;
        }
      }
      instance.rows.push_back(std::move(out));
    };

    std::visit(
        [&](const auto& lhs) {
          using T = std::decay_t<decltype(lhs)>;
          if constexpr (std::is_same_v<T, ExplicitTerms>) {
            for (const auto& [row, _] : lhs.rows) {
              if (std::find(family.index_set.begin(), family.index_set.end(), row) == family.index_set.end()) {
                throw Error("UnresolvedReference",
                            fmt::format("{}: terms for row ({}) outside the index set", family.name, format_key(row)));
              }
            }
            for (const auto& row : family.index_set) {
              std::vector<std::pair<std::size_t, double>> raw;
              if (auto it = lhs.rows.find(row); it != lhs.rows.end()) {
                for (const auto& term : it->second) {
                  raw.emplace_back(column_of(term.family, term.index, family.name),
                                   resolve(term.coefficient, state, term.index));
                }
              }
              emit(row, raw);
            }
          } else if constexpr (std::is_same_v<T, IndexedSum>) {
            const auto& vars = variable_family(lhs.family, family.name);
            std::map<IndexKey, std::vector<std::size_t>> buckets;
            for (std::size_t i = 0; i < vars.index_set.size(); ++i) {
              const auto& index = vars.index_set[i];
              IndexKey projected;
              bool ok = true;
              for (auto position : lhs.match_positions) {
                if (position >= index.size()) {
                  ok = false;
                  break;
                }
                projected.push_back(index[position]);
              }
              if (ok) buckets[projected].push_back(i);
            }
            for (const auto& row : family.index_set) {
              std::vector<std::pair<std::size_t, double>> raw;
              if (auto it = buckets.find(row); it != buckets.end()) {
                for (auto i : it->second) {
                  const auto& index = vars.index_set[i];
                  raw.emplace_back(columns.at(flat_key(vars.name, index)), resolve(lhs.coefficient, state, index));
                }
              }
              emit(row, raw);
            }
          } else {
            for (const auto& row : registry.expand(lhs, state)) {
              std::vector<std::pair<std::size_t, double>> raw;
              for (const auto& term : row.terms) {
                raw.emplace_back(column_of(term.family, term.index, family.name), term.coefficient);
              }
              emit(row.key, raw);
            }
          }
        },
        family.lhs);
  }
  return instance;
}

}  // namespace reopt
