#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "reopt/model_io.hpp"

namespace reopt {

namespace {

const Json& require(const Json& j, const char* field, const std::string& path) {
  if (!j.is_object()) throw ParseError(path.empty() ? "/" : path, "expected an object");
  auto it = j.find(field);
  if (it == j.end()) throw ParseError(path + "/" + field, fmt::format("missing required field '{}'", field));
  return *it;
}

const Json* optional_field(const Json& j, const char* field) {
  auto it = j.find(field);
  return it == j.end() || it->is_null() ? nullptr : &*it;
}

std::string string_from(const Json& j, const std::string& path) {
  if (!j.is_string()) throw ParseError(path, "expected a string");
  return j.get<std::string>();
}

double number_from(const Json& j, const std::string& path) {
  if (!j.is_number()) throw ParseError(path, "expected a number");
  return j.get<double>();
}

std::set<std::string> tags_from(const Json& j, const std::string& path) {
  if (!j.is_array()) throw ParseError(path, "expected an array of tags");
  std::set<std::string> tags;
  for (std::size_t i = 0; i < j.size(); ++i) tags.insert(string_from(j[i], path + "/" + std::to_string(i)));
  return tags;
}

void read_metadata(const Json& j, const std::string& path, std::string& description, std::set<std::string>& tags) {
  if (const auto* d = optional_field(j, "description")) description = string_from(*d, path + "/description");
  if (const auto* t = optional_field(j, "tags")) tags = tags_from(*t, path + "/tags");
}

void write_metadata(Json& j, const std::string& description, const std::set<std::string>& tags) {
  j["description"] = description;
  j["tags"] = Json(std::vector<std::string>(tags.begin(), tags.end()));
}

KeyList key_list_from(const Json& j, const std::string& path) {
  if (!j.is_array()) throw ParseError(path, "expected an array of index keys");
  KeyList keys;
  keys.reserve(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) keys.push_back(key_from_json(j[i], path + "/" + std::to_string(i)));
  return keys;
}

Json key_list_to_json(const KeyList& keys) {
  Json out = Json::array();
  for (const auto& key : keys) out.push_back(key_to_json(key));
  return out;
}

/// Re-raises builder errors as ParseErrors located at `path`.
template <typename F>
auto located(const std::string& path, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const ParseError&) {
    throw;
  } catch (const Error& e) {
    throw ParseError(path, fmt::format("{} ({})", e.what(), e.code()));
  }
}

}  // namespace

std::string entity_from_json(const Json& j, const std::string& path) {
  if (j.is_string()) return j.get<std::string>();
  if (j.is_number_integer()) return std::to_string(j.get<long long>());
  if (j.is_number()) {
    const double value = j.get<double>();
    if (std::nearbyint(value) == value && std::abs(value) < 1e15) return fmt::format("{}", static_cast<long long>(value));
    return fmt::format("{}", value);
  }
  throw ParseError(path, "expected an entity id (string or number)");
}

Json key_to_json(const IndexKey& key) { return Json(key); }

IndexKey key_from_json(const Json& j, const std::string& path) {
  if (j.is_array()) {
    IndexKey key;
    key.reserve(j.size());
    for (std::size_t i = 0; i < j.size(); ++i) key.push_back(entity_from_json(j[i], path + "/" + std::to_string(i)));
    return key;
  }
  if (j.is_string() || j.is_number()) return {entity_from_json(j, path)};
  throw ParseError(path, "expected an index key (array of ids)");
}

Json bound_to_json(double value) {
  if (value == kInfinity) return "inf";
  if (value == -kInfinity) return "-inf";
  return value;
}

double bound_from_json(const Json& j, const std::string& path) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto text = j.get<std::string>();
    if (text == "inf" || text == "+inf" || text == "infinity") return kInfinity;
    if (text == "-inf" || text == "-infinity") return -kInfinity;
  }
  throw ParseError(path, "expected a bound (number, \"inf\" or \"-inf\")");
}

Json coef_to_json(const CoefExpr& expr) {
  if (const auto* literal = std::get_if<double>(&expr)) return *literal;
  const auto& ref = std::get<ParamRef>(expr);
  return Json{{"param", ref.parameter}, {"key", ref.key}};
}

CoefExpr coef_from_json(const Json& j, const std::string& path) {
  if (j.is_number()) return j.get<double>();
  if (j.is_object()) {
    ParamRef ref;
    ref.parameter = string_from(require(j, "param", path), path + "/param");
    if (const auto* key = optional_field(j, "key")) ref.key = key_from_json(*key, path + "/key");
    return ref;
  }
  throw ParseError(path, "expected a coefficient (number or {param, key})");
}

Json lhs_to_json(const LhsSpec& lhs) {
  return std::visit(
      [](const auto& spec) -> Json {
        using T = std::decay_t<decltype(spec)>;
        if constexpr (std::is_same_v<T, ExplicitTerms>) {
          Json rows = Json::array();
          for (const auto& [row, terms] : spec.rows) {
            Json items = Json::array();
            for (const auto& term : terms) {
              items.push_back({{"family", term.family}, {"index", key_to_json(term.index)},
                               {"coefficient", coef_to_json(term.coefficient)}});
            }
            rows.push_back({{"row", key_to_json(row)}, {"terms", std::move(items)}});
          }
          return {{"kind", "explicit_terms"}, {"rows", std::move(rows)}};
        } else if constexpr (std::is_same_v<T, IndexedSum>) {
          return {{"kind", "indexed_sum"},
                  {"family", spec.family},
                  {"match_positions", spec.match_positions},
                  {"coefficient", coef_to_json(spec.coefficient)}};
        } else {
          Json out = spec.payload.is_object() ? spec.payload : Json{{"payload", spec.payload}};
          out["kind"] = spec.kind;
          return out;
        }
      },
      lhs);
}

LhsSpec lhs_from_json(const Json& j, const std::string& path) {
  const auto kind = string_from(require(j, "kind", path), path + "/kind");
  if (kind == "explicit_terms" || kind == "materialized_linear") {
    ExplicitTerms spec;
    const auto& rows = require(j, "rows", path);
    if (!rows.is_array()) throw ParseError(path + "/rows", "expected an array of rows");
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const auto rpath = fmt::format("{}/rows/{}", path, r);
      auto row = key_from_json(require(rows[r], "row", rpath), rpath + "/row");
      const auto& terms = require(rows[r], "terms", rpath);
      if (!terms.is_array()) throw ParseError(rpath + "/terms", "expected an array of terms");
      auto& out = spec.rows[row];
      for (std::size_t t = 0; t < terms.size(); ++t) {
        const auto tpath = fmt::format("{}/terms/{}", rpath, t);
        Term term;
        term.family = string_from(require(terms[t], "family", tpath), tpath + "/family");
        term.index = key_from_json(require(terms[t], "index", tpath), tpath + "/index");
        if (const auto* c = optional_field(terms[t], "coefficient")) term.coefficient = coef_from_json(*c, tpath + "/coefficient");
        out.push_back(std::move(term));
      }
    }
    return spec;
  }
  if (kind == "indexed_sum") {
    IndexedSum spec;
    spec.family = string_from(require(j, "family", path), path + "/family");
    const auto& positions = require(j, "match_positions", path);
    if (!positions.is_array()) throw ParseError(path + "/match_positions", "expected an array of positions");
    for (const auto& p : positions) {
      if (!p.is_number_unsigned() && !(p.is_number_integer() && p.get<long long>() >= 0)) {
        throw ParseError(path + "/match_positions", "positions must be non-negative integers");
      }
      spec.match_positions.push_back(p.get<std::size_t>());
    }
    if (const auto* c = optional_field(j, "coefficient")) spec.coefficient = coef_from_json(*c, path + "/coefficient");
    return spec;
  }
  SemanticLhs spec;
  spec.kind = kind;
  if (const auto* payload = optional_field(j, "payload"); payload && j.size() == 2) {
    spec.payload = *payload;
  } else {
    spec.payload = j;
    spec.payload.erase("kind");
  }
  return spec;
}

Json rhs_to_json(const RhsSpec& rhs) {
  Json out = Json::object();
  if (rhs.uniform) out["uniform"] = coef_to_json(*rhs.uniform);
  Json rows = Json::array();
  for (const auto& [row, expr] : rhs.rows) rows.push_back(Json::array({key_to_json(row), coef_to_json(expr)}));
  out["rows"] = std::move(rows);
  return out;
}

RhsSpec rhs_from_json(const Json& j, const std::string& path) {
  RhsSpec rhs;
  if (j.is_number() || (j.is_object() && j.contains("param"))) {
    rhs.uniform = coef_from_json(j, path);
    return rhs;
  }
  if (!j.is_object()) throw ParseError(path, "expected a right-hand side: a number, a parameter reference or an object");
  if (const auto* u = optional_field(j, "uniform")) rhs.uniform = coef_from_json(*u, path + "/uniform");
  if (const auto* rows = optional_field(j, "rows")) {
    if (!rows->is_array()) throw ParseError(path + "/rows", "expected an array of [row, rhs] pairs");
    for (std::size_t i = 0; i < rows->size(); ++i) {
      const auto ipath = fmt::format("{}/rows/{}", path, i);
      const auto& pair = (*rows)[i];
      if (pair.is_array() && pair.size() == 2) {
        rhs.rows[key_from_json(pair[0], ipath + "/0")] = coef_from_json(pair[1], ipath + "/1");
      } else if (pair.is_object()) {
        rhs.rows[key_from_json(require(pair, "row", ipath), ipath + "/row")] =
            coef_from_json(require(pair, "rhs", ipath), ipath + "/rhs");
      } else {
        throw ParseError(ipath, "expected [row, rhs]");
      }
    }
  }
  return rhs;
}

Json parameter_value_to_json(const ParameterValue& value) {
  return std::visit(
      [](const auto& v) -> Json {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, double>) {
          return v;
        } else if constexpr (std::is_same_v<T, KeyedValues>) {
          Json out = Json::array();
          for (const auto& [key, number] : v) out.push_back(Json::array({key_to_json(key), number}));
          return out;
        } else {
          return key_list_to_json(v);
        }
      },
      value);
}

namespace {

std::string_view value_kind(const ParameterValue& value) {
  switch (value.index()) {
    case 0: return "scalar";
    case 1: return "keyed";
    default: return "key_list";
  }
}

}  // namespace

ParameterValue parameter_value_from_json(const Json& j, const std::string& path) {
  if (j.is_number()) return j.get<double>();
  if (j.is_object()) {
    KeyedValues values;
    for (const auto& [key, number] : j.items()) values[parse_key(key)] = number_from(number, path + "/" + key);
    return values;
  }
  if (j.is_array()) {
    // [[key, number], ...] is keyed; anything else is a list of keys.
    const bool keyed = !j.empty() && std::all_of(j.begin(), j.end(), [](const Json& item) {
      return item.is_array() && item.size() == 2 && item[1].is_number() && (item[0].is_array() || item[0].is_string());
    });
    if (keyed) {
      KeyedValues values;
      for (std::size_t i = 0; i < j.size(); ++i) {
        values[key_from_json(j[i][0], fmt::format("{}/{}/0", path, i))] = j[i][1].get<double>();
      }
      return values;
    }
    return key_list_from(j, path);
  }
  throw ParseError(path, "expected a parameter value (number, keyed map or key list)");
}

Json parameter_to_json(const ParameterEntry& entry) {
  Json out{{"name", entry.name}, {"kind", value_kind(entry.value)}, {"value", parameter_value_to_json(entry.value)}};
  write_metadata(out, entry.description, entry.tags);
  return out;
}

ParameterEntry parameter_from_json(const Json& j, const std::string& path) {
  ParameterEntry entry;
  entry.name = string_from(require(j, "name", path), path + "/name");
  const auto& value = require(j, "value", path);
  std::string kind;
  if (const auto* k = optional_field(j, "kind")) kind = string_from(*k, path + "/kind");
  if (kind == "keyed" && value.is_array() && value.empty()) {
    entry.value = KeyedValues{};
  } else if (kind == "key_list" && value.is_array()) {
    entry.value = key_list_from(value, path + "/value");
  } else {
    entry.value = parameter_value_from_json(value, path + "/value");
  }
  if (!kind.empty() && kind != value_kind(entry.value)) {
    throw ParseError(path + "/kind", fmt::format("declared kind '{}' does not match the value", kind));
  }
  read_metadata(j, path, entry.description, entry.tags);
  return entry;
}

Json variable_family_to_json(const VariableFamily& family) {
  Json overrides = Json::array();
  for (const auto& [index, bounds] : family.bound_overrides) {
    overrides.push_back(
        Json::array({key_to_json(index), Json::array({bound_to_json(bounds.lower), bound_to_json(bounds.upper)})}));
  }
  Json out{{"name", family.name},
           {"var_type", to_string(family.var_type)},
           {"index_set", key_list_to_json(family.index_set)},
           {"default_bounds", Json::array({bound_to_json(family.default_bounds.lower),
                                           bound_to_json(family.default_bounds.upper)})},
           {"bound_overrides", std::move(overrides)}};
  write_metadata(out, family.description, family.tags);
  return out;
}

namespace {

Bounds bounds_from(const Json& j, const std::string& path) {
  if (!j.is_array() || j.size() != 2) throw ParseError(path, "expected [lower, upper]");
  return {bound_from_json(j[0], path + "/0"), bound_from_json(j[1], path + "/1")};
}

}  // namespace

VariableFamily variable_family_from_json(const Json& j, const std::string& path) {
  VariableFamily family;
  family.name = string_from(require(j, "name", path), path + "/name");
  const auto type = string_from(require(j, "var_type", path), path + "/var_type");
  family.var_type = located(path + "/var_type", [&] { return parse_var_type(type); });
  family.index_set = key_list_from(require(j, "index_set", path), path + "/index_set");
  family.default_bounds = default_bounds_for(family.var_type);
  if (const auto* b = optional_field(j, "default_bounds")) family.default_bounds = bounds_from(*b, path + "/default_bounds");
  if (const auto* overrides = optional_field(j, "bound_overrides")) {
    if (!overrides->is_array()) throw ParseError(path + "/bound_overrides", "expected an array of [index, bounds]");
    for (std::size_t i = 0; i < overrides->size(); ++i) {
      const auto ipath = fmt::format("{}/bound_overrides/{}", path, i);
      const auto& item = (*overrides)[i];
      if (!item.is_array() || item.size() != 2) throw ParseError(ipath, "expected [index, [lower, upper]]");
      family.bound_overrides[key_from_json(item[0], ipath + "/0")] = bounds_from(item[1], ipath + "/1");
    }
  }
  read_metadata(j, path, family.description, family.tags);
  return family;
}

Json constraint_family_to_json(const ConstraintFamily& family) {
  Json out{{"name", family.name},
           {"index_set", key_list_to_json(family.index_set)},
           {"sense", to_string(family.sense)},
           {"lhs_spec", lhs_to_json(family.lhs)},
           {"rhs_spec", rhs_to_json(family.rhs)}};
  write_metadata(out, family.description, family.tags);
  return out;
}

ConstraintFamily constraint_family_from_json(const Json& j, const std::string& path) {
  ConstraintFamily family;
  family.name = string_from(require(j, "name", path), path + "/name");
  if (const auto* index = optional_field(j, "index_set")) family.index_set = key_list_from(*index, path + "/index_set");
  const auto sense = string_from(require(j, "sense", path), path + "/sense");
  family.sense = located(path + "/sense", [&] { return parse_sense(sense); });
  family.lhs = lhs_from_json(require(j, "lhs_spec", path), path + "/lhs_spec");
  family.rhs = rhs_from_json(require(j, "rhs_spec", path), path + "/rhs_spec");
  // Explicit rows imply their index set when none is given.
  if (const auto* terms = std::get_if<ExplicitTerms>(&family.lhs); terms && !optional_field(j, "index_set")) {
    for (const auto& [row, _] : terms->rows) family.index_set.push_back(row);
  }
  read_metadata(j, path, family.description, family.tags);
  return family;
}

Json objective_component_to_json(const ObjectiveComponent& component) {
  Json terms = Json::array();
  for (const auto& term : component.terms) {
    Json t{{"family", term.family}, {"coefficient", coef_to_json(term.coefficient)}};
    if (term.index) t["index"] = key_to_json(*term.index);
    terms.push_back(std::move(t));
  }
  Json out{{"name", component.name},
           {"weight", component.weight},
           {"terms", std::move(terms)},
           {"coefficient_overrides", Json(component.coefficient_overrides)}};
  write_metadata(out, component.description, component.tags);
  return out;
}

ObjectiveComponent objective_component_from_json(const Json& j, const std::string& path) {
  ObjectiveComponent component;
  component.name = string_from(require(j, "name", path), path + "/name");
  if (const auto* w = optional_field(j, "weight")) component.weight = number_from(*w, path + "/weight");
  const auto& terms = require(j, "terms", path);
  if (!terms.is_array()) throw ParseError(path + "/terms", "expected an array of terms");
  for (std::size_t t = 0; t < terms.size(); ++t) {
    const auto tpath = fmt::format("{}/terms/{}", path, t);
    ObjectiveTerm term;
    term.family = string_from(require(terms[t], "family", tpath), tpath + "/family");
    if (const auto* index = optional_field(terms[t], "index")) term.index = key_from_json(*index, tpath + "/index");
    if (const auto* c = optional_field(terms[t], "coefficient")) term.coefficient = coef_from_json(*c, tpath + "/coefficient");
    component.terms.push_back(std::move(term));
  }
  if (const auto* overrides = optional_field(j, "coefficient_overrides")) {
    if (!overrides->is_object()) throw ParseError(path + "/coefficient_overrides", "expected an object");
    for (const auto& [key, value] : overrides->items()) {
      component.coefficient_overrides[key] = number_from(value, path + "/coefficient_overrides/" + key);
    }
  }
  read_metadata(j, path, component.description, component.tags);
  return component;
}

// ---------------------------------------------------------------------------

Json save_state(const ModelState& state) {
  Json out = Json::object();
  Json parameters = Json::array();
  for (const auto& p : state.parameters) parameters.push_back(parameter_to_json(p));
  Json variables = Json::array();
  for (const auto& v : state.variable_families) variables.push_back(variable_family_to_json(v));
  Json constraints = Json::array();
  for (const auto& c : state.constraint_families) constraints.push_back(constraint_family_to_json(c));
  Json objectives = Json::array();
  for (const auto& o : state.objective_components) objectives.push_back(objective_component_to_json(o));
  out["parameters"] = std::move(parameters);
  out["variable_families"] = std::move(variables);
  out["constraint_families"] = std::move(constraints);
  out["objective_components"] = std::move(objectives);
  out["entity_registry"] = Json(state.entity_registry);
  out["version"] = state.version;
  return out;
}

std::string save_state_text(const ModelState& state) { return save_state(state).dump(2) + "\n"; }

ModelState load_state(const Json& document) {
  if (!document.is_object()) throw ParseError("/", "state document must be an object");
  ModelState state = new_state();
  auto each = [&](const char* field, auto&& fn) {
    const auto& items = require(document, field, "");
    if (!items.is_array()) throw ParseError(std::string("/") + field, "expected an array");
    for (std::size_t i = 0; i < items.size(); ++i) fn(items[i], fmt::format("/{}/{}", field, i));
  };
  each("parameters", [&](const Json& j, const std::string& path) {
    auto entry = parameter_from_json(j, path);
    state = located(path, [&] { return register_parameter(state, std::move(entry)); });
  });
  each("variable_families", [&](const Json& j, const std::string& path) {
    auto family = variable_family_from_json(j, path);
    state = located(path, [&] { return register_variable_family(state, std::move(family)); });
  });
  each("constraint_families", [&](const Json& j, const std::string& path) {
    auto family = constraint_family_from_json(j, path);
    state = located(path, [&] { return register_constraint_family(state, std::move(family)); });
  });
  each("objective_components", [&](const Json& j, const std::string& path) {
    auto component = objective_component_from_json(j, path);
    state = located(path, [&] { return register_objective_component(state, std::move(component)); });
  });
  const auto& registry = require(document, "entity_registry", "");
  if (!registry.is_object()) throw ParseError("/entity_registry", "expected an object");
  for (const auto& [label, id] : registry.items()) {
    auto canonical = string_from(id, "/entity_registry/" + label);
    state = located("/entity_registry/" + label, [&] { return register_entity(state, label, canonical); });
  }
  const auto& version = require(document, "version", "");
  if (!version.is_number_unsigned() && !(version.is_number_integer() && version.get<long long>() >= 0)) {
    throw ParseError("/version", "expected a non-negative integer");
  }
  state.version = version.get<std::uint64_t>();
  return state;
}

Json parse_json_text(std::string_view text) {
  try {
    return Json::parse(text.begin(), text.end());
  } catch (const Json::parse_error& e) {
    throw ParseError(fmt::format("byte {}", e.byte), e.what());
  }
}

ModelState load_state_text(std::string_view text) { return load_state(parse_json_text(text)); }

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("IoError", fmt::format("cannot open '{}'", path.string()));
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

Json read_json_file(const std::filesystem::path& path) {
  try {
    return parse_json_text(read_text_file(path));
  } catch (const ParseError& e) {
    throw ParseError(path.string() + " " + e.location(), e.what());
  }
}

ModelState load_state_file(const std::filesystem::path& path) { return load_state(read_json_file(path)); }

namespace {

// End of the balanced object starting at text[start] == '{', skipping braces
// inside string literals.
std::optional<std::size_t> object_end(std::string_view text, std::size_t start) {
  int depth = 0;
  bool in_string = false;
  for (std::size_t i = start; i < text.size(); ++i) {
    const char c = text[i];
    if (in_string) {
      if (c == '\\') {
        ++i;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') {
      in_string = true;
    } else if (c == '{') {
      ++depth;
    } else if (c == '}' && --depth == 0) {
      return i;
    }
  }
  return std::nullopt;
}

std::optional<Json> first_object(std::string_view text) {
  for (auto start = text.find('{'); start != std::string_view::npos; start = text.find('{', start + 1)) {
    auto end = object_end(text, start);
    if (!end) continue;
    auto parsed = Json::parse(text.substr(start, *end - start + 1), nullptr, false);
    if (!parsed.is_discarded() && parsed.is_object()) return parsed;
  }
  return std::nullopt;
}

}  // namespace

Json extract_json(std::string_view text) {
  auto whole = Json::parse(text, nullptr, false);
  if (!whole.is_discarded() && whole.is_object()) return whole;
  // Fenced blocks first, since prose around them may hold stray braces.
  for (auto open = text.find("```"); open != std::string_view::npos;) {
    auto body = text.find('\n', open);
    if (body == std::string_view::npos) break;
    auto close = text.find("```", body);
    if (close == std::string_view::npos) break;
    if (auto found = first_object(text.substr(body + 1, close - body - 1))) return *found;
    open = text.find("```", close + 3);
  }
  if (auto found = first_object(text)) return *found;
  throw Error("NoObjectFound", "no JSON object found in text");
}

}  // namespace reopt
