#include <algorithm>
#include <cctype>

#include <fmt/format.h>

#include "reopt/patch.hpp"

namespace reopt {

namespace {

std::string trim(std::string_view s) {
  auto first = s.find_first_not_of(" \t\r\n\"'");
  if (first == std::string_view::npos) return {};
  auto last = s.find_last_not_of(" \t\r\n\"'");
  return std::string(s.substr(first, last - first + 1));
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

class Normalizer {
 public:
  Normalizer(const ModelState& state, const SemanticRegistry& registry) : state_(state), registry_(registry) {}

  Patch run(Patch patch) {
    canonical_target(patch);
    move_fields(patch);
    switch (patch.op) {
      case PatchOp::update_parameter:
        coerce(patch.update, "key");
        break;
      case PatchOp::update_bound:
      case PatchOp::update_objective_coeff:
        coerce(patch.scope, "index");
        break;
      case PatchOp::update_constraint_rhs:
        coerce(patch.scope, "row");
        if (auto rewritten = rewrite_rhs(patch)) return *rewritten;
        break;
      default:
        break;
    }
    return patch;
  }

 private:
  std::optional<std::string> registry_id(const std::string& label) const {
    if (auto it = state_.entity_registry.find(label); it != state_.entity_registry.end()) return it->second;
    const auto folded = lower(label);
    for (const auto& [known, id] : state_.entity_registry) {
      if (lower(known) == folded) return id;
    }
    return std::nullopt;
  }

  std::string canonical_component(const std::string& raw) const {
    const auto text = trim(raw);
    if (auto it = state_.entity_registry.find(text); it != state_.entity_registry.end()) return it->second;
    if (is_entity_id(text)) return text;
    if (auto id = registry_id(text)) return *id;
    throw Error("UnmappableLabel", fmt::format("'{}' is neither an entity id nor a registered label", text));
  }

  static std::string component_text(const Json& j) {
    if (j.is_string()) return j.get<std::string>();
    if (j.is_number_integer() || j.is_number_unsigned()) return j.dump();
    if (j.is_number_float() && std::floor(j.get<double>()) == j.get<double>()) {
      return fmt::format("{}", static_cast<long long>(j.get<double>()));
    }
    return j.dump();
  }

  // "(P2, C2)", "P2,C2", ["Plant 2", "C2"] and 3 all become arrays of ids.
  Json coerce_key(const Json& j) const {
    IndexKey key;
    if (j.is_array()) {
      for (const auto& part : j) key.push_back(canonical_component(component_text(part)));
      return key_to_json(key);
    }
    if (!j.is_string()) return key_to_json({canonical_component(component_text(j))});
    auto text = trim(j.get<std::string>());
    if (auto id = registry_id(text); id && state_.entity_registry.count(text)) return key_to_json({*id});
    if (text.size() >= 2 && ((text.front() == '(' && text.back() == ')') || (text.front() == '[' && text.back() == ']'))) {
      text = text.substr(1, text.size() - 2);
    }
    if (text.empty()) return Json::array();
    std::size_t start = 0;
    while (true) {
      auto comma = text.find(',', start);
      key.push_back(canonical_component(text.substr(start, comma == std::string::npos ? std::string::npos : comma - start)));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    return key_to_json(key);
  }

  void coerce(Json& object, const char* field) const {
    if (auto it = object.find(field); it != object.end() && !it->is_null()) *it = coerce_key(*it);
  }

  void canonical_target(Patch& patch) const {
    if (is_pattern_op(patch.op)) return;
    const auto text = trim(patch.target);
    if (state_.lookup(text)) {
      patch.target = text;
      return;
    }
    // Planners sometimes name the entity instead of the object holding it.
    if (auto id = registry_id(text)) patch.target = *id;
  }

  static void move(Json& from, const char* field, Json& to, const char* canonical) {
    auto it = from.find(field);
    if (it == from.end()) return;
    if (!to.contains(canonical)) to[canonical] = *it;
    from.erase(field);
  }

  void move_fields(Patch& patch) const {
    auto& scope = patch.scope;
    auto& update = patch.update;
    switch (patch.op) {
      case PatchOp::update_parameter:
        for (const char* f : {"key", "index"}) move(scope, f, update, "key");
        move(update, "index", update, "key");
        break;
      case PatchOp::update_bound: {
        for (const char* f : {"index", "key"}) move(update, f, scope, "index");
        move(scope, "key", scope, "index");
        for (const char* f : {"bound", "type", "side"}) move(update, f, update, "bound_type");
        if (!update.contains("bound_type")) {
          for (const char* side : {"lower", "upper"}) {
            if (update.contains(side) && !update.contains("value")) {
              update["value"] = update[side];
              update.erase(side);
              update["bound_type"] = side;
            }
          }
        }
        if (auto it = update.find("bound_type"); it != update.end() && it->is_string()) {
          const auto type = lower(it->get<std::string>());
          if (type == "ub" || type == "upper_bound" || type == "max") {
            *it = "upper";
          } else if (type == "lb" || type == "lower_bound" || type == "min") {
            *it = "lower";
          } else if (type == "fix" || type == "fixed" || type == "equal") {
            *it = "fixed";
          } else {
            *it = type;
          }
        }
        break;
      }
      case PatchOp::update_constraint_rhs:
        for (const char* f : {"row", "index", "key"}) move(update, f, scope, "row");
        for (const char* f : {"index", "key"}) move(scope, f, scope, "row");
        break;
      case PatchOp::update_constraint_lhs:
        move(update, "lhs", update, "lhs_spec");
        break;
      case PatchOp::update_objective_coeff:
        for (const char* f : {"family", "variable_family"}) move(scope, f, scope, "variable");
        move(update, "variable", scope, "variable");
        for (const char* f : {"index", "key"}) move(update, f, scope, "index");
        move(scope, "key", scope, "index");
        // A flat key such as "flows(P1,C2)" in scope.variable.
        if (auto it = scope.find("variable"); it != scope.end() && it->is_string() && !scope.contains("index")) {
          const auto text = it->get<std::string>();
          if (text.find('(') != std::string::npos && text.back() == ')') {
            auto [family, index] = parse_flat_key(text);
            scope["variable"] = family;
            scope["index"] = key_to_json(index);
          }
        }
        break;
      case PatchOp::update_coefficient:
      case PatchOp::update_constraint_rhs_by_pattern:
      case PatchOp::fix_variables_by_pattern:
        if (patch.target.empty()) {
          for (const char* f : {"pattern", "row_pattern"}) {
            if (auto it = scope.find(f); it != scope.end() && it->is_string()) {
              patch.target = it->get<std::string>();
              scope.erase(f);
              break;
            }
          }
        }
        if (patch.op == PatchOp::fix_variables_by_pattern) {
          for (const char* f : {"family", "var_type"}) {
            if (auto it = scope.find(f); it != scope.end()) {
              scope["filters"][f] = *it;
              scope.erase(f);
            }
          }
        }
        break;
      default:
        break;
    }
  }

  // --- RHS rewrite ----------------------------------------------------------

  struct Read {
    std::string site;
    IndexKey key;
  };

  void note(std::vector<Read>& reads, const CoefExpr& expr, const std::string& parameter, const IndexKey& context,
            const std::string& site) const {
    const auto* ref = std::get_if<ParamRef>(&expr);
    if (!ref || ref->parameter != parameter) return;
    try {
      reads.push_back({site, select_key(*ref, context)});
    } catch (const Error&) {
      reads.push_back({site, {}});
    }
  }

  // Every place the instantiated model reads `parameter`, with the key read.
  // Returns nothing when some reader cannot be enumerated.
  std::optional<std::vector<Read>> reads_of(const std::string& parameter) const {
    std::vector<Read> reads;
    for (const auto& component : state_.objective_components) {
      for (const auto& term : component.terms) {
        if (term.index) {
          note(reads, term.coefficient, parameter, *term.index, "objective");
          continue;
        }
        const auto* family = state_.find_variable_family(term.family);
        if (!family) continue;
        for (const auto& index : family->index_set) note(reads, term.coefficient, parameter, index, "objective");
      }
    }
    for (const auto& family : state_.constraint_families) {
      if (const auto* terms = std::get_if<ExplicitTerms>(&family.lhs)) {
        for (const auto& [_, row] : terms->rows) {
          for (const auto& term : row) note(reads, term.coefficient, parameter, term.index, "lhs");
        }
      } else if (const auto* sum = std::get_if<IndexedSum>(&family.lhs)) {
        if (const auto* vars = state_.find_variable_family(sum->family)) {
          for (const auto& index : vars->index_set) note(reads, sum->coefficient, parameter, index, "lhs");
        }
      } else {
        const auto& semantic = std::get<SemanticLhs>(family.lhs);
        const auto declared = registry_.parameters_read(semantic.kind);
        if (std::find(declared.begin(), declared.end(), parameter) != declared.end() ||
            semantic.payload.dump().find('"' + parameter + '"') != std::string::npos) {
          return std::nullopt;
        }
      }
      KeyList rows;
      try {
        rows = row_keys(family, state_, registry_);
      } catch (const Error&) {
        return std::nullopt;
      }
      for (const auto& row : rows) {
        const auto it = family.rhs.rows.find(row);
        const CoefExpr* expr = it != family.rhs.rows.end() ? &it->second : family.rhs.uniform ? &*family.rhs.uniform : nullptr;
        if (expr) note(reads, *expr, parameter, row, "rhs:" + flat_key(family.name, row));
      }
    }
    return reads;
  }

  // UPDATE_CONSTRAINT_RHS on a row whose right-hand side is a bare parameter
  // read becomes UPDATE_PARAMETER, but only when no other part of the model
  // reads that same parameter entry.
  std::optional<Patch> rewrite_rhs(const Patch& patch) const {
    const auto* family = state_.find_constraint_family(patch.target);
    auto row_it = patch.scope.find("row");
    if (!family || row_it == patch.scope.end() || patch.update.contains("rhs")) return std::nullopt;
    const bool has_value = patch.update.contains("value");
    if (has_value == patch.update.contains("delta")) return std::nullopt;

    IndexKey row;
    try {
      row = key_from_json(*row_it);
    } catch (const Error&) {
      return std::nullopt;
    }
    auto rows = family->rhs.rows.find(row);
    const CoefExpr* expr = rows != family->rhs.rows.end() ? &rows->second : family->rhs.uniform ? &*family->rhs.uniform : nullptr;
    const auto* ref = expr ? std::get_if<ParamRef>(expr) : nullptr;
    if (!ref) return std::nullopt;
    const auto* entry = state_.find_parameter(ref->parameter);
    if (!entry || std::holds_alternative<KeyList>(entry->value)) return std::nullopt;

    IndexKey key;
    try {
      key = select_key(*ref, row);
      (void)resolve(*expr, state_, row);
    } catch (const Error&) {
      return std::nullopt;
    }
    auto reads = reads_of(ref->parameter);
    if (!reads) return std::nullopt;
    const auto site = "rhs:" + flat_key(family->name, row);
    bool row_listed = false;
    for (const auto& read : *reads) {
      if (read.key != key) continue;
      if (read.site != site) return std::nullopt;
      row_listed = true;
    }
    if (!row_listed) return std::nullopt;

    Patch out;
    out.op = PatchOp::update_parameter;
    out.target = ref->parameter;
    out.notes = patch.notes;
    if (std::holds_alternative<KeyedValues>(entry->value)) out.update["key"] = key_to_json(key);
    const char* field = has_value ? "value" : "delta";
    out.update[field] = patch.update[field];
    return out;
  }

  const ModelState& state_;
  const SemanticRegistry& registry_;
};

}  // namespace

ActionSet normalize_action_set(const ActionSet& actions, const ModelState& state, const SemanticRegistry& registry) {
  Normalizer normalizer(state, registry);
  ActionSet out;
  for (const auto& patch : actions.actions) out.actions.push_back(normalizer.run(patch));
  return out;
}

}  // namespace reopt
