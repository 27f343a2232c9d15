#include "reopt/diff.hpp"

#include <algorithm>
#include <sstream>

#include <fmt/format.h>

namespace reopt {

namespace {

// Diffs run over a tree view of the state in which every keyed collection is
// a JSON object, so that entries can address single keys. Parameter nodes
// hold their metadata under "$meta" and non-keyed values under "$value";
// keyed values sit directly under the node ("parameters.supply.P1").

constexpr const char* kSections[] = {"parameters", "variable_families", "constraint_families",
                                     "objective_components"};

Json parameter_node(const ParameterEntry& p) {
  Json node = Json::object();
  const auto encoded = parameter_to_json(p);
  node["$meta"] = {{"kind", encoded["kind"]}, {"description", encoded["description"]}, {"tags", encoded["tags"]}};
  if (const auto* keyed = std::get_if<KeyedValues>(&p.value)) {
    for (const auto& [key, value] : *keyed) node[format_key(key)] = value;
  } else {
    node["$value"] = encoded["value"];
  }
  return node;
}

ParameterEntry parameter_from_node(const std::string& name, const Json& node) {
  const auto& meta = node.at("$meta");
  Json encoded{{"name", name}, {"kind", meta.at("kind")}, {"description", meta.at("description")},
               {"tags", meta.at("tags")}};
  if (meta.at("kind") == "keyed") {
    Json values = Json::array();
    for (const auto& [key, value] : node.items()) {
      if (key != "$meta") values.push_back(Json::array({key_to_json(parse_key(key)), value}));
    }
    encoded["value"] = std::move(values);
  } else {
    encoded["value"] = node.at("$value");
  }
  return parameter_from_json(encoded, "/parameters/" + name);
}

Json variable_node(const VariableFamily& v) {
  auto node = variable_family_to_json(v);
  node.erase("name");
  node.erase("bound_overrides");
  Json bounds = Json::object();
  for (const auto& [index, b] : v.bound_overrides) {
    bounds[format_key(index)] = Json::array({bound_to_json(b.lower), bound_to_json(b.upper)});
  }
  node["bounds"] = std::move(bounds);
  return node;
}

VariableFamily variable_from_node(const std::string& name, const Json& node) {
  Json encoded = node;
  encoded["name"] = name;
  encoded.erase("bounds");
  Json overrides = Json::array();
  for (const auto& [key, b] : node.at("bounds").items()) overrides.push_back(Json::array({key_to_json(parse_key(key)), b}));
  encoded["bound_overrides"] = std::move(overrides);
  return variable_family_from_json(encoded, "/variable_families/" + name);
}

Json constraint_node(const ConstraintFamily& c) {
  auto node = constraint_family_to_json(c);
  node.erase("name");
  node.erase("rhs_spec");
  Json rhs = Json::object();
  if (c.rhs.uniform) rhs["$uniform"] = coef_to_json(*c.rhs.uniform);
  for (const auto& [row, expr] : c.rhs.rows) rhs[format_key(row)] = coef_to_json(expr);
  node["rhs"] = std::move(rhs);
  return node;
}

ConstraintFamily constraint_from_node(const std::string& name, const Json& node) {
  Json encoded = node;
  encoded["name"] = name;
  encoded.erase("rhs");
  Json rhs = Json::object();
  Json rows = Json::array();
  for (const auto& [key, expr] : node.at("rhs").items()) {
    if (key == "$uniform") {
      rhs["uniform"] = expr;
    } else {
      rows.push_back(Json::array({key_to_json(parse_key(key)), expr}));
    }
  }
  rhs["rows"] = std::move(rows);
  encoded["rhs_spec"] = std::move(rhs);
  return constraint_family_from_json(encoded, "/constraint_families/" + name);
}

Json objective_node(const ObjectiveComponent& o) {
  auto node = objective_component_to_json(o);
  node.erase("name");
  node["overrides"] = node["coefficient_overrides"];
  node.erase("coefficient_overrides");
  return node;
}

ObjectiveComponent objective_from_node(const std::string& name, const Json& node) {
  Json encoded = node;
  encoded["name"] = name;
  encoded["coefficient_overrides"] = node.at("overrides");
  encoded.erase("overrides");
  return objective_component_from_json(encoded, "/objective_components/" + name);
}

struct Tree {
  Json root = Json::object();
  std::map<std::string, std::vector<std::string>> order;
};

Tree to_tree(const ModelState& s) {
  Tree t;
  for (const char* section : kSections) t.root[section] = Json::object();
  for (const auto& p : s.parameters) {
    t.root["parameters"][p.name] = parameter_node(p);
    t.order["parameters"].push_back(p.name);
  }
  for (const auto& v : s.variable_families) {
    t.root["variable_families"][v.name] = variable_node(v);
    t.order["variable_families"].push_back(v.name);
  }
  for (const auto& c : s.constraint_families) {
    t.root["constraint_families"][c.name] = constraint_node(c);
    t.order["constraint_families"].push_back(c.name);
  }
  for (const auto& o : s.objective_components) {
    t.root["objective_components"][o.name] = objective_node(o);
    t.order["objective_components"].push_back(o.name);
  }
  t.root["entity_registry"] = Json(s.entity_registry);
  return t;
}

ModelState from_tree(const Tree& t, std::uint64_t version) {
  ModelState s;
  auto ordered = [&](const char* section) { return t.order.count(section) ? t.order.at(section) : std::vector<std::string>{}; };
  for (const auto& name : ordered("parameters")) {
    s.parameters.push_back(parameter_from_node(name, t.root.at("parameters").at(name)));
  }
  for (const auto& name : ordered("variable_families")) {
    s.variable_families.push_back(variable_from_node(name, t.root.at("variable_families").at(name)));
  }
  for (const auto& name : ordered("constraint_families")) {
    s.constraint_families.push_back(constraint_from_node(name, t.root.at("constraint_families").at(name)));
  }
  for (const auto& name : ordered("objective_components")) {
    s.objective_components.push_back(objective_from_node(name, t.root.at("objective_components").at(name)));
  }
  for (const auto& [label, id] : t.root.at("entity_registry").items()) s.entity_registry[label] = id.get<std::string>();
  s.version = version;
  return s;
}

void diff_nodes(const Json& a, const Json& b, std::vector<std::string>& path, std::vector<DiffEntry>& out) {
  if (a == b) return;
  if (!a.is_object() || !b.is_object()) {
    out.push_back({path, a, b});
    return;
  }
  for (const auto& [key, value] : a.items()) {
    path.push_back(key);
    if (auto it = b.find(key); it == b.end()) {
      out.push_back({path, value, std::nullopt});
    } else {
      diff_nodes(value, *it, path, out);
    }
    path.pop_back();
  }
  for (const auto& [key, value] : b.items()) {
    if (a.contains(key)) continue;
    path.push_back(key);
    out.push_back({path, std::nullopt, value});
    path.pop_back();
  }
}

std::vector<std::string> expected_order(const std::vector<std::string>& before, const std::vector<std::string>& after) {
  std::vector<std::string> out;
  for (const auto& name : before) {
    if (std::find(after.begin(), after.end(), name) != after.end()) out.push_back(name);
  }
  for (const auto& name : after) {
    if (std::find(before.begin(), before.end(), name) == before.end()) out.push_back(name);
  }
  return out;
}

Json* navigate(Json& root, const std::vector<std::string>& path, std::size_t depth, bool create) {
  Json* node = &root;
  for (std::size_t i = 0; i < depth; ++i) {
    if (!node->is_object()) return nullptr;
    auto it = node->find(path[i]);
    if (it == node->end()) {
      if (!create) return nullptr;
      node = &(*node)[path[i]];
      *node = Json::object();
    } else {
      node = &*it;
    }
  }
  return node;
}

}  // namespace

std::string DiffEntry::path_string() const { return fmt::format("{}", fmt::join(path, ".")); }

StateDiff diff_states(const ModelState& before, const ModelState& after) {
  StateDiff diff;
  diff.from_version = before.version;
  diff.to_version = after.version;
  const auto a = to_tree(before);
  const auto b = to_tree(after);

  std::vector<std::string> path;
  for (const char* section : kSections) {
    const auto& an = a.root.at(section);
    const auto& bn = b.root.at(section);
    const auto& aorder = a.order.count(section) ? a.order.at(section) : std::vector<std::string>{};
    const auto& border = b.order.count(section) ? b.order.at(section) : std::vector<std::string>{};
    // Removed, then changed in before-order, then added in after-order.
    for (const auto& name : aorder) {
      if (!bn.contains(name)) diff.entries.push_back({{section, name}, an.at(name), std::nullopt});
    }
    for (const auto& name : aorder) {
      if (!bn.contains(name)) continue;
      path = {section, name};
      diff_nodes(an.at(name), bn.at(name), path, diff.entries);
    }
    for (const auto& name : border) {
      if (!an.contains(name)) diff.entries.push_back({{section, name}, std::nullopt, bn.at(name)});
    }
    if (expected_order(aorder, border) != border) {
      diff.entries.push_back({{section, "$order"}, Json(aorder), Json(border)});
    }
  }
  path = {"entity_registry"};
  diff_nodes(a.root.at("entity_registry"), b.root.at("entity_registry"), path, diff.entries);
  return diff;
}

ModelState apply_diff(const ModelState& state, const StateDiff& diff) {
  auto tree = to_tree(state);
  for (const auto& entry : diff.entries) {
    const auto& path = entry.path;
    if (path.empty()) throw Error("DiffMismatch", "empty diff path");
    if (path.size() == 2 && path[1] == "$order") {
      if (entry.before && Json(tree.order[path[0]]) != *entry.before) {
        throw Error("DiffMismatch", fmt::format("{}: registration order differs", path[0]));
      }
      tree.order[path[0]] = entry.after.value_or(Json::array()).get<std::vector<std::string>>();
      continue;
    }
    Json* parent = navigate(tree.root, path, path.size() - 1, entry.after.has_value());
    const auto& leaf = path.back();
    const Json* current = nullptr;
    if (parent && parent->is_object()) {
      if (auto it = parent->find(leaf); it != parent->end()) current = &*it;
    }
    const bool matches = entry.before ? (current && *current == *entry.before) : current == nullptr;
    if (!matches) throw Error("DiffMismatch", fmt::format("{}: before-value does not match", entry.path_string()));
    const bool top_level = path.size() == 2 && tree.order.count(path[0]) + (path[0] != "entity_registry") == 2;
    if (entry.after) {
      (*parent)[leaf] = *entry.after;
      if (top_level && !entry.before) tree.order[path[0]].push_back(leaf);
    } else {
      parent->erase(leaf);
      if (top_level) {
        auto& names = tree.order[path[0]];
        names.erase(std::remove(names.begin(), names.end(), leaf), names.end());
      }
    }
  }
  return from_tree(tree, diff.to_version);
}

Json diff_to_json(const StateDiff& diff) {
  Json entries = Json::array();
  for (const auto& e : diff.entries) {
    Json item{{"path", e.path}, {"display", e.path_string()}};
    item["before"] = e.before ? *e.before : Json();
    item["after"] = e.after ? *e.after : Json();
    item["change"] = !e.before ? "added" : !e.after ? "removed" : "modified";
    entries.push_back(std::move(item));
  }
  return {{"from_version", diff.from_version}, {"to_version", diff.to_version}, {"entries", std::move(entries)}};
}

StateDiff diff_from_json(const Json& j) {
  StateDiff diff;
  diff.from_version = j.at("from_version").get<std::uint64_t>();
  diff.to_version = j.at("to_version").get<std::uint64_t>();
  for (const auto& item : j.at("entries")) {
    DiffEntry e;
    e.path = item.at("path").get<std::vector<std::string>>();
    const auto change = item.value("change", std::string("modified"));
    if (change != "added") e.before = item.at("before");
    if (change != "removed") e.after = item.at("after");
    diff.entries.push_back(std::move(e));
  }
  return diff;
}

std::string format_diff(const StateDiff& diff) {
  auto show = [](const std::optional<Json>& value) {
    if (!value) return std::string("(absent)");
    if (value->is_number_float()) return fmt::format("{}", value->get<double>());
    return value->dump();
  };
  std::ostringstream out;
  for (const auto& e : diff.entries) out << e.path_string() << ": " << show(e.before) << " -> " << show(e.after) << "\n";
  return out.str();
}

}  // namespace reopt
