#include "reopt/toolbox.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <sstream>

#include <fmt/format.h>

#include "reopt/model_io.hpp"

namespace reopt {

const std::vector<std::string>& strategy_names() {
  static const std::vector<std::string> names{kStrategyWarm,    kStrategyWarmTuned,     kStrategyTuned,
                                              kStrategyScratch, kStrategyHeuristicWarm, kStrategyFixAndRelease};
  return names;
}

bool StrategyCatalog::allows(std::string_view name) const {
  const auto* entry = find(name);
  return entry && entry->available;
}

const StrategyEntry* StrategyCatalog::find(std::string_view name) const {
  for (const auto& e : entries) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

std::vector<std::string> StrategyCatalog::available() const {
  std::vector<std::string> out;
  for (const auto& e : entries) {
    if (e.available) out.push_back(e.name);
  }
  return out;
}

StrategyCatalog list_strategies(const ModelState&, const SolveResult* prior, const CatalogContext& context) {
  const bool has_prior = prior && prior->has_incumbent();
  const bool has_preset = context.preset_name.has_value();
  StrategyCatalog catalog;
  catalog.entries = {
      {kStrategyWarm, has_prior, "install the previous incumbent as a MIP start", std::nullopt},
      {kStrategyWarmTuned, has_prior && has_preset, "previous incumbent plus the instance preset",
       context.preset_name},
      {kStrategyTuned, has_preset, "solve from scratch with the instance preset", context.preset_name},
      {kStrategyScratch, true, "plain solve with default settings", std::nullopt},
      {kStrategyHeuristicWarm, has_prior && context.heuristic_configured,
       "construct a start with the exam-scheduling heuristic", std::nullopt},
      {kStrategyFixAndRelease, has_prior,
       "pin columns the edit does not reach to their previous values, solve, then release", std::nullopt},
  };
  return catalog;
}

Json catalog_to_json(const StrategyCatalog& catalog) {
  Json out = Json::array();
  for (const auto& e : catalog.entries) {
    Json j{{"name", e.name}, {"available", e.available}, {"description", e.description}};
    if (e.preset_name) j["preset_name"] = *e.preset_name;
    out.push_back(std::move(j));
  }
  return out;
}

// --- presets ------------------------------------------------------------------

std::vector<std::filesystem::path> default_preset_dirs() {
  std::vector<std::filesystem::path> dirs;
  if (const char* env = std::getenv("REOPT_PRESET_DIR"); env && *env) dirs.emplace_back(env);
#ifdef REOPT_DEFAULT_PRESET_DIR
  dirs.emplace_back(REOPT_DEFAULT_PRESET_DIR);
#endif
  return dirs;
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

double number(const std::string& text, const std::string& where) {
  try {
    std::size_t used = 0;
    double v = std::stod(text, &used);
    if (used == text.size()) return v;
  } catch (const std::exception&) {
  }
  throw Error("InvalidConfig", fmt::format("{}: '{}' is not a number", where, text));
}

}  // namespace

SolverConfig parse_preset(std::string_view text, const std::string& name) {
  SolverConfig config;
  config.preset_name = name;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const auto where = fmt::format("{}.prm:{}", name, lineno);
    if (eq == std::string::npos) throw Error("InvalidConfig", where + ": expected key = value");
    const auto key = trim(std::string_view(line).substr(0, eq));
    const auto value = trim(std::string_view(line).substr(eq + 1));
    if (key == "time_limit") {
      config.time_limit = number(value, where);
    } else if (key == "mip_gap_tolerance") {
      config.mip_gap_tolerance = number(value, where);
    } else if (key == "feasibility_tolerance") {
      config.feasibility_tolerance = number(value, where);
    } else if (key == "node_selection") {
      config.node_selection = parse_node_selection(value);
    } else if (key == "branching") {
      if (value != "most_fractional") throw Error("InvalidConfig", where + ": unknown branching rule " + value);
    } else if (key == "random_seed") {
      config.random_seed = static_cast<std::uint64_t>(number(value, where));
    } else {
      throw Error("InvalidConfig", fmt::format("{}: unknown setting '{}'", where, key));
    }
  }
  check_config(config);
  return config;
}

SolverConfig load_preset(const std::string& name, const std::vector<std::filesystem::path>& dirs) {
  if (!is_identifier(name)) throw Error("UnknownPreset", fmt::format("'{}' is not a preset name", name));
  for (const auto& dir : dirs) {
    const auto file = dir / (name + ".prm");
    if (std::filesystem::is_regular_file(file)) return parse_preset(read_text_file(file), name);
  }
  throw Error("UnknownPreset", fmt::format("no preset named '{}'", name));
}

// --- warm starts ------------------------------------------------------------------

WarmStart direct_warm_start(const Assignment& prior, const Instance& instance) {
  WarmStart start;
  start.source = WarmStartSource::direct;
  const auto columns = instance.column_map();
  for (const auto& [key, value] : prior) {
    if (columns.count(key)) {
      start.values.emplace(key, value);
    } else {
      ++start.dropped;
    }
  }
  start.coverage =
      instance.variables.empty() ? 1.0 : double(start.values.size()) / double(instance.variables.size());
  return start;
}

FixAndRelease fix_and_release(const Assignment& prior, const std::set<std::string>& affected_keys,
                              const Instance& instance) {
  FixAndRelease out;
  out.start = direct_warm_start(prior, instance);
  out.start.source = WarmStartSource::fix_and_release;
  out.restricted = instance;
  for (auto& v : out.restricted.variables) {
    if (affected_keys.count(v.key)) {
      out.released.insert(v.key);
      continue;
    }
    auto it = prior.find(v.key);
    if (it == prior.end()) {
      throw Error("MissingPriorValue", fmt::format("'{}' is not affected by the edit but has no prior value", v.key));
    }
    double value = it->second;
    if (v.type != VarType::continuous) value = std::round(value);
    v.lower = v.upper = value;
    out.fixed.insert(v.key);
  }
  return out;
}

std::set<std::string> affected_keys(const Instance& before, const Instance& after, const StateDiff& diff) {
  std::set<std::string> out;
  const auto old_columns = before.column_map();

  std::set<std::string> whole_families;
  for (const auto& e : diff.entries) {
    if (e.path.size() < 2 || e.path[0] != "variable_families" || e.path[1] == "$order") continue;
    if (e.path.size() == 2 || e.path[2] != "bounds") whole_families.insert(e.path[1]);
  }

  for (const auto& v : after.variables) {
    auto it = old_columns.find(v.key);
    if (it == old_columns.end()) {
      out.insert(v.key);
      continue;
    }
    const auto& old = before.variables[it->second];
    if (old.lower != v.lower || old.upper != v.upper || old.type != v.type || old.objective != v.objective) {
      out.insert(v.key);
    } else if (!whole_families.empty() && whole_families.count(parse_flat_key(v.key).first)) {
      out.insert(v.key);
    }
  }

  // Rows compared by column names so reordering alone does not count.
  auto named = [](const Instance& inst, const InstanceRow& row) {
    std::map<std::string, double> terms;
    for (const auto& [j, a] : row.terms) terms[inst.variables[j].key] += a;
    return terms;
  };
  auto release_row = [&](const Instance& inst, const InstanceRow& row) {
    for (const auto& [j, a] : row.terms) {
      if (a != 0.0) out.insert(inst.variables[j].key);
    }
  };
  std::map<std::string, const InstanceRow*> old_rows;
  for (const auto& r : before.rows) old_rows[r.key] = &r;
  std::set<std::string> seen;
  for (const auto& r : after.rows) {
    seen.insert(r.key);
    auto it = old_rows.find(r.key);
    if (it == old_rows.end()) {
      release_row(after, r);
      continue;
    }
    const auto& old = *it->second;
    if (old.sense != r.sense || old.rhs != r.rhs || named(before, old) != named(after, r)) {
      release_row(after, r);
      release_row(before, old);
    }
  }
  for (const auto& r : before.rows) {
    if (!seen.count(r.key)) release_row(before, r);
  }

  // Only columns the new instance has can be released.
  const auto new_columns = after.column_map();
  for (auto it = out.begin(); it != out.end();) {
    it = new_columns.count(*it) ? std::next(it) : out.erase(it);
  }
  return out;
}

}  // namespace reopt
