#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "reopt/model.hpp"
#include "reopt/model_io.hpp"
#include "reopt/toolbox.hpp"

namespace reopt {

/// A model state plus the files that travel with it. Paths are resolved
/// against the scenario file's directory.
struct Scenario {
  std::string name;
  std::filesystem::path file;
  ModelState state;
  std::optional<std::string> preset;
  /// Domain framing appended to the planner's system prompt.
  std::string framing;
  std::optional<std::filesystem::path> catalog;
  std::optional<std::filesystem::path> mock_script;
  /// Parameter names for the exam heuristic; null when not configured.
  Json heuristic;

  CatalogContext catalog_context() const;
};

/// Accepts a path to a scenario file or a bare name looked up as
/// `<dir>/<name>/<name>.json` under $REOPT_SCENARIO_DIR and the shipped
/// scenarios. Throws Error("UnknownScenario").
std::filesystem::path resolve_scenario(const std::string& name_or_path);

/// Registers the domain pack named by the "domain" field before parsing the
/// state. Throws ParseError / Error("UnknownScenario").
Scenario load_scenario(const std::string& name_or_path);

}  // namespace reopt
