#include "reopt/scenario.hpp"

#include <cstdlib>

#include <fmt/format.h>

namespace reopt {

CatalogContext Scenario::catalog_context() const {
  CatalogContext context;
  context.preset_name = preset;
  context.heuristic_configured = heuristic.is_object();
  return context;
}

std::filesystem::path resolve_scenario(const std::string& name_or_path) {
  namespace fs = std::filesystem;
  if (fs::is_regular_file(name_or_path)) return name_or_path;
  std::vector<fs::path> dirs;
  if (const char* env = std::getenv("REOPT_SCENARIO_DIR"); env && *env) dirs.emplace_back(env);
#ifdef REOPT_DEFAULT_SCENARIO_DIR
  dirs.emplace_back(REOPT_DEFAULT_SCENARIO_DIR);
#endif
  const auto stem = fs::path(name_or_path).stem().string();
  for (const auto& dir : dirs) {
    for (const auto& candidate : {dir / stem / (stem + ".json"), dir / (stem + ".json")}) {
      if (fs::is_regular_file(candidate)) return candidate;
    }
  }
  throw Error("UnknownScenario", fmt::format("no scenario file or name '{}'", name_or_path));
}

Scenario load_scenario(const std::string& name_or_path) {
  Scenario scenario;
  scenario.file = resolve_scenario(name_or_path);
  const auto dir = scenario.file.parent_path();
  const auto doc = read_json_file(scenario.file);
  if (!doc.is_object()) throw ParseError(scenario.file.string(), "scenario must be a JSON object");

  if (auto domain = doc.find("domain"); domain != doc.end()) {
    if (*domain == "exam") {
      register_exam_domain();
    } else {
      throw ParseError("/domain", fmt::format("unknown domain pack {}", domain->dump()));
    }
  }
  scenario.state = load_state(doc);
  scenario.name = doc.value("name", scenario.file.stem().string());
  if (doc.contains("preset")) scenario.preset = doc.at("preset").get<std::string>();
  if (doc.contains("framing")) scenario.framing = doc.at("framing").get<std::string>();
  if (doc.contains("framing_file")) scenario.framing = read_text_file(dir / doc.at("framing_file").get<std::string>());
  if (doc.contains("catalog")) scenario.catalog = dir / doc.at("catalog").get<std::string>();
  if (doc.contains("mock_script")) scenario.mock_script = dir / doc.at("mock_script").get<std::string>();
  if (doc.contains("heuristic")) scenario.heuristic = doc.at("heuristic");
  return scenario;
}

}  // namespace reopt
