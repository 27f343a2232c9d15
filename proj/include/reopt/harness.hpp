#pragma once

// Prompt catalogs, catalog replay and the report tables built from it.

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "reopt/agents.hpp"
#include "reopt/scenario.hpp"

namespace reopt {

// --- running the loop against a scenario ---------------------------------------------------

struct RunOptions {
  /// "mock" (the scenario's script) or "llm" (REOPT_LLM_* environment).
  std::string planner = "mock";
  /// "auto" or a forced strategy name.
  std::string strategy = "auto";
  std::size_t budget = 2;
  std::string backend = "builtin";
};

/// Throws Error("NoMockScript") for the mock planner without a script and
/// Error("UnknownPlanner") for anything but mock/llm.
AgentContext make_agent_context(const Scenario& scenario, const RunOptions& options);

/// Scratch solve of the scenario state with the context's settings.
SolveResult solve_baseline(const ModelState& state, const AgentContext& context);

// --- catalogs --------------------------------------------------------------------------------

struct CatalogEntry {
  std::string prompt_id;
  std::string delta;
  /// Absent when the entry carries no reference_actions.
  std::optional<Reference> reference;
  /// name -> prompt check, reported per row as pass / fail.
  std::map<std::string, PromptCheck> domain_metrics;
};

/// A JSON list of {prompt_id, delta, reference_actions?, prompt_checks?,
/// domain_metrics?}. Throws Error("MalformedCatalog") listing every bad entry.
std::vector<CatalogEntry> parse_catalog(const Json& document);
std::vector<CatalogEntry> load_catalog(const std::filesystem::path& path);

// --- reports -----------------------------------------------------------------------------------

/// One (instance, prompt, variant) run before aggregation.
struct CaseResult {
  std::string instance;
  std::string prompt_id;
  std::string variant;
  std::string status;
  std::string strategy;
  std::optional<double> objective;
  std::optional<double> solver_gap;
  double wall_time = 0.0;
  std::size_t attempts_used = 0;
  std::optional<CaseScore> score;
  std::map<std::string, bool> domain_metrics;
  /// Set when the run could not be attempted at all.
  std::string error;
};

struct ReportRow {
  CaseResult result;
  std::optional<double> reference_objective;
  std::optional<double> delta_objective;
  /// delta / max(1, |reference|) * 100.
  std::optional<double> gap_percent;
  bool missing_reference = false;
};

struct CriteriaCounts {
  std::size_t cases = 0;
  std::size_t update_correct = 0;
  std::size_t prompt_satisfied = 0;
  std::size_t first_attempt_success = 0;
  std::size_t final_success = 0;
  std::map<FailureMode, std::size_t> failure_modes;

  /// final <= prompt_satisfied <= update_correct and first_attempt <= final.
  bool nested() const;
};

struct ReplayReport {
  std::vector<ReportRow> rows;
  /// Keyed by variant.
  std::map<std::string, CriteriaCounts> aggregates;
};

/// Reference objectives are keyed "instance/prompt_id". Rows without a score
/// or reference objective are flagged missing_reference and left out of the
/// aggregates.
ReplayReport compute_report(const std::vector<CaseResult>& results,
                            const std::map<std::string, double>& reference_objectives);

Json report_to_json(const ReplayReport& report);
std::string report_to_csv(const ReplayReport& report);
std::string report_to_text(const ReplayReport& report);

struct ReplayOptions {
  RunOptions run;
  /// "patch" or "patch-no-selector" (forces scratch).
  std::string variant = "patch";
};

/// Runs every entry from the scenario baseline, scores it against its
/// reference and aggregates.
ReplayReport replay(const Scenario& scenario, const std::vector<CatalogEntry>& catalog, const ReplayOptions& options);

}  // namespace reopt
