#pragma once

// Planner, selector and validator wired into the bounded repair loop, plus
// the offline scoring used by the replay harness.

#include <cstdint>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "reopt/diff.hpp"
#include "reopt/failure.hpp"
#include "reopt/llm.hpp"
#include "reopt/patch.hpp"
#include "reopt/solver.hpp"
#include "reopt/toolbox.hpp"

namespace reopt {

// --- contracts -------------------------------------------------------------------

struct PlannerCall {
  ChatRequest request;
  std::string delta;
  std::size_t attempt = 0;  // 0-based
};

/// Returns raw planner text. May throw Error; the loop turns it into a
/// plan_parse failure.
using PlannerFn = std::function<std::string(const PlannerCall&)>;
using SelectorFn = std::function<std::string(const ChatRequest&)>;

/// Throws Error("MockNoMatch") when no entry matches the delta.
PlannerFn mock_planner(MockScript script);
PlannerFn llm_planner(GatewayConfig config, HttpTransport transport = default_transport());
SelectorFn llm_selector(GatewayConfig config, HttpTransport transport = default_transport());

// --- strategy -----------------------------------------------------------------------

struct StrategyChoice {
  std::string solve_strategy = kStrategyScratch;
  std::vector<std::string> toolbox_plan;
  std::string rationale;
  std::optional<double> confidence;
  /// Set when the selector's answer was not legal and scratch was used.
  std::optional<std::string> warning;

  bool operator==(const StrategyChoice&) const = default;
};

Json strategy_to_json(const StrategyChoice& choice);
StrategyChoice strategy_from_json(const Json& j);

/// The toolbox steps a strategy runs, in order.
std::vector<std::string> toolbox_plan_for(const std::string& strategy, const StrategyCatalog& catalog);

// --- prompt checks ----------------------------------------------------------------------

/// Declarative predicate shipped with a catalog entry, e.g.
/// var_at_most(flows,(P2,C2),5), param_equals(demand,C3,28),
/// objective_at_most(200), fulfillment_at_least(demand_constraints,1).
struct PromptCheck {
  std::string kind;
  std::string target;
  IndexKey key;
  double value = 0.0;
  std::string text;

  bool operator==(const PromptCheck&) const = default;
};

/// Throws ParseError.
PromptCheck parse_prompt_check(std::string_view text);
/// A string in the form above or {"kind", "target", "key", "value"}.
PromptCheck prompt_check_from_json(const Json& j);

/// nullopt when satisfied, otherwise the reason.
std::optional<std::string> evaluate_check(const PromptCheck& check, const ModelState& state, const Instance& instance,
                                          const SolveResult& result, double tolerance = 1e-6);

// --- agent context -------------------------------------------------------------------------

struct AgentContext {
  PlannerFn planner;
  /// Empty: the deterministic selector decides.
  SelectorFn selector;
  /// "auto" or a strategy name forced on every step.
  std::string strategy_override = "auto";
  std::string framing;
  CatalogContext catalog_context;
  SolverConfig solver_config;
  std::string backend = "builtin";
  /// Scenario "heuristic" object; needed by heuristic_warm.
  Json heuristic_config;
  PromptSettings prompt_settings;
  RenderOptions render_options;
};

/// code() is "PlannerFailure"; cause() is the underlying code, e.g.
/// "MalformedDocument", "AuthError", "MockNoMatch".
class PlannerFailure : public Error {
 public:
  PlannerFailure(std::string cause, const std::string& message)
      : Error("PlannerFailure", message), cause_(std::move(cause)) {}
  const std::string& cause() const noexcept { return cause_; }

 private:
  std::string cause_;
};

/// Throws PlannerFailure.
PlannerOutput plan(std::string_view delta, const ModelState& state, const FailureRecord* repair,
                   const AgentContext& context, std::size_t attempt = 0);

/// Deterministic preference order: warm+tuned for reuse-friendly local edits
/// when both are available, heuristic or plain warm for other local edits,
/// tuned or scratch for structural ones.
StrategyChoice fallback_strategy(const std::vector<ActionSet>& action_sets, const Json& hints,
                                 const StrategyCatalog& catalog);

/// Always returns a catalog-legal choice.
StrategyChoice select_strategy(const std::vector<ActionSet>& action_sets, const PlannerOutput& planner_output,
                               const ModelState& state, const SolveResult* prior, const StrategyCatalog& catalog,
                               const AgentContext& context);

// --- validation ------------------------------------------------------------------------------

struct CandidateLog {
  std::size_t attempt = 0;
  std::size_t index = 0;
  /// "ok", or the failure stage name.
  std::string outcome;
  std::optional<double> objective;
  std::optional<FailureRecord> failure;
  /// The normalized set, when normalization succeeded.
  std::optional<ActionSet> actions;
  bool applied = false;
  bool incumbent = false;
};

struct Validation {
  bool ok = false;
  std::size_t best_index = 0;
  ActionSet best;
  ModelState state;
  SolveResult solution;
  StateDiff diff;
  std::optional<FailureRecord> failure;
  std::vector<CandidateLog> log;
};

/// Best-improvement over the candidates: lowest objective among those whose
/// incumbent passes every check, ties to the earliest.
Validation validate_and_solve(const std::vector<ActionSet>& action_sets, const StrategyChoice& choice,
                              const ModelState& state, const SolveResult* prior,
                              const std::vector<PromptCheck>& checks, const AgentContext& context);

// --- closed loop --------------------------------------------------------------------------------

enum class StepStatus { succeeded, failed_budget_exhausted };
std::string_view to_string(StepStatus status);

struct StepOutcome {
  StepStatus status = StepStatus::failed_budget_exhausted;
  std::optional<ActionSet> applied_action_set;
  std::uint64_t new_state_version = 0;
  /// New incumbent on success, the prior solution otherwise.
  std::optional<SolveResult> solution;
  std::size_t attempts_used = 0;
  std::size_t planner_calls = 0;
  std::vector<CandidateLog> log;
  std::optional<StrategyChoice> strategy;
  std::optional<PlannerOutput> planner_output;
  std::optional<FailureRecord> failure;
  StateDiff diff;
  /// Committed state (unchanged on failure). Not serialized.
  ModelState state;
};

Json step_outcome_to_json(const StepOutcome& outcome);

/// Throws Error("InvalidBudget") when budget < 1.
StepOutcome run_closed_loop(std::string_view delta, const ModelState& state, const SolveResult* prior,
                            std::size_t budget, const std::vector<PromptCheck>& checks, const AgentContext& context);

// --- scoring --------------------------------------------------------------------------------------

enum class FailureMode { wrong_component, invalid_patch, bad_update, no_incumbent, prompt_violation, missing_output };
std::string_view to_string(FailureMode mode);
const std::vector<FailureMode>& all_failure_modes();

struct Reference {
  ActionSet actions;
  std::vector<PromptCheck> checks;
};

struct CaseScore {
  bool update_correct = false;
  bool prompt_satisfied = false;
  bool first_attempt_success = false;
  bool final_success = false;
  std::set<FailureMode> failure_modes;

  bool operator==(const CaseScore&) const = default;
};

Json case_score_to_json(const CaseScore& score);
CaseScore case_score_from_json(const Json& j);

/// Applied edits compared by the instances they produce, not by syntax.
bool states_equivalent(const ModelState& a, const ModelState& b);

/// Failure modes of one run. `reference` may be null, which disables the
/// reference-based modes.
std::set<FailureMode> classify_failure(const StepOutcome& outcome, const ModelState& before, const Reference* reference);

CaseScore score_case(const StepOutcome& outcome, const ModelState& before, const Reference& reference);

}  // namespace reopt
