#include <algorithm>

#include <fmt/format.h>

#include "reopt/agents.hpp"

namespace reopt {

// --- planner / selector implementations ------------------------------------------------

PlannerFn mock_planner(MockScript script) {
  return [script = std::move(script)](const PlannerCall& call) {
    auto reply = script.respond(call.delta, call.attempt);
    if (!reply) throw Error("MockNoMatch", fmt::format("mock script has no entry for '{}'", call.delta));
    return *reply;
  };
}

PlannerFn llm_planner(GatewayConfig config, HttpTransport transport) {
  return [config = std::move(config), transport = std::move(transport)](const PlannerCall& call) {
    auto request = call.request;
    request.model = config.model;
    return chat_complete(request, config, transport);
  };
}

SelectorFn llm_selector(GatewayConfig config, HttpTransport transport) {
  return [config = std::move(config), transport = std::move(transport)](const ChatRequest& r) {
    auto request = r;
    request.model = config.model;
    return chat_complete(request, config, transport);
  };
}

// --- strategy ---------------------------------------------------------------------------

Json strategy_to_json(const StrategyChoice& choice) {
  Json j{{"solve_strategy", choice.solve_strategy}, {"toolbox_plan", choice.toolbox_plan}, {"rationale", choice.rationale}};
  if (choice.confidence) j["confidence"] = *choice.confidence;
  if (choice.warning) j["warning"] = *choice.warning;
  return j;
}

StrategyChoice strategy_from_json(const Json& j) {
  if (!j.is_object()) throw ParseError("", "strategy choice must be an object");
  StrategyChoice c;
  if (!j.contains("solve_strategy") || !j.at("solve_strategy").is_string()) {
    throw ParseError("solve_strategy", "missing or not a string");
  }
  c.solve_strategy = j.at("solve_strategy").get<std::string>();
  if (auto it = j.find("toolbox_plan"); it != j.end() && it->is_array()) {
    for (const auto& item : *it) c.toolbox_plan.push_back(item.is_string() ? item.get<std::string>() : item.dump());
  }
  c.rationale = j.value("rationale", "");
  if (auto it = j.find("confidence"); it != j.end() && it->is_number()) c.confidence = it->get<double>();
  if (auto it = j.find("warning"); it != j.end() && it->is_string()) c.warning = it->get<std::string>();
  return c;
}

std::vector<std::string> toolbox_plan_for(const std::string& strategy, const StrategyCatalog& catalog) {
  const auto* entry = catalog.find(strategy);
  const auto preset = (entry && entry->preset_name) ? "preset:" + *entry->preset_name : std::string("preset");
  if (strategy == kStrategyWarm) return {"direct_warm_start"};
  if (strategy == kStrategyWarmTuned) return {"direct_warm_start", preset};
  if (strategy == kStrategyTuned) return {preset};
  if (strategy == kStrategyHeuristicWarm) return {"exam_heuristic_warm_start"};
  if (strategy == kStrategyFixAndRelease) return {"fix_and_release", "direct_warm_start"};
  return {};
}

namespace {

StrategyChoice make_choice(const std::string& name, const StrategyCatalog& catalog, std::string rationale) {
  StrategyChoice c;
  c.solve_strategy = name;
  c.toolbox_plan = toolbox_plan_for(name, catalog);
  c.rationale = std::move(rationale);
  return c;
}

std::string hint(const Json& hints, const char* key) {
  if (!hints.is_object()) return {};
  auto it = hints.find(key);
  return (it != hints.end() && it->is_string()) ? it->get<std::string>() : std::string();
}

}  // namespace

StrategyChoice fallback_strategy(const std::vector<ActionSet>& action_sets, const Json& hints,
                                 const StrategyCatalog& catalog) {
  bool structural = hint(hints, "edit_scope") == "structural";
  std::string ops;
  std::set<std::string> seen;
  for (const auto& set : action_sets) {
    for (const auto& p : set.actions) {
      structural = structural || is_structural_op(p.op);
      if (seen.insert(std::string(to_string(p.op))).second) ops += (ops.empty() ? "" : ", ") + std::string(to_string(p.op));
    }
  }
  if (ops.empty()) ops = "no edits";
  const bool reuse_high = hint(hints, "expected_reuse") == "high";

  if (structural) {
    if (catalog.allows(kStrategyTuned)) {
      return make_choice(kStrategyTuned, catalog,
                         fmt::format("structural edit ({}); warm reuse looks fragile, solving with the tuned preset", ops));
    }
    return make_choice(kStrategyScratch, catalog,
                       fmt::format("structural edit ({}); warm reuse looks fragile, solving from scratch", ops));
  }
  if (reuse_high && catalog.allows(kStrategyWarmTuned)) {
    return make_choice(kStrategyWarmTuned, catalog,
                       fmt::format("local edit ({}) with high expected reuse; reusing the previous incumbent under the "
                                   "tuned preset",
                                   ops));
  }
  if (catalog.allows(kStrategyHeuristicWarm)) {
    return make_choice(kStrategyHeuristicWarm, catalog,
                       fmt::format("local edit ({}); rebuilding a feasible start from the previous schedule with the "
                                   "domain heuristic for reuse",
                                   ops));
  }
  if (catalog.allows(kStrategyWarm)) {
    return make_choice(kStrategyWarm, catalog,
                       fmt::format("local edit ({}); reusing the previous incumbent as a warm start", ops));
  }
  if (catalog.allows(kStrategyTuned)) {
    return make_choice(kStrategyTuned, catalog, fmt::format("local edit ({}); no prior solution to reuse", ops));
  }
  return make_choice(kStrategyScratch, catalog, fmt::format("local edit ({}); no prior solution to reuse", ops));
}

StrategyChoice select_strategy(const std::vector<ActionSet>& action_sets, const PlannerOutput& planner_output,
                               const ModelState&, const SolveResult* prior, const StrategyCatalog& catalog,
                               const AgentContext& context) {
  auto coerce = [&](std::string why) {
    auto c = make_choice(kStrategyScratch, catalog, "fallback to scratch: " + why);
    c.warning = std::move(why);
    return c;
  };

  if (context.strategy_override != "auto" && !context.strategy_override.empty()) {
    if (catalog.allows(context.strategy_override)) {
      return make_choice(context.strategy_override, catalog, "strategy fixed by the caller");
    }
    return coerce(fmt::format("requested strategy '{}' is not available", context.strategy_override));
  }
  if (!context.selector) return fallback_strategy(action_sets, planner_output.planning_hints, catalog);

  std::string text;
  try {
    text = context.selector(
        assemble_selector_prompt(action_sets, catalog, planner_output.planning_hints, prior != nullptr,
                                 context.prompt_settings));
  } catch (const Error& e) {
    auto c = fallback_strategy(action_sets, planner_output.planning_hints, catalog);
    c.warning = fmt::format("selector unavailable ({}: {}); deterministic fallback used", e.code(), e.what());
    return c;
  }
  StrategyChoice c;
  try {
    c = strategy_from_json(extract_json(text));
  } catch (const Error& e) {
    return coerce(fmt::format("unparseable selector output ({})", e.what()));
  }
  if (!catalog.allows(c.solve_strategy)) {
    return coerce(fmt::format("selector chose '{}', which is not in the catalog", c.solve_strategy));
  }
  // Execution follows the strategy; the selector's own list is informational.
  c.toolbox_plan = toolbox_plan_for(c.solve_strategy, catalog);
  if (c.confidence && !(*c.confidence >= 0.0 && *c.confidence <= 1.0)) {
    c.warning = fmt::format("confidence {} outside [0,1] dropped", *c.confidence);
    c.confidence.reset();
  }
  return c;
}

// --- planner ------------------------------------------------------------------------------

PlannerOutput plan(std::string_view delta, const ModelState& state, const FailureRecord* repair,
                   const AgentContext& context, std::size_t attempt) {
  if (!context.planner) throw PlannerFailure("NoPlanner", "no planner is configured");
  PlannerCall call;
  call.request = assemble_planner_prompt(render_for_planner(state, context.render_options), delta, repair,
                                         context.framing, patch_schema_text(), context.prompt_settings);
  call.delta = std::string(delta);
  call.attempt = attempt;
  std::string text;
  try {
    text = context.planner(call);
  } catch (const Error& e) {
    throw PlannerFailure(e.code(), e.what());
  }
  try {
    return parse_planner_output(text);
  } catch (const Error& e) {
    throw PlannerFailure(e.code(), e.what());
  }
}

// --- validator ----------------------------------------------------------------------------

namespace {

std::string repair_instruction_for(FailureStage stage, const std::string& kind) {
  switch (stage) {
    case FailureStage::plan_parse:
      return "Return one JSON object with edit_summary, affected_sets, relevant_components and "
             "candidate_action_sets, each candidate an {actions: [...]} object of canonical patches.";
    case FailureStage::normalize:
      return "Use entity ids or labels that appear in the model representation.";
    case FailureStage::apply:
      if (kind == "UnknownTarget" || kind == "UnknownIndex") {
        return "Target components and indices that exist in the model representation.";
      }
      return "Use the documented payload fields for each operator with concrete ids and numbers.";
    case FailureStage::solve:
      if (kind == "unbounded") return "The edited model is unbounded; keep the bounds or constraints that limit it.";
      if (kind == "no_incumbent") {
        return "The edited model has no feasible solution; revise the edit so the requested change stays feasible.";
      }
      return "The solver failed on the edited model; prefer a simpler equivalent edit.";
    case FailureStage::prompt_check:
      return "The solution violates the request; adjust the edit so the model enforces it.";
  }
  return {};
}

FailureRecord make_failure(FailureStage stage, std::string kind, std::string message) {
  FailureRecord r;
  r.stage = stage;
  r.repair_instruction = repair_instruction_for(stage, kind);
  r.kind = std::move(kind);
  r.message = std::move(message);
  return r;
}

SolveResult solve_candidate(const StrategyChoice& choice, const ModelState& state, const ApplyResult& applied,
                            const Instance& instance, const SolveResult* prior, const AgentContext& context) {
  const auto& s = choice.solve_strategy;
  auto config = context.solver_config;
  if ((s == kStrategyTuned || s == kStrategyWarmTuned) && context.catalog_context.preset_name) {
    config = load_preset(*context.catalog_context.preset_name);
  }
  const Assignment* seed = (prior && prior->assignment) ? &*prior->assignment : nullptr;

  std::optional<WarmStart> start;
  if (seed && (s == kStrategyWarm || s == kStrategyWarmTuned)) start = direct_warm_start(*seed, instance);
  if (seed && s == kStrategyHeuristicWarm) {
    try {
      const auto params = exam_params_from_state(context.heuristic_config, applied.state, *seed);
      start = exam_assignment_to_warm_start(exam_heuristic_warm_start(params), context.heuristic_config, instance);
    } catch (const Error&) {
      // Construction not possible on this edit; plain reuse still helps.
      start = direct_warm_start(*seed, instance);
    }
  }
  if (seed && s == kStrategyFixAndRelease) {
    try {
      const auto affected = affected_keys(instantiate(state), instance, applied.diff);
      auto fr = fix_and_release(*seed, affected, instance);
      auto restricted = solve_with(context.backend, fr.restricted, config, &fr.start);
      if (restricted.assignment) {
        start = WarmStart{*restricted.assignment, WarmStartSource::fix_and_release, 0, 1.0};
      } else {
        start = fr.start;
      }
    } catch (const Error& e) {
      if (e.code() != "MissingPriorValue") throw;
      start = direct_warm_start(*seed, instance);
    }
  }
  return solve_with(context.backend, instance, config, start ? &*start : nullptr);
}

int stage_rank(FailureStage stage) {
  switch (stage) {
    case FailureStage::plan_parse: return 0;
    case FailureStage::normalize: return 1;
    case FailureStage::apply: return 2;
    case FailureStage::solve: return 3;
    case FailureStage::prompt_check: return 4;
  }
  return 0;
}

}  // namespace

Validation validate_and_solve(const std::vector<ActionSet>& action_sets, const StrategyChoice& choice,
                              const ModelState& state, const SolveResult* prior,
                              const std::vector<PromptCheck>& checks, const AgentContext& context) {
  Validation v;
  v.state = state;
  std::optional<std::size_t> best;
  ApplyResult best_applied;

  for (std::size_t i = 0; i < action_sets.size(); ++i) {
    CandidateLog log;
    log.index = i;
    log.actions = action_sets[i];
    auto fail = [&](FailureStage stage, std::string kind, std::string message) {
      log.outcome = std::string(to_string(stage));
      log.failure = make_failure(stage, std::move(kind), std::move(message));
    };

    std::optional<ApplyResult> applied;
    try {
      applied = apply_action_set(state, action_sets[i]);
      log.applied = true;
    } catch (const Error& e) {
      fail(FailureStage::apply, e.code(), e.what());
    }

    if (applied) {
      try {
        const auto instance = instantiate(applied->state);
        auto result = solve_candidate(choice, state, *applied, instance, prior, context);
        if (!result.assignment) {
          const auto kind = result.status == SolveStatus::unbounded ? "unbounded" : "no_incumbent";
          fail(FailureStage::solve, kind,
               fmt::format("solve ended {} without an incumbent", to_string(result.status)));
        } else {
          log.incumbent = true;
          log.objective = result.objective;
          std::vector<std::string> violated;
          for (const auto& check : checks) {
            if (auto why = evaluate_check(check, applied->state, instance, result)) violated.push_back(*why);
          }
          if (!violated.empty()) {
            std::string message;
            for (const auto& w : violated) message += (message.empty() ? "" : "; ") + w;
            fail(FailureStage::prompt_check, "prompt_violation", message);
          } else {
            log.outcome = "ok";
            // Strict less keeps the earliest candidate on ties.
            if (!best || *result.objective < *v.solution.objective) {
              best = i;
              v.solution = std::move(result);
              best_applied = *applied;
            }
          }
        }
      } catch (const Error& e) {
        // Unexpected errors keep their own code so the cause stays visible.
        fail(FailureStage::solve, e.code(), e.what());
      }
    }
    v.log.push_back(std::move(log));
  }

  if (best) {
    v.ok = true;
    v.best_index = *best;
    v.best = action_sets[*best];
    v.state = std::move(best_applied.state);
    v.diff = std::move(best_applied.diff);
    return v;
  }

  if (action_sets.empty()) {
    v.failure = make_failure(FailureStage::plan_parse, "EmptyPlan", "the planner proposed no candidate action set");
    return v;
  }
  // Report the candidate that got furthest; list every cause in the message.
  const CandidateLog* lead = nullptr;
  std::string message;
  for (const auto& log : v.log) {
    if (!log.failure) continue;
    if (!lead || stage_rank(log.failure->stage) > stage_rank(lead->failure->stage)) lead = &log;
    message += fmt::format("{}candidate {}: [{}/{}] {}", message.empty() ? "" : "; ", log.index + 1,
                           to_string(log.failure->stage), log.failure->kind, log.failure->message);
  }
  v.failure = *lead->failure;
  v.failure->message = message;
  return v;
}

// --- closed loop ---------------------------------------------------------------------------

std::string_view to_string(StepStatus status) {
  return status == StepStatus::succeeded ? "succeeded" : "failed_budget_exhausted";
}

StepOutcome run_closed_loop(std::string_view delta, const ModelState& state, const SolveResult* prior,
                            std::size_t budget, const std::vector<PromptCheck>& checks, const AgentContext& context) {
  if (budget < 1) throw Error("InvalidBudget", "retry budget must be at least 1");
  StepOutcome out;
  out.state = state;
  out.new_state_version = state.version;
  if (prior) out.solution = *prior;

  std::optional<FailureRecord> rho;
  std::vector<AttemptNote> notes;
  auto record = [&](FailureRecord failure) {
    failure.attempt_history = notes;
    notes.push_back(failure.note());
    rho = std::move(failure);
  };

  for (std::size_t n = 0; n < budget; ++n) {
    out.attempts_used = n + 1;
    ++out.planner_calls;

    PlannerOutput output;
    try {
      output = plan(delta, state, rho ? &*rho : nullptr, context, n);
    } catch (const PlannerFailure& e) {
      CandidateLog log;
      log.attempt = n;
      log.outcome = "plan_parse";
      log.failure = make_failure(FailureStage::plan_parse, e.cause(), e.what());
      out.log.push_back(log);
      record(*log.failure);
      continue;
    }
    out.planner_output = output;

    // Programmer pass; a set that cannot be normalized drops out alone.
    std::vector<ActionSet> normalized;
    std::vector<std::size_t> origin;
    std::vector<CandidateLog> normalize_failures;
    for (std::size_t i = 0; i < output.candidate_action_sets.size(); ++i) {
      try {
        normalized.push_back(normalize_action_set(output.candidate_action_sets[i], state));
        origin.push_back(i);
      } catch (const Error& e) {
        CandidateLog log;
        log.attempt = n;
        log.index = i;
        log.outcome = "normalize";
        log.failure = make_failure(FailureStage::normalize, e.code(), e.what());
        normalize_failures.push_back(std::move(log));
      }
    }

    Validation v;
    if (!normalized.empty()) {
      const auto catalog = list_strategies(state, prior, context.catalog_context);
      out.strategy = select_strategy(normalized, output, state, prior, catalog, context);
      v = validate_and_solve(normalized, *out.strategy, state, prior, checks, context);
      for (auto& log : v.log) log.index = origin[log.index];
    } else if (output.candidate_action_sets.empty()) {
      v.failure = make_failure(FailureStage::plan_parse, "EmptyPlan", "the planner proposed no candidate action set");
    } else {
      v.failure = *normalize_failures.front().failure;
    }

    std::vector<CandidateLog> merged = normalize_failures;
    for (auto& log : v.log) merged.push_back(std::move(log));
    std::sort(merged.begin(), merged.end(), [](const auto& a, const auto& b) { return a.index < b.index; });
    for (auto& log : merged) {
      log.attempt = n;
      out.log.push_back(std::move(log));
    }

    if (v.ok) {
      out.status = StepStatus::succeeded;
      out.applied_action_set = v.best;
      out.new_state_version = v.state.version;
      out.solution = std::move(v.solution);
      out.diff = std::move(v.diff);
      out.state = std::move(v.state);
      out.failure.reset();
      return out;
    }
    record(*v.failure);
  }

  out.status = StepStatus::failed_budget_exhausted;
  out.failure = rho;
  return out;
}

Json step_outcome_to_json(const StepOutcome& outcome) {
  Json j;
  j["status"] = to_string(outcome.status);
  j["applied_action_set"] = outcome.applied_action_set ? action_set_to_json(*outcome.applied_action_set) : Json();
  j["new_state_version"] = outcome.new_state_version;
  j["solution"] = outcome.solution ? solve_result_to_json(*outcome.solution) : Json();
  j["objective"] = (outcome.solution && outcome.solution->objective) ? Json(*outcome.solution->objective) : Json();
  j["attempts_used"] = outcome.attempts_used;
  j["planner_calls"] = outcome.planner_calls;
  Json log = Json::array();
  for (const auto& c : outcome.log) {
    Json e{{"attempt", c.attempt + 1}, {"candidate", c.index + 1}, {"outcome", c.outcome}};
    e["objective"] = c.objective ? Json(*c.objective) : Json();
    if (c.failure) e["failure"] = failure_to_json(*c.failure);
    log.push_back(std::move(e));
  }
  j["candidates"] = std::move(log);
  j["strategy"] = outcome.strategy ? strategy_to_json(*outcome.strategy) : Json();
  j["planner_output"] = outcome.planner_output ? planner_output_to_json(*outcome.planner_output) : Json();
  j["failure"] = outcome.failure ? failure_to_json(*outcome.failure) : Json();
  j["diff"] = diff_to_json(outcome.diff);
  return j;
}

}  // namespace reopt
