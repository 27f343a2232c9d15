#include "reopt/harness.hpp"

#include <chrono>
#include <cmath>

#include <fmt/format.h>

namespace reopt {

AgentContext make_agent_context(const Scenario& scenario, const RunOptions& options) {
  AgentContext context;
  if (options.planner == "mock") {
    if (!scenario.mock_script) {
      throw Error("NoMockScript", fmt::format("scenario '{}' has no mock_script for the mock planner", scenario.name));
    }
    context.planner = mock_planner(MockScript::load(*scenario.mock_script));
  } else if (options.planner == "llm") {
    const auto config = GatewayConfig::from_env();
    context.planner = llm_planner(config);
    context.selector = llm_selector(config);
    context.prompt_settings.model = config.model;
  } else {
    throw Error("UnknownPlanner", fmt::format("planner must be mock or llm, not '{}'", options.planner));
  }
  context.strategy_override = options.strategy;
  context.framing = scenario.framing;
  context.catalog_context = scenario.catalog_context();
  context.heuristic_config = scenario.heuristic;
  context.backend = options.backend;
  return context;
}

SolveResult solve_baseline(const ModelState& state, const AgentContext& context) {
  return solve_with(context.backend, instantiate(state), context.solver_config);
}

// --- catalogs ----------------------------------------------------------------------------------

std::vector<CatalogEntry> parse_catalog(const Json& document) {
  const Json* list = &document;
  if (document.is_object() && document.contains("prompts")) list = &document.at("prompts");
  if (!list->is_array()) throw Error("MalformedCatalog", "catalog must be a JSON list of prompt entries");

  std::vector<CatalogEntry> out;
  std::vector<std::string> problems;
  std::set<std::string> ids;
  for (std::size_t i = 0; i < list->size(); ++i) {
    const auto& e = (*list)[i];
    const auto where = fmt::format("entry {}", i);
    try {
      if (!e.is_object()) throw ParseError("", "expected an object");
      CatalogEntry entry;
      if (!e.contains("prompt_id") || !e.at("prompt_id").is_string()) throw ParseError("prompt_id", "required string");
      entry.prompt_id = e.at("prompt_id").get<std::string>();
      if (!ids.insert(entry.prompt_id).second) throw ParseError("prompt_id", "duplicate id " + entry.prompt_id);
      const char* delta_key = e.contains("delta") ? "delta" : "delta_text";
      if (!e.contains(delta_key) || !e.at(delta_key).is_string()) throw ParseError("delta", "required string");
      entry.delta = e.at(delta_key).get<std::string>();
      if (e.contains("reference_actions")) {
        Reference ref;
        const auto& actions = e.at("reference_actions");
        ref.actions = action_set_from_json(actions.is_array() ? Json{{"actions", actions}} : actions, "reference_actions");
        for (const auto& c : e.value("prompt_checks", Json::array())) ref.checks.push_back(prompt_check_from_json(c));
        entry.reference = std::move(ref);
      } else if (e.contains("prompt_checks")) {
        throw ParseError("prompt_checks", "checks need reference_actions");
      }
      if (e.contains("domain_metrics")) {
        const auto& metrics = e.at("domain_metrics");
        if (!metrics.is_object()) throw ParseError("domain_metrics", "expected an object of prompt checks");
        for (const auto& [name, check] : metrics.items()) entry.domain_metrics[name] = prompt_check_from_json(check);
      }
      out.push_back(std::move(entry));
    } catch (const Error& err) {
      problems.push_back(fmt::format("{} ({}): {}", where, e.is_object() ? e.value("prompt_id", "?") : "?", err.what()));
    } catch (const Json::exception& err) {
      problems.push_back(fmt::format("{}: {}", where, err.what()));
    }
  }
  if (!problems.empty()) {
    std::string message = "malformed catalog:";
    for (const auto& p : problems) message += "\n  " + p;
    throw Error("MalformedCatalog", message);
  }
  return out;
}

std::vector<CatalogEntry> load_catalog(const std::filesystem::path& path) { return parse_catalog(read_json_file(path)); }

// --- reports -------------------------------------------------------------------------------------

bool CriteriaCounts::nested() const {
  return final_success <= prompt_satisfied && prompt_satisfied <= update_correct &&
         first_attempt_success <= final_success;
}

ReplayReport compute_report(const std::vector<CaseResult>& results,
                            const std::map<std::string, double>& reference_objectives) {
  ReplayReport report;
  for (const auto& r : results) {
    ReportRow row;
    row.result = r;
    auto ref = reference_objectives.find(r.instance + "/" + r.prompt_id);
    if (ref != reference_objectives.end()) row.reference_objective = ref->second;
    row.missing_reference = !r.score || !row.reference_objective;
    if (row.reference_objective && r.objective) {
      row.delta_objective = *r.objective - *row.reference_objective;
      row.gap_percent = *row.delta_objective / std::max(1.0, std::abs(*row.reference_objective)) * 100.0;
    }
    auto& agg = report.aggregates[r.variant];
    if (!row.missing_reference) {
      const auto& s = *r.score;
      ++agg.cases;
      agg.update_correct += s.update_correct;
      agg.prompt_satisfied += s.prompt_satisfied;
      agg.first_attempt_success += s.first_attempt_success;
      agg.final_success += s.final_success;
      for (auto m : s.failure_modes) ++agg.failure_modes[m];
    }
    report.rows.push_back(std::move(row));
  }
  return report;
}

namespace {

Json opt(const std::optional<double>& v) { return v ? Json(*v) : Json(); }

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) out += c == '"' ? std::string("\"\"") : std::string(1, c);
  return out + '"';
}

std::string num(const std::optional<double>& v) { return v ? fmt::format("{}", *v) : std::string(); }

std::string modes_text(const std::set<FailureMode>& modes) {
  std::string out;
  for (auto m : modes) out += (out.empty() ? "" : ";") + std::string(to_string(m));
  return out;
}

}  // namespace

Json report_to_json(const ReplayReport& report) {
  Json rows = Json::array();
  for (const auto& row : report.rows) {
    const auto& r = row.result;
    Json j{{"instance", r.instance},
           {"prompt_id", r.prompt_id},
           {"variant", r.variant},
           {"status", r.status},
           {"strategy", r.strategy},
           {"attempts_used", r.attempts_used},
           {"objective", opt(r.objective)},
           {"reference_objective", opt(row.reference_objective)},
           {"delta_objective", opt(row.delta_objective)},
           {"gap_percent", opt(row.gap_percent)},
           {"solver_gap", opt(r.solver_gap)},
           {"wall_time", r.wall_time},
           {"missing_reference", row.missing_reference},
           {"domain_metrics", r.domain_metrics}};
    j["score"] = r.score ? case_score_to_json(*r.score) : Json();
    if (!r.error.empty()) j["error"] = r.error;
    rows.push_back(std::move(j));
  }
  Json aggregates = Json::object();
  for (const auto& [variant, a] : report.aggregates) {
    Json modes = Json::object();
    for (auto m : all_failure_modes()) {
      auto it = a.failure_modes.find(m);
      modes[std::string(to_string(m))] = it == a.failure_modes.end() ? 0 : it->second;
    }
    aggregates[variant] = {{"cases", a.cases},
                           {"update_correct", a.update_correct},
                           {"prompt_satisfied", a.prompt_satisfied},
                           {"first_attempt_success", a.first_attempt_success},
                           {"final_success", a.final_success},
                           {"failure_modes", modes},
                           {"nested", a.nested()}};
  }
  return {{"rows", rows}, {"aggregates", aggregates}};
}

std::string report_to_csv(const ReplayReport& report) {
  std::string out =
      "instance,prompt_id,variant,status,strategy,attempts_used,objective,reference_objective,delta_objective,"
      "gap_percent,solver_gap,wall_time,update_correct,prompt_satisfied,first_attempt_success,final_success,"
      "failure_modes,missing_reference,error\n";
  for (const auto& row : report.rows) {
    const auto& r = row.result;
    auto flag = [&](bool CaseScore::*field) { return r.score ? ((*r.score).*field ? "1" : "0") : ""; };
    out += fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n", csv_field(r.instance),
                       csv_field(r.prompt_id), csv_field(r.variant), r.status, r.strategy, r.attempts_used,
                       num(r.objective), num(row.reference_objective), num(row.delta_objective), num(row.gap_percent),
                       num(r.solver_gap), r.wall_time, flag(&CaseScore::update_correct),
                       flag(&CaseScore::prompt_satisfied), flag(&CaseScore::first_attempt_success),
                       flag(&CaseScore::final_success), r.score ? modes_text(r.score->failure_modes) : "",
                       row.missing_reference ? 1 : 0, csv_field(r.error));
  }
  return out;
}

std::string report_to_text(const ReplayReport& report) {
  std::string out = fmt::format("{:<10} {:<8} {:<18} {:<24} {:<16} {:>4} {:>12} {:>12} {:>9}  {}\n", "instance", "prompt",
                                "variant", "status", "strategy", "att", "objective", "reference", "gap%", "criteria");
  auto fmt_num = [](const std::optional<double>& v, int precision) {
    return v ? fmt::format("{:.{}f}", *v, precision) : std::string("-");
  };
  for (const auto& row : report.rows) {
    const auto& r = row.result;
    std::string criteria = "-";
    if (r.score) {
      const auto& s = *r.score;
      criteria = fmt::format("U{} P{} F{} S{}", s.update_correct ? '+' : '-', s.prompt_satisfied ? '+' : '-',
                             s.first_attempt_success ? '+' : '-', s.final_success ? '+' : '-');
      if (!s.failure_modes.empty()) criteria += " [" + modes_text(s.failure_modes) + "]";
    }
    if (row.missing_reference) criteria += " (missing reference)";
    if (!r.error.empty()) criteria += " error: " + r.error;
    out += fmt::format("{:<10} {:<8} {:<18} {:<24} {:<16} {:>4} {:>12} {:>12} {:>9}  {}\n", r.instance, r.prompt_id,
                       r.variant, r.status, r.strategy.empty() ? "-" : r.strategy, r.attempts_used,
                       fmt_num(r.objective, 4), fmt_num(row.reference_objective, 4), fmt_num(row.gap_percent, 2),
                       criteria);
  }
  for (const auto& [variant, a] : report.aggregates) {
    out += fmt::format(
        "\n{}: update_correct {}/{}  prompt_satisfied {}/{}  first_attempt_success {}/{}  final_success {}/{}\n",
        variant, a.update_correct, a.cases, a.prompt_satisfied, a.cases, a.first_attempt_success, a.cases,
        a.final_success, a.cases);
    out += "  failure modes:";
    for (auto m : all_failure_modes()) {
      auto it = a.failure_modes.find(m);
      out += fmt::format(" {}={}", to_string(m), it == a.failure_modes.end() ? 0 : it->second);
    }
    out += '\n';
  }
  return out;
}

// --- replay --------------------------------------------------------------------------------------

ReplayReport replay(const Scenario& scenario, const std::vector<CatalogEntry>& catalog, const ReplayOptions& options) {
  if (options.variant != "patch" && options.variant != "patch-no-selector") {
    throw Error("UnknownVariant", fmt::format("variant must be patch or patch-no-selector, not '{}'", options.variant));
  }
  auto run = options.run;
  if (options.variant == "patch-no-selector") run.strategy = kStrategyScratch;
  const auto context = make_agent_context(scenario, run);
  const auto baseline = solve_baseline(scenario.state, context);

  std::vector<CaseResult> results;
  std::map<std::string, double> references;
  for (const auto& entry : catalog) {
    CaseResult r;
    r.instance = scenario.name;
    r.prompt_id = entry.prompt_id;
    r.variant = options.variant;
    try {
      if (entry.reference) {
        const auto ref_state =
            apply_action_set(scenario.state, normalize_action_set(entry.reference->actions, scenario.state)).state;
        const auto ref = solve_baseline(ref_state, context);
        if (ref.objective) references[r.instance + "/" + r.prompt_id] = *ref.objective;
      }
      const auto checks = entry.reference ? entry.reference->checks : std::vector<PromptCheck>{};
      const auto out = run_closed_loop(entry.delta, scenario.state, baseline.has_incumbent() ? &baseline : nullptr,
                                       run.budget, checks, context);
      r.status = std::string(to_string(out.status));
      r.attempts_used = out.attempts_used;
      if (out.strategy) r.strategy = out.strategy->solve_strategy;
      if (out.status == StepStatus::succeeded && out.solution) {
        r.objective = out.solution->objective;
        r.solver_gap = out.solution->gap;
        r.wall_time = out.solution->wall_time;
        if (!entry.domain_metrics.empty()) {
          const auto instance = instantiate(out.state);
          for (const auto& [name, check] : entry.domain_metrics) {
            r.domain_metrics[name] = !evaluate_check(check, out.state, instance, *out.solution).has_value();
          }
        }
      }
      if (entry.reference) r.score = score_case(out, scenario.state, *entry.reference);
    } catch (const Error& e) {
      r.status = "error";
      r.error = fmt::format("{}: {}", e.code(), e.what());
      if (entry.reference) r.score = CaseScore{false, false, false, false, {FailureMode::missing_output}};
    }
    results.push_back(std::move(r));
  }
  return compute_report(results, references);
}

}  // namespace reopt
