#include <algorithm>
#include <cctype>
#include <cmath>

#include <fmt/format.h>

#include "reopt/agents.hpp"

namespace reopt {

// --- prompt checks -------------------------------------------------------------------------

namespace {

std::string trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return std::string(s);
}

// Splits on commas outside parentheses and brackets.
std::vector<std::string> split_args(std::string_view text, std::string_view whole) {
  std::vector<std::string> out;
  int depth = 0;
  std::size_t start = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (c == '(' || c == '[') ++depth;
    if (c == ')' || c == ']') --depth;
    if (depth < 0) throw ParseError(std::string(whole), "unbalanced parentheses");
    if (c == ',' && depth == 0) {
      out.push_back(trim(text.substr(start, i - start)));
      start = i + 1;
    }
  }
  if (depth != 0) throw ParseError(std::string(whole), "unbalanced parentheses");
  auto last = trim(text.substr(start));
  if (!last.empty() || !out.empty()) out.push_back(last);
  return out;
}

IndexKey parse_key_arg(const std::string& arg) {
  std::string_view s = arg;
  if (s.size() >= 2 && ((s.front() == '(' && s.back() == ')') || (s.front() == '[' && s.back() == ']'))) {
    s = s.substr(1, s.size() - 2);
  }
  IndexKey key;
  for (auto part : split_args(s, arg)) {
    if (part.size() >= 2 && (part.front() == '"' || part.front() == '\'')) part = part.substr(1, part.size() - 2);
    key.push_back(part);
  }
  return key;
}

double parse_number_arg(const std::string& arg, std::string_view whole) {
  try {
    std::size_t used = 0;
    const double v = std::stod(arg, &used);
    if (used != arg.size()) throw std::invalid_argument(arg);
    return v;
  } catch (const std::exception&) {
    throw ParseError(std::string(whole), fmt::format("'{}' is not a number", arg));
  }
}

bool is_var_kind(std::string_view k) { return k == "var_at_most" || k == "var_at_least" || k == "var_equals"; }
bool is_param_kind(std::string_view k) {
  return k == "param_equals" || k == "param_at_most" || k == "param_at_least";
}
bool is_objective_kind(std::string_view k) {
  return k == "objective_at_most" || k == "objective_at_least" || k == "objective_equals";
}

void check_kind(const PromptCheck& c) {
  if (!is_var_kind(c.kind) && !is_param_kind(c.kind) && !is_objective_kind(c.kind) && c.kind != "fulfillment_at_least") {
    throw ParseError(c.text, fmt::format("unknown prompt check '{}'", c.kind));
  }
}

std::string describe(const PromptCheck& c) {
  if (!c.text.empty()) return c.text;
  if (is_objective_kind(c.kind)) return fmt::format("{}({})", c.kind, c.value);
  if (c.key.empty()) return fmt::format("{}({},{})", c.kind, c.target, c.value);
  return fmt::format("{}({},({}),{})", c.kind, c.target, format_key(c.key), c.value);
}

bool compare(std::string_view kind, double actual, double value, double tol) {
  if (kind.ends_with("at_most")) return actual <= value + tol;
  if (kind.ends_with("at_least")) return actual >= value - tol;
  return std::abs(actual - value) <= tol * std::max(1.0, std::abs(value));
}

}  // namespace

PromptCheck parse_prompt_check(std::string_view text) {
  PromptCheck c;
  c.text = trim(text);
  const auto open = c.text.find('(');
  if (open == std::string::npos || c.text.back() != ')') {
    throw ParseError(c.text, "expected name(arguments)");
  }
  c.kind = trim(std::string_view(c.text).substr(0, open));
  const auto args = split_args(std::string_view(c.text).substr(open + 1, c.text.size() - open - 2), c.text);
  check_kind(c);

  auto arity = [&](std::size_t lo, std::size_t hi) {
    if (args.size() < lo || args.size() > hi) {
      throw ParseError(c.text, fmt::format("{} takes {} to {} arguments", c.kind, lo, hi));
    }
  };
  if (is_var_kind(c.kind)) {
    arity(3, 3);
    c.target = args[0];
    c.key = parse_key_arg(args[1]);
  } else if (is_param_kind(c.kind)) {
    arity(2, 3);
    c.target = args[0];
    if (args.size() == 3) c.key = parse_key_arg(args[1]);
  } else if (is_objective_kind(c.kind)) {
    arity(1, 1);
  } else {
    arity(1, 2);
    if (args.size() == 2) c.target = args[0];
  }
  c.value = parse_number_arg(args.back(), c.text);
  return c;
}

PromptCheck prompt_check_from_json(const Json& j) {
  if (j.is_string()) return parse_prompt_check(j.get<std::string>());
  if (!j.is_object()) throw ParseError("", "prompt check must be a string or an object");
  PromptCheck c;
  c.kind = j.at("kind").get<std::string>();
  c.target = j.value("target", "");
  if (j.contains("key")) c.key = key_from_json(j.at("key"), "key");
  if (!j.contains("value") || !j.at("value").is_number()) throw ParseError("value", "expected a number");
  c.value = j.at("value").get<double>();
  check_kind(c);
  c.text = describe(c);
  return c;
}

std::optional<std::string> evaluate_check(const PromptCheck& check, const ModelState& state, const Instance& instance,
                                          const SolveResult& result, double tolerance) {
  const auto label = describe(check);
  if (is_param_kind(check.kind)) {
    const auto* p = state.find_parameter(check.target);
    if (!p) return fmt::format("{}: no parameter '{}'", label, check.target);
    double actual = 0.0;
    if (const auto* scalar = std::get_if<double>(&p->value); scalar && check.key.empty()) {
      actual = *scalar;
    } else if (const auto* keyed = std::get_if<KeyedValues>(&p->value)) {
      auto it = keyed->find(check.key);
      if (it == keyed->end()) return fmt::format("{}: no entry ({})", label, format_key(check.key));
      actual = it->second;
    } else {
      return fmt::format("{}: parameter '{}' has no numeric value at that key", label, check.target);
    }
    if (!compare(check.kind, actual, check.value, tolerance)) return fmt::format("{}: value is {}", label, actual);
    return std::nullopt;
  }

  if (!result.assignment) return fmt::format("{}: no incumbent", label);
  const auto& x = *result.assignment;

  if (is_var_kind(check.kind)) {
    const auto key = flat_key(check.target, check.key);
    auto it = x.find(key);
    if (it == x.end()) return fmt::format("{}: {} is not in the solution", label, key);
    if (!compare(check.kind, it->second, check.value, tolerance)) return fmt::format("{}: {} = {}", label, key, it->second);
    return std::nullopt;
  }
  if (is_objective_kind(check.kind)) {
    const double obj = result.objective.value_or(objective_value(instance, x));
    if (!compare(check.kind, obj, check.value, tolerance)) return fmt::format("{}: objective is {}", label, obj);
    return std::nullopt;
  }

  // fulfillment_at_least: share of rows (of one family, or all) the incumbent satisfies.
  std::size_t total = 0, met = 0;
  const auto prefix = check.target + "(";
  for (const auto& row : instance.rows) {
    if (!check.target.empty() && row.key.rfind(prefix, 0) != 0) continue;
    ++total;
    double lhs = 0.0;
    for (const auto& [col, coef] : row.terms) {
      auto it = x.find(instance.variables[col].key);
      if (it != x.end()) lhs += coef * it->second;
    }
    const double scale = tolerance * std::max(1.0, std::abs(row.rhs));
    const bool ok = row.sense == Sense::less_equal      ? lhs <= row.rhs + scale
                    : row.sense == Sense::greater_equal ? lhs >= row.rhs - scale
                                                        : std::abs(lhs - row.rhs) <= scale;
    met += ok ? 1 : 0;
  }
  if (total == 0) return fmt::format("{}: no rows to measure", label);
  const double share = double(met) / double(total);
  if (share + tolerance < check.value) return fmt::format("{}: {} of {} rows satisfied", label, met, total);
  return std::nullopt;
}

// --- scoring ---------------------------------------------------------------------------------

std::string_view to_string(FailureMode mode) {
  switch (mode) {
    case FailureMode::wrong_component: return "wrong_component";
    case FailureMode::invalid_patch: return "invalid_patch";
    case FailureMode::bad_update: return "bad_update";
    case FailureMode::no_incumbent: return "no_incumbent";
    case FailureMode::prompt_violation: return "prompt_violation";
    case FailureMode::missing_output: return "missing_output";
  }
  return "missing_output";
}

const std::vector<FailureMode>& all_failure_modes() {
  static const std::vector<FailureMode> modes{FailureMode::wrong_component, FailureMode::invalid_patch,
                                              FailureMode::bad_update,      FailureMode::no_incumbent,
                                              FailureMode::prompt_violation, FailureMode::missing_output};
  return modes;
}

Json case_score_to_json(const CaseScore& s) {
  Json modes = Json::array();
  for (auto m : all_failure_modes()) {
    if (s.failure_modes.count(m)) modes.push_back(to_string(m));
  }
  return {{"update_correct", s.update_correct},
          {"prompt_satisfied", s.prompt_satisfied},
          {"first_attempt_success", s.first_attempt_success},
          {"final_success", s.final_success},
          {"failure_modes", modes}};
}

CaseScore case_score_from_json(const Json& j) {
  CaseScore s;
  s.update_correct = j.at("update_correct").get<bool>();
  s.prompt_satisfied = j.at("prompt_satisfied").get<bool>();
  s.first_attempt_success = j.at("first_attempt_success").get<bool>();
  s.final_success = j.at("final_success").get<bool>();
  for (const auto& m : j.value("failure_modes", Json::array())) {
    bool found = false;
    for (auto mode : all_failure_modes()) {
      if (to_string(mode) == m.get<std::string>()) {
        s.failure_modes.insert(mode);
        found = true;
      }
    }
    if (!found) throw ParseError("failure_modes", fmt::format("unknown failure mode {}", m.dump()));
  }
  return s;
}

bool states_equivalent(const ModelState& a, const ModelState& b) {
  try {
    return instantiate(a) == instantiate(b);
  } catch (const Error&) {
    return false;
  }
}

namespace {

// The edit the run actually made, or the last one it managed to apply.
const ActionSet* effective_actions(const StepOutcome& outcome) {
  if (outcome.status == StepStatus::succeeded && outcome.applied_action_set) return &*outcome.applied_action_set;
  for (auto it = outcome.log.rbegin(); it != outcome.log.rend(); ++it) {
    if (it->applied && it->actions) return &*it->actions;
  }
  return nullptr;
}

// The last edit proposed at all, applied or not.
const ActionSet* proposed_actions(const StepOutcome& outcome) {
  if (const auto* a = effective_actions(outcome)) return a;
  for (auto it = outcome.log.rbegin(); it != outcome.log.rend(); ++it) {
    if (it->actions) return &*it->actions;
  }
  return nullptr;
}

std::optional<ModelState> apply_quietly(const ModelState& state, const ActionSet& actions) {
  try {
    return apply_action_set(state, actions).state;
  } catch (const Error&) {
    return std::nullopt;
  }
}

ModelState reference_state(const ModelState& before, const Reference& reference) {
  try {
    return apply_action_set(before, normalize_action_set(reference.actions, before)).state;
  } catch (const Error& e) {
    throw Error("InvalidReference", fmt::format("reference edit does not apply: {}", e.what()));
  }
}

std::set<std::string> targets_of(const ActionSet& actions, const ModelState& state) {
  std::set<std::string> out;
  for (const auto& p : actions.actions) {
    for (auto& t : patch_targets(p, &state)) out.insert(std::move(t));
  }
  return out;
}

bool checks_pass(const StepOutcome& outcome, const std::vector<PromptCheck>& checks) {
  if (outcome.status != StepStatus::succeeded || !outcome.solution || !outcome.solution->assignment) return false;
  if (checks.empty()) return true;
  const auto instance = instantiate(outcome.state);
  return std::all_of(checks.begin(), checks.end(), [&](const PromptCheck& c) {
    return !evaluate_check(c, outcome.state, instance, *outcome.solution).has_value();
  });
}

}  // namespace

std::set<FailureMode> classify_failure(const StepOutcome& outcome, const ModelState& before, const Reference* reference) {
  std::set<FailureMode> modes;
  for (const auto& log : outcome.log) {
    if (!log.failure) continue;
    switch (log.failure->stage) {
      case FailureStage::plan_parse:
      case FailureStage::normalize:
      case FailureStage::apply: modes.insert(FailureMode::invalid_patch); break;
      case FailureStage::solve: modes.insert(FailureMode::no_incumbent); break;
      case FailureStage::prompt_check: modes.insert(FailureMode::prompt_violation); break;
    }
  }
  if (outcome.status != StepStatus::succeeded) modes.insert(FailureMode::missing_output);
  if (!reference) return modes;

  const auto ref_state = reference_state(before, *reference);
  bool correct = false;
  if (const auto* applied = effective_actions(outcome)) {
    const auto state = apply_quietly(before, *applied);
    correct = state && states_equivalent(*state, ref_state);
    if (!correct) modes.insert(FailureMode::bad_update);
  }
  if (const auto* proposed = proposed_actions(outcome); proposed && !correct) {
    const auto ref_targets = targets_of(reference->actions, before);
    for (const auto& t : targets_of(*proposed, before)) {
      if (!ref_targets.count(t)) {
        modes.insert(FailureMode::wrong_component);
        break;
      }
    }
  }
  if (outcome.status == StepStatus::succeeded && !checks_pass(outcome, reference->checks)) {
    modes.insert(FailureMode::prompt_violation);
  }
  return modes;
}

CaseScore score_case(const StepOutcome& outcome, const ModelState& before, const Reference& reference) {
  CaseScore s;
  const auto ref_state = reference_state(before, reference);
  if (const auto* applied = effective_actions(outcome)) {
    const auto state = apply_quietly(before, *applied);
    s.update_correct = state && states_equivalent(*state, ref_state);
  }
  s.prompt_satisfied = s.update_correct && checks_pass(outcome, reference.checks);
  s.final_success = s.prompt_satisfied && outcome.status == StepStatus::succeeded;
  s.first_attempt_success = s.final_success && outcome.attempts_used == 1;
  s.failure_modes = classify_failure(outcome, before, &reference);
  return s;
}

}  // namespace reopt
