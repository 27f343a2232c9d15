#include <doctest.h>

#include "reopt/agents.hpp"
#include "reopt/scenario.hpp"
#include "support.hpp"

using namespace reopt;

namespace {

const char* kP1 = "Plant 1 is going into urgent maintenance for the next two days, so it cannot ship anything.";
const char* kP2 =
    "There is an unexpected shortage of trucks for deliveries from Plant 2 to Customer 2 this week. The maximum that "
    "can be shipped on this route is 5 units.";
const char* kP3 = "Customer 3 has placed an urgent order of 10 additional units on top of their normal demand.";

struct Toy {
  Scenario scenario = load_scenario("toy");
  SolveResult baseline = solve_with("builtin", instantiate(scenario.state));
  AgentContext context;

  Toy() {
    context.planner = mock_planner(MockScript::load(*scenario.mock_script));
    context.catalog_context = scenario.catalog_context();
  }
};

std::string plan_text(const Json& actions, const Json& hints = Json::object()) {
  Json sets = Json::array();
  for (const auto& a : actions) sets.push_back({{"actions", a}});
  return Json{{"edit_summary", "test"},
              {"affected_sets", Json::object()},
              {"relevant_components", Json::array()},
              {"candidate_action_sets", sets},
              {"planning_hints", hints}}
      .dump();
}

Json bound_patch(double value) {
  return Json::array({{{"op", "UPDATE_BOUND"},
                       {"target", "flows"},
                       {"scope", {{"index", {"P2", "C2"}}}},
                       {"update", {{"bound_type", "upper"}, {"value", value}}}}});
}

Patch supply_patch(double value) {
  return Patch{PatchOp::update_parameter, "supply", Json::object(), {{"key", {"P1"}}, {"value", value}}};
}

ActionSet set_of(std::vector<Patch> patches) { return ActionSet{std::move(patches)}; }

Reference reference_for(const ActionSet& actions, std::vector<std::string> checks) {
  Reference r{actions, {}};
  for (const auto& c : checks) r.checks.push_back(parse_prompt_check(c));
  return r;
}

}  // namespace

TEST_CASE("toy prompts through the closed loop") {
  Toy toy;
  REQUIRE(toy.baseline.objective);
  CHECK(*toy.baseline.objective == doctest::Approx(162.0).epsilon(1e-9));

  struct Case {
    const char* delta;
    double objective;
  };
  for (auto [delta, objective] : {Case{kP1, 174.0}, Case{kP2, 184.0}, Case{kP3, 192.0}}) {
    CAPTURE(delta);
    auto out = run_closed_loop(delta, toy.scenario.state, &toy.baseline, 2, {}, toy.context);
    REQUIRE(out.status == StepStatus::succeeded);
    CHECK(out.attempts_used == 1);
    CHECK(out.planner_calls == 1);
    CHECK(out.new_state_version == toy.scenario.state.version + 1);
    CHECK(*out.solution->objective == doctest::Approx(objective).epsilon(1e-9));
    REQUIRE(out.strategy);
    CHECK(out.strategy->solve_strategy == "warm");
    CHECK(out.strategy->rationale.find("reus") != std::string::npos);
    CHECK_FALSE(out.diff.empty());
  }

  auto p2 = run_closed_loop(kP2, toy.scenario.state, &toy.baseline, 2, {}, toy.context);
  CHECK(p2.solution->assignment->at("flows(P2,C2)") == doctest::Approx(5.0));
  auto p3 = run_closed_loop(kP3, toy.scenario.state, &toy.baseline, 2, {}, toy.context);
  // The additive form reaches the executor untouched.
  CHECK(p3.applied_action_set->actions.at(0).update.contains("delta"));
}

TEST_CASE("planner request carries the rendering and the delta") {
  Toy toy;
  std::vector<PlannerCall> calls;
  auto inner = toy.context.planner;
  toy.context.planner = [&](const PlannerCall& call) {
    calls.push_back(call);
    return inner(call);
  };
  auto out = plan(kP1, toy.scenario.state, nullptr, toy.context);
  REQUIRE(calls.size() == 1);
  CHECK(calls[0].request.user.find(kP1) != std::string::npos);
  CHECK(calls[0].request.user.find("supply_constraints") != std::string::npos);
  CHECK(calls[0].request.system.find("Return JSON only") != std::string::npos);
  REQUIRE(out.candidate_action_sets.size() == 1);
  const auto& p = out.candidate_action_sets[0].actions.at(0);
  CHECK(p.op == PatchOp::update_parameter);
  CHECK(p.target == "supply");
  CHECK(p.update.at("value") == 0.0);

  toy.context.planner = [](const PlannerCall&) { return std::string("not json at all"); };
  try {
    plan(kP1, toy.scenario.state, nullptr, toy.context);
    FAIL("expected PlannerFailure");
  } catch (const PlannerFailure& e) {
    CHECK(e.cause() == "MalformedDocument");
  }
}

TEST_CASE("one repair attempt fixes an injected failure") {
  Toy toy;
  std::vector<PlannerCall> calls;
  const auto good = plan_text(Json::array({bound_patch(5)}));
  toy.context.planner = [&](const PlannerCall& call) {
    calls.push_back(call);
    return call.attempt == 0 ? std::string("Sorry, I cannot produce JSON today.") : good;
  };
  auto out = run_closed_loop(kP2, toy.scenario.state, &toy.baseline, 2, {}, toy.context);
  REQUIRE(out.status == StepStatus::succeeded);
  CHECK(out.attempts_used == 2);
  REQUIRE(calls.size() == 2);
  CHECK(calls[1].request.user.rfind(std::string(repair_prelude()), 0) == 0);
  CHECK(calls[1].request.user.find("failure_stage: plan_parse") != std::string::npos);
  CHECK(*out.solution->objective == doctest::Approx(184.0));

  auto score = score_case(out, toy.scenario.state,
                          reference_for(action_set_from_json({{"actions", bound_patch(5)}}),
                                        {"var_at_most(flows,(P2,C2),5)"}));
  CHECK(score.update_correct);
  CHECK(score.prompt_satisfied);
  CHECK(score.final_success);
  CHECK_FALSE(score.first_attempt_success);
  CHECK(score.failure_modes == std::set<FailureMode>{FailureMode::invalid_patch});
}

TEST_CASE("always failing planner exhausts the budget and changes nothing") {
  Toy toy;
  for (std::size_t budget : {1u, 2u, 3u}) {
    std::size_t calls = 0;
    toy.context.planner = [&](const PlannerCall&) {
      ++calls;
      return std::string("{\"edit_summary\": 1}");
    };
    auto out = run_closed_loop(kP1, toy.scenario.state, &toy.baseline, budget, {}, toy.context);
    CHECK(calls == budget);
    CHECK(out.status == StepStatus::failed_budget_exhausted);
    CHECK(out.new_state_version == toy.scenario.state.version);
    CHECK(out.state == toy.scenario.state);
    CHECK(*out.solution->objective == *toy.baseline.objective);
    CHECK(*out.solution->assignment == *toy.baseline.assignment);
    REQUIRE(out.failure);
    CHECK(out.failure->stage == FailureStage::plan_parse);
    CHECK(out.failure->attempt_history.size() == budget - 1);
    CHECK(out.failure->attempt_history.size() < budget);
  }
  CHECK_THROWS_WITH_AS(run_closed_loop(kP1, toy.scenario.state, &toy.baseline, 0, {}, toy.context), doctest::Contains("budget"),
                       Error);
}

TEST_CASE("validator keeps the cheapest prompt-satisfying candidate") {
  Toy toy;
  auto choice = StrategyChoice{};
  // Capping the route at 5 costs 184; capping it at 2 costs more.
  auto cap5 = action_set_from_json({{"actions", bound_patch(5)}});
  auto cap2 = action_set_from_json({{"actions", bound_patch(2)}});
  auto v = validate_and_solve({cap2, cap5}, choice, toy.scenario.state, &toy.baseline, {}, toy.context);
  REQUIRE(v.ok);
  CHECK(v.best_index == 1);
  CHECK(*v.solution.objective == doctest::Approx(184.0));
  CHECK(*v.log[0].objective > 184.0 + 1e-6);

  // Equal objectives: the earlier candidate wins.
  auto tie = validate_and_solve({cap5, cap5}, choice, toy.scenario.state, &toy.baseline, {}, toy.context);
  CHECK(tie.best_index == 0);

  // A check only the dearer candidate passes.
  auto strict = parse_prompt_check("var_at_most(flows,(P2,C2),2)");
  auto checked = validate_and_solve({cap5, cap2}, choice, toy.scenario.state, &toy.baseline, {strict}, toy.context);
  REQUIRE(checked.ok);
  CHECK(checked.best_index == 1);
  CHECK(checked.log[0].outcome == "prompt_check");
}

TEST_CASE("validator failure records") {
  Toy toy;
  StrategyChoice choice;
  auto cap5 = action_set_from_json({{"actions", bound_patch(5)}});

  auto v = validate_and_solve({cap5}, choice, toy.scenario.state, &toy.baseline,
                              {parse_prompt_check("var_at_most(flows,(P2,C2),1)")}, toy.context);
  REQUIRE_FALSE(v.ok);
  CHECK(v.failure->stage == FailureStage::prompt_check);
  CHECK(v.failure->kind == "prompt_violation");
  CHECK(v.state == toy.scenario.state);

  // Total supply is 65; demanding 100 at C3 cannot be met.
  auto impossible = set_of({Patch{PatchOp::update_parameter, "demand", Json::object(), {{"key", {"C3"}}, {"value", 100}}}});
  auto inf = validate_and_solve({impossible}, choice, toy.scenario.state, &toy.baseline, {}, toy.context);
  REQUIRE_FALSE(inf.ok);
  CHECK(inf.failure->stage == FailureStage::solve);
  CHECK(inf.failure->kind == "no_incumbent");
  CHECK_FALSE(inf.failure->repair_instruction.empty());

  auto unknown = set_of({Patch{PatchOp::update_parameter, "nothing_here", Json::object(), {{"value", 1}}}});
  auto bad = validate_and_solve({unknown, impossible}, choice, toy.scenario.state, &toy.baseline, {}, toy.context);
  REQUIRE_FALSE(bad.ok);
  CHECK(bad.log[0].outcome == "apply");
  CHECK(bad.log[0].failure->kind == "UnknownTarget");
  // The record leads with the candidate that got furthest and names both.
  CHECK(bad.failure->stage == FailureStage::solve);
  CHECK(bad.failure->message.find("candidate 1") != std::string::npos);
  CHECK(bad.failure->message.find("candidate 2") != std::string::npos);

  auto none = validate_and_solve({}, choice, toy.scenario.state, &toy.baseline, {}, toy.context);
  CHECK_FALSE(none.ok);
  CHECK(none.failure->kind == "EmptyPlan");
}

TEST_CASE("strategy selection") {
  Toy toy;
  auto catalog = list_strategies(toy.scenario.state, &toy.baseline, toy.context.catalog_context);
  auto local = set_of({supply_patch(0)});
  PlannerOutput output;
  output.planning_hints = {{"edit_scope", "local"}};

  auto c = select_strategy({local}, output, toy.scenario.state, &toy.baseline, catalog, toy.context);
  CHECK(c.solve_strategy == "warm");
  CHECK(c.toolbox_plan == std::vector<std::string>{"direct_warm_start"});

  output.planning_hints["expected_reuse"] = "high";
  c = select_strategy({local}, output, toy.scenario.state, &toy.baseline, catalog, toy.context);
  CHECK(c.solve_strategy == "warm+tuned");

  PlannerOutput structural_out;
  structural_out.planning_hints = {{"edit_scope", "structural"}};
  auto structural = set_of({Patch{PatchOp::remove_constraint_family, "supply_constraints", {}, {}}});
  c = select_strategy({structural}, structural_out, toy.scenario.state, &toy.baseline, catalog, toy.context);
  CHECK((c.solve_strategy == "tuned" || c.solve_strategy == "scratch"));

  // Without a prior solution warm reuse is not legal.
  auto cold = list_strategies(toy.scenario.state, nullptr, toy.context.catalog_context);
  c = select_strategy({local}, output, toy.scenario.state, nullptr, cold, toy.context);
  CHECK(cold.allows(c.solve_strategy));
  CHECK(c.solve_strategy == "tuned");

  // LLM selector: legal answer kept, illegal answer coerced.
  auto ctx = toy.context;
  ctx.selector = [](const ChatRequest& r) {
    CHECK(r.system.find("exactly one solve strategy") != std::string::npos);
    return std::string("```json\n{\"solve_strategy\": \"tuned\", \"toolbox_plan\": [], \"rationale\": \"x\", "
                       "\"confidence\": 0.7}\n```");
  };
  c = select_strategy({local}, output, toy.scenario.state, &toy.baseline, catalog, ctx);
  CHECK(c.solve_strategy == "tuned");
  CHECK(c.confidence == doctest::Approx(0.7));
  CHECK_FALSE(c.warning);

  ctx.selector = [](const ChatRequest&) { return std::string(R"({"solve_strategy": "quantum_annealing"})"); };
  c = select_strategy({local}, output, toy.scenario.state, &toy.baseline, catalog, ctx);
  CHECK(c.solve_strategy == "scratch");
  CHECK(c.warning);

  ctx.selector = [](const ChatRequest&) { return std::string(R"({"solve_strategy": "warm", "confidence": 3})"); };
  c = select_strategy({local}, output, toy.scenario.state, &toy.baseline, catalog, ctx);
  CHECK(c.solve_strategy == "warm");
  CHECK_FALSE(c.confidence);

  ctx.selector = {};
  ctx.strategy_override = "scratch";
  c = select_strategy({local}, output, toy.scenario.state, &toy.baseline, catalog, ctx);
  CHECK(c.solve_strategy == "scratch");
  CHECK_FALSE(c.warning);
  ctx.strategy_override = "heuristic_warm";
  c = select_strategy({local}, output, toy.scenario.state, &toy.baseline, catalog, ctx);
  CHECK(c.solve_strategy == "scratch");
  CHECK(c.warning);
}

TEST_CASE("every strategy reaches the same toy optimum") {
  Toy toy;
  auto cap5 = action_set_from_json({{"actions", bound_patch(5)}});
  for (const auto& name : {"warm", "warm+tuned", "tuned", "scratch", "fix_and_release"}) {
    CAPTURE(name);
    StrategyChoice choice;
    choice.solve_strategy = name;
    auto v = validate_and_solve({cap5}, choice, toy.scenario.state, &toy.baseline, {}, toy.context);
    REQUIRE(v.ok);
    CHECK(*v.solution.objective == doctest::Approx(184.0).epsilon(1e-9));
  }
}

TEST_CASE("exam prompt with the heuristic warm start") {
  auto exam = load_scenario("exam");
  AgentContext context;
  context.catalog_context = exam.catalog_context();
  context.heuristic_config = exam.heuristic;
  context.solver_config.mip_gap_tolerance = 1e-9;
  auto baseline = solve_with("builtin", instantiate(exam.state), context.solver_config);
  REQUIRE(baseline.has_incumbent());

  auto cap = action_set_from_json(
      {{"actions", Json::array({{{"op", "UPDATE_PARAMETER"}, {"target", "day_cap"}, {"update", {{"key", {"2"}}, {"value", 200}}}}})}});
  StrategyChoice heuristic;
  heuristic.solve_strategy = "heuristic_warm";
  StrategyChoice scratch;
  auto a = validate_and_solve({cap}, heuristic, exam.state, &baseline, {}, context);
  auto b = validate_and_solve({cap}, scratch, exam.state, &baseline, {}, context);
  REQUIRE(a.ok);
  REQUIRE(b.ok);
  CHECK(*a.solution.objective == doctest::Approx(*b.solution.objective).epsilon(1e-9));
  auto instance = instantiate(a.state);
  CHECK(check_feasible(instance, *a.solution.assignment).empty());
}

TEST_CASE("prompt checks") {
  auto c = parse_prompt_check("var_at_most(flows,(P2,C2),5)");
  CHECK(c.kind == "var_at_most");
  CHECK(c.target == "flows");
  CHECK(c.key == IndexKey{"P2", "C2"});
  CHECK(c.value == 5.0);
  c = parse_prompt_check("param_equals(demand,C3,28)");
  CHECK(c.key == IndexKey{"C3"});
  c = parse_prompt_check(" fulfillment_at_least( 0.9 ) ");
  CHECK(c.target.empty());
  CHECK(c.value == 0.9);
  CHECK(prompt_check_from_json({{"kind", "objective_at_most"}, {"value", 200}}).value == 200);
  CHECK_THROWS_AS(parse_prompt_check("var_at_most(flows,5)"), ParseError);
  CHECK_THROWS_AS(parse_prompt_check("teleport(flows,1)"), ParseError);
  CHECK_THROWS_AS(parse_prompt_check("var_at_most(flows,(P2,C2),five)"), ParseError);
  CHECK_THROWS_AS(parse_prompt_check("var_at_most(flows,(P2,C2,5)"), ParseError);

  Toy toy;
  auto instance = instantiate(toy.scenario.state);
  auto eval = [&](const char* text) {
    return evaluate_check(parse_prompt_check(text), toy.scenario.state, instance, toy.baseline);
  };
  CHECK_FALSE(eval("var_equals(flows,(P2,C2),15)"));
  CHECK(eval("var_at_most(flows,(P2,C2),5)"));
  CHECK_FALSE(eval("var_at_least(flows,(P1,C1),12)"));
  CHECK_FALSE(eval("param_equals(supply,P2,45)"));
  CHECK(eval("param_equals(supply,P2,44)"));
  CHECK_FALSE(eval("objective_at_most(162)"));
  CHECK(eval("objective_at_least(163)"));
  CHECK_FALSE(eval("fulfillment_at_least(demand_constraints,1)"));
  CHECK(eval("var_at_most(flows,(P9,C9),1)"));

  // Half the demand rows met.
  auto partial = toy.baseline;
  (*partial.assignment)["flows(P2,C3)"] = 0.0;
  auto share = evaluate_check(parse_prompt_check("fulfillment_at_least(demand_constraints,0.7)"), toy.scenario.state,
                              instance, partial);
  REQUIRE(share);
  CHECK(share->find("2 of 3") != std::string::npos);
}

TEST_CASE("failure taxonomy") {
  Toy toy;
  const auto& before = toy.scenario.state;
  auto reference = reference_for(set_of({supply_patch(0)}), {"var_at_most(flows,(P1,C1),0)"});
  auto run = [&](std::function<std::string(const PlannerCall&)> planner, std::vector<PromptCheck> checks = {}) {
    auto ctx = toy.context;
    ctx.planner = std::move(planner);
    return run_closed_loop(kP1, before, &toy.baseline, 2, checks, ctx);
  };
  auto text = [](Json actions) { return [t = plan_text(actions)](const PlannerCall&) { return t; }; };
  const Json supply0 = Json::array(
      {Json::array({{{"op", "UPDATE_PARAMETER"}, {"target", "supply"}, {"update", {{"key", {"P1"}}, {"value", 0}}}}})});

  SUBCASE("success") {
    auto s = score_case(run(text(supply0)), before, reference);
    CHECK(s == CaseScore{true, true, true, true, {}});
  }
  SUBCASE("invalid patch and missing output") {
    auto s = score_case(run([](const PlannerCall&) { return std::string("garbage"); }), before, reference);
    CHECK(s.failure_modes == std::set<FailureMode>{FailureMode::invalid_patch, FailureMode::missing_output});
    CHECK(s == CaseScore{false, false, false, false, s.failure_modes});
  }
  SUBCASE("wrong component") {
    // Halving demand at C1 touches a component the reference never names.
    const Json wrong = Json::array(
        {Json::array({{{"op", "UPDATE_PARAMETER"}, {"target", "demand"}, {"update", {{"key", {"C1"}}, {"value", 6}}}}})});
    auto s = score_case(run(text(wrong)), before, reference);
    CHECK(s.failure_modes.count(FailureMode::wrong_component));
    CHECK(s.failure_modes.count(FailureMode::bad_update));
    CHECK_FALSE(s.update_correct);
    CHECK_FALSE(s.final_success);
  }
  SUBCASE("bad update on the right component") {
    const Json half = Json::array(
        {Json::array({{{"op", "UPDATE_PARAMETER"}, {"target", "supply"}, {"update", {{"key", {"P1"}}, {"value", 10}}}}})});
    auto s = score_case(run(text(half)), before, reference);
    CHECK(s.failure_modes.count(FailureMode::bad_update));
    CHECK_FALSE(s.failure_modes.count(FailureMode::wrong_component));
    // Succeeded in the loop, but the reference check fails too.
    CHECK(s.failure_modes.count(FailureMode::prompt_violation));
    CHECK_FALSE(s.update_correct);
  }
  SUBCASE("equivalent edit with a different operator") {
    const Json rhs = Json::array({Json::array(
        {{{"op", "UPDATE_CONSTRAINT_RHS"}, {"target", "supply_constraints"}, {"scope", {{"row", {"P1"}}}}, {"update", {{"value", 0}}}}})});
    auto s = score_case(run(text(rhs)), before, reference);
    CHECK(s.update_correct);
    CHECK(s.final_success);
  }
  SUBCASE("no incumbent") {
    // Correct edit, but a second requested change makes the model infeasible.
    auto impossible = reference_for(
        set_of({Patch{PatchOp::update_parameter, "demand", Json::object(), {{"key", {"C3"}}, {"value", 100}}}}), {});
    const Json edit = Json::array(
        {Json::array({{{"op", "UPDATE_PARAMETER"}, {"target", "demand"}, {"update", {{"key", {"C3"}}, {"value", 100}}}}})});
    auto out = run(text(edit));
    auto s = score_case(out, before, impossible);
    CHECK(s.update_correct);
    CHECK_FALSE(s.prompt_satisfied);
    CHECK(s.failure_modes == std::set<FailureMode>{FailureMode::no_incumbent, FailureMode::missing_output});
  }
  SUBCASE("prompt violation with a feasible incumbent") {
    // Reference derived with a fulfillment check the loop did not enforce.
    auto strict = reference_for(set_of({supply_patch(0)}), {"objective_at_most(170)"});
    auto s = score_case(run(text(supply0)), before, strict);
    CHECK(s.update_correct);
    CHECK_FALSE(s.prompt_satisfied);
    CHECK(s.failure_modes == std::set<FailureMode>{FailureMode::prompt_violation});
  }
  SUBCASE("classify without a reference") {
    auto out = run([](const PlannerCall&) { return std::string("garbage"); });
    CHECK(classify_failure(out, before, nullptr) ==
          std::set<FailureMode>{FailureMode::invalid_patch, FailureMode::missing_output});
  }
}

TEST_CASE("state equivalence ignores patch syntax") {
  Toy toy;
  auto a = apply_action_set(toy.scenario.state, set_of({supply_patch(0)})).state;
  auto rhs = apply_action_set(toy.scenario.state,
                              set_of({Patch{PatchOp::update_constraint_rhs, "supply_constraints", {{"row", {"P1"}}},
                                            {{"value", 0}}}}))
                 .state;
  CHECK_FALSE(a == rhs);
  CHECK(states_equivalent(a, rhs));
  CHECK_FALSE(states_equivalent(a, toy.scenario.state));
}

TEST_CASE("step outcome and score serialization") {
  Toy toy;
  auto out = run_closed_loop(kP1, toy.scenario.state, &toy.baseline, 2, {}, toy.context);
  auto j = step_outcome_to_json(out);
  CHECK(j["status"] == "succeeded");
  CHECK(j["objective"].get<double>() == doctest::Approx(174.0));
  CHECK(j["attempts_used"] == 1);
  CHECK(j["strategy"]["solve_strategy"] == "warm");
  CHECK(j["candidates"].size() == 1);
  CHECK(j["diff"]["entries"].size() == 1);

  CaseScore s{true, false, false, false, {FailureMode::prompt_violation, FailureMode::missing_output}};
  CHECK(case_score_from_json(case_score_to_json(s)) == s);
  auto choice = StrategyChoice{"warm", {"direct_warm_start"}, "r", 0.5, std::nullopt};
  CHECK(strategy_from_json(strategy_to_json(choice)) == choice);
}
