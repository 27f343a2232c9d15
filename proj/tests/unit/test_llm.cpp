#include <doctest.h>

#include <httplib.h>

#include <thread>

#include "reopt/llm.hpp"
#include "support.hpp"

using namespace reopt;

namespace {

FailureRecord sample_failure() {
  FailureRecord r;
  r.stage = FailureStage::apply;
  r.kind = "UnknownTarget";
  r.message = "patch 0: no component named 'suply'";
  r.repair_instruction = "Target components that exist.";
  r.attempt_history = {{FailureStage::plan_parse, "MalformedDocument", "byte 3"}};
  return r;
}

GatewayConfig fast_config() {
  GatewayConfig c;
  c.api_key = "test-key";
  c.base_url = "http://127.0.0.1:9/v1";
  c.backoff = std::chrono::milliseconds(1);
  return c;
}

std::string completion(const std::string& content) {
  return Json{{"choices", Json::array({{{"message", {{"role", "assistant"}, {"content", content}}}}})}}.dump();
}

}  // namespace

TEST_CASE("planner prompt assembly") {
  const auto state = testing::toy_state();
  const auto render = render_for_planner(state);
  const std::string delta = "Plant 1 is going into urgent maintenance for the next two days, so it cannot ship anything.";

  auto a = assemble_planner_prompt(render, delta, nullptr, "", patch_schema_text());
  auto b = assemble_planner_prompt(render, delta, nullptr, "", patch_schema_text());
  CHECK(a == b);
  CHECK(a.system.rfind("You are a reoptimization planner.", 0) == 0);
  CHECK(a.system.find("Return JSON only") != std::string::npos);
  CHECK(a.system.find("UPDATE_CONSTRAINT_RHS_BY_PATTERN") != std::string::npos);
  CHECK(a.user.find(delta) != std::string::npos);
  CHECK(a.user.find(render) != std::string::npos);
  CHECK(a.user.find(std::string(repair_prelude())) == std::string::npos);
  CHECK(a.temperature == 0.0);
  CHECK_NOTHROW(check_request(a));

  auto framed = assemble_planner_prompt(render, delta, nullptr, "Exam blocks are scheduled into slots.", "");
  CHECK(framed.system.find("Exam blocks are scheduled into slots.") != std::string::npos);
  CHECK(framed.system.find("Exam blocks") < framed.system.find("Allowed patch operators"));

  const auto failure = sample_failure();
  auto r = assemble_planner_prompt(render, delta, &failure, "", patch_schema_text());
  CHECK(r.user.rfind("This is a fresh repair attempt", 0) == 0);
  CHECK(r.user.find("- failure_stage: apply") != std::string::npos);
  CHECK(r.user.find("- failure_kind: UnknownTarget") != std::string::npos);
  CHECK(r.user.find("- repair_instruction: Target components that exist.") != std::string::npos);
  CHECK(r.user.find("attempt 1: plan_parse / MalformedDocument") != std::string::npos);
  CHECK(r.user.find(delta) != std::string::npos);
  CHECK(r.system == a.system);
}

TEST_CASE("selector prompt assembly") {
  const auto state = testing::toy_state();
  SolveResult prior;
  prior.assignment = Assignment{{"flows(P1,C1)", 12.0}};
  auto catalog = list_strategies(state, &prior, {});
  ActionSet set{{Patch{PatchOp::update_bound, "flows", {{"index", {"P2", "C2"}}}, {{"bound_type", "upper"}, {"value", 5}}}}};

  auto a = assemble_selector_prompt({set}, catalog, Json::object(), true);
  CHECK(a == assemble_selector_prompt({set}, catalog, Json::object(), true));
  CHECK(a.system.rfind("You choose the fastest safe reoptimization solve strategy.", 0) == 0);
  CHECK(a.user.find("- warm:") != std::string::npos);
  CHECK(a.user.find("- scratch:") != std::string::npos);
  CHECK(a.user.find("- tuned:") == std::string::npos);
  CHECK(a.user.find("Planning hints") == std::string::npos);
  CHECK(a.user.find("Prior solution available: yes") != std::string::npos);
  CHECK(a.user.find("solve_strategy") != std::string::npos);
  CHECK(a.user.find("UPDATE_BOUND") != std::string::npos);

  auto h = assemble_selector_prompt({set}, catalog, {{"expected_reuse", "high"}}, true);
  CHECK(h.user.find("Planning hints") != std::string::npos);
  CHECK(h.user.find("expected_reuse") != std::string::npos);

  StrategyCatalog empty;
  CHECK_THROWS_AS(assemble_selector_prompt({set}, empty, Json::object(), false), Error);
}

TEST_CASE("chat_complete through a scripted transport") {
  ChatRequest req;
  req.system = "s";
  req.user = "u";
  auto config = fast_config();

  std::vector<Json> bodies;
  std::vector<std::string> auth;
  auto echo = [&](const std::string& url, const std::map<std::string, std::string>& headers, const std::string& body,
                  double) {
    CHECK(url == "http://127.0.0.1:9/v1/chat/completions");
    bodies.push_back(Json::parse(body));
    auth.push_back(headers.at("Authorization"));
    return HttpReply{200, completion("{\"ok\": true}")};
  };
  CHECK(chat_complete(req, config, echo) == "{\"ok\": true}");
  REQUIRE(bodies.size() == 1);
  CHECK(bodies[0]["temperature"] == 0.0);
  CHECK(bodies[0]["model"] == config.model);
  CHECK(bodies[0]["messages"][0]["role"] == "system");
  CHECK(auth[0] == "Bearer test-key");

  SUBCASE("transient faults are retried") {
    int calls = 0;
    auto flaky = [&](const std::string&, const std::map<std::string, std::string>&, const std::string&, double) {
      ++calls;
      if (calls == 1) throw Error("TransportError", "connection reset");
      if (calls == 2) return HttpReply{503, "busy"};
      return HttpReply{200, completion("done")};
    };
    CHECK(chat_complete(req, config, flaky) == "done");
    CHECK(calls == 3);
  }
  SUBCASE("auth failures are not retried") {
    int calls = 0;
    auto denied = [&](const std::string&, const std::map<std::string, std::string>&, const std::string&, double) {
      ++calls;
      return HttpReply{401, "nope"};
    };
    CHECK_THROWS_WITH_AS(chat_complete(req, config, denied), doctest::Contains("401"), Error);
    CHECK(calls == 1);
  }
  SUBCASE("missing credential fails before any call") {
    int calls = 0;
    auto count = [&](const std::string&, const std::map<std::string, std::string>&, const std::string&, double) {
      ++calls;
      return HttpReply{200, completion("x")};
    };
    config.api_key.clear();
    try {
      chat_complete(req, config, count);
      FAIL("expected AuthError");
    } catch (const Error& e) {
      CHECK(e.code() == "AuthError");
    }
    CHECK(calls == 0);
  }
  SUBCASE("timeouts keep their code after retries") {
    int calls = 0;
    auto slow = [&](const std::string&, const std::map<std::string, std::string>&, const std::string&, double) -> HttpReply {
      ++calls;
      throw Error("Timeout", "no reply");
    };
    try {
      chat_complete(req, config, slow);
      FAIL("expected Timeout");
    } catch (const Error& e) {
      CHECK(e.code() == "Timeout");
    }
    CHECK(calls == config.max_retries + 1);
  }
  SUBCASE("other statuses and odd bodies") {
    auto teapot = [](const std::string&, const std::map<std::string, std::string>&, const std::string&, double) {
      return HttpReply{418, "teapot"};
    };
    CHECK_THROWS_WITH_AS(chat_complete(req, config, teapot), doctest::Contains("418"), Error);
    auto odd = [](const std::string&, const std::map<std::string, std::string>&, const std::string&, double) {
      return HttpReply{200, "{\"choices\": []}"};
    };
    CHECK_THROWS_AS(chat_complete(req, config, odd), Error);
  }
  SUBCASE("invalid requests are rejected") {
    req.user.clear();
    CHECK_THROWS_AS(chat_complete(req, config, echo), Error);
    req.user = "u";
    req.timeout = 0;
    CHECK_THROWS_AS(chat_complete(req, config, echo), Error);
  }
}

TEST_CASE("default transport against a local endpoint") {
  httplib::Server server;
  server.Post("/v1/chat/completions", [](const httplib::Request& req, httplib::Response& res) {
    auto body = Json::parse(req.body);
    res.set_content(completion("echo:" + body["messages"][1]["content"].get<std::string>()), "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread thread([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  auto config = fast_config();
  config.base_url = "http://127.0.0.1:" + std::to_string(port) + "/v1";
  ChatRequest req;
  req.system = "s";
  req.user = "hello";
  req.timeout = 5;
  CHECK(chat_complete(req, config) == "echo:hello");
  server.stop();
  thread.join();

  // Nothing listens any more.
  try {
    chat_complete(req, config);
    FAIL("expected a transport error");
  } catch (const Error& e) {
    CHECK(e.code() == "TransportError");
  }
}

TEST_CASE("mock scripts") {
  auto script = MockScript::from_json(Json::parse(R"({"entries": [
    {"match": {"contains": "PLANT 1"}, "responses": ["first", {"second": true}]},
    {"match": {"regex": "C[0-9]+"}, "responses": ["customer"]},
    {"match": {}, "responses": ["anything"]}
  ]})"));
  CHECK(script.respond("plant 1 is down", 0) == "first");
  CHECK(Json::parse(*script.respond("plant 1 is down", 1)) == Json{{"second", true}});
  CHECK(Json::parse(*script.respond("plant 1 is down", 7)) == Json{{"second", true}});
  CHECK(script.respond("ship to C3", 0) == "customer");
  CHECK(script.respond("hello", 0) == "anything");
  CHECK(script.respond("hello", 0) == script.respond("hello", 0));

  auto strict = MockScript::from_json(Json::parse(R"([{"match": {"contains": "x"}, "responses": ["y"]}])"));
  CHECK_FALSE(strict.respond("nothing", 0));
  CHECK_THROWS_AS(MockScript::from_json(Json::parse(R"({"entries": [{"responses": []}]})")), ParseError);
  CHECK_THROWS(MockScript::from_json(Json::parse(R"({"entries": [{"match": {"regex": "("}, "responses": ["a"]}]})")));

  auto toy = MockScript::load(testing::source_path("scenarios/toy/toy_mock.json"));
  CHECK(toy.entries().size() == 3);
}

TEST_CASE("json extraction from model replies") {
  CHECK(extract_json("```json\n{\"a\": 1}\n```") == Json{{"a", 1}});
  CHECK(extract_json("Here you go: {\"a\": {\"b\": \"}\"}} hope it helps") == Json{{"a", {{"b", "}"}}}});
  CHECK_THROWS_WITH_AS(extract_json("no object here"), doctest::Contains(""), Error);
  try {
    extract_json("just prose");
  } catch (const Error& e) {
    CHECK(e.code() == "NoObjectFound");
  }
  for (const auto& doc : {Json{{"x", Json::array({1, 2, 3})}}, Json{{"nested", {{"k", "v"}}}}, Json::object()}) {
    CHECK(extract_json(doc.dump()) == doc);
    CHECK(extract_json(doc.dump(2)) == doc);
  }
}

TEST_CASE("failure record codec") {
  auto r = sample_failure();
  auto j = failure_to_json(r);
  CHECK(j["failure_stage"] == "apply");
  CHECK(j["attempt_history"].size() == 1);
  CHECK(failure_from_json(j) == r);
  CHECK_THROWS_AS(parse_failure_stage("later"), ParseError);
}

TEST_CASE("gateway configuration from the environment") {
  setenv("REOPT_LLM_BASE_URL", "http://example.invalid/v9", 1);
  setenv("REOPT_LLM_API_KEY", "k", 1);
  setenv("REOPT_LLM_MODEL", "m", 1);
  auto c = GatewayConfig::from_env();
  CHECK(c.base_url == "http://example.invalid/v9");
  CHECK(c.api_key == "k");
  CHECK(c.model == "m");
  unsetenv("REOPT_LLM_BASE_URL");
  unsetenv("REOPT_LLM_API_KEY");
  unsetenv("REOPT_LLM_MODEL");
}
