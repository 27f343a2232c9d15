#include <doctest.h>
#include <httplib.h>

#include <atomic>
#include <condition_variable>
#include <fstream>
#include <random>
#include <thread>

#include <fmt/format.h>

#include "reopt/service.hpp"
#include "support.hpp"

using namespace reopt;
namespace fs = std::filesystem;

namespace {

const char* kP2 =
    "There is an unexpected shortage of trucks for deliveries from Plant 2 to Customer 2 this week. The maximum that "
    "can be shipped on this route is 5 units.";
const char* kP3 = "Customer 3 has placed an urgent order of 10 additional units on top of their normal demand.";

struct TempDir {
  fs::path path;
  TempDir() {
    std::random_device rd;
    path = fs::temp_directory_path() / ("reopt-test-" + std::to_string(rd()) + std::to_string(rd()));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

// Service bound to an ephemeral local port, torn down with the object.
struct LiveServer {
  SessionService service;
  httplib::Server server;
  int port = 0;
  std::thread thread;

  explicit LiveServer(ServiceOptions options) : service(std::move(options)) {
    service.restore_all();
    service.install(server);
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~LiveServer() {
    server.stop();
    thread.join();
  }
  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port);
    c.set_read_timeout(30, 0);
    return c;
  }
};

Json body_of(const httplib::Result& r) {
  REQUIRE(r);
  return Json::parse(r->body);
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << text;
}

}  // namespace

TEST_CASE("session store records") {
  TempDir dir;
  SessionStore store(dir.path);
  store.append("s1", {{"type", "create"}, {"n", 1}});
  store.append("s1", {{"type", "prompt"}, {"n", 2}});
  const auto log = dir.path / "s1" / "events.log";
  const auto text = read_file(log);

  SUBCASE("round trip with checksums") {
    const auto loaded = store.load("s1");
    CHECK_FALSE(loaded.truncated);
    REQUIRE(loaded.events.size() == 2);
    CHECK(loaded.events[1]["n"] == 2);
    const auto first = text.substr(0, text.find('\n'));
    const auto payload = first.substr(9);
    CHECK(first.substr(0, 8) == fmt::format("{:08x}", record_checksum(payload)));
    CHECK(record_checksum("123456789") == 0xCBF43926u);  // standard CRC-32 check value
    CHECK(store.sessions() == std::vector<std::string>{"s1"});
  }

  SUBCASE("a torn final record is dropped and repaired") {
    write_file(log, text + R"(0badbeef {"type":"pro)");
    auto loaded = store.load("s1");
    CHECK(loaded.truncated);
    CHECK(loaded.events.size() == 2);
    store.drop_partial_tail("s1");
    CHECK(read_file(log) == text);
    store.append("s1", {{"n", 3}});
    loaded = store.load("s1");
    CHECK_FALSE(loaded.truncated);
    CHECK(loaded.events.size() == 3);
  }

  SUBCASE("a complete record with a bad checksum is corruption") {
    auto bad = text;
    bad[bad.find("\"n\":2") + 4] = '7';
    write_file(log, bad);
    CHECK_THROWS_WITH_AS(store.load("s1"), doctest::Contains("checksum mismatch"), Error);
    try {
      store.load("s1");
    } catch (const Error& e) {
      CHECK(e.code() == "StoreCorruption");
    }
  }

  SUBCASE("a complete record with broken JSON is corruption") {
    const std::string payload = "{\"type\":";
    write_file(log, text + fmt::format("{:08x} {}\n", record_checksum(payload), payload));
    try {
      store.load("s1");
      FAIL("expected StoreCorruption");
    } catch (const Error& e) {
      CHECK(e.code() == "StoreCorruption");
    }
  }

  SUBCASE("unknown and hostile ids") {
    for (const std::string id : {"nope", "../etc", ""}) {
      try {
        store.load(id);
        FAIL("expected UnknownSession");
      } catch (const Error& e) {
        CHECK(e.code() == "UnknownSession");
      }
    }
  }
}

TEST_CASE("HTTP session round trip and restore") {
  TempDir dir;
  ServiceOptions options;
  options.store = dir.path;

  std::string id;
  Json summary_before;
  Json diff_before;
  {
    LiveServer live(options);
    auto cli = live.client();
    CHECK(body_of(cli.Get("/health"))["status"] == "ok");

    auto created = cli.Post("/sessions", Json{{"scenario", "toy"}}.dump(), "application/json");
    REQUIRE(created);
    CHECK(created->status == 201);
    const auto c = Json::parse(created->body);
    id = c["session_id"].get<std::string>();
    CHECK(c["objective"].get<double>() == doctest::Approx(162.0).epsilon(1e-9));
    const auto v0 = c["version"].get<std::uint64_t>();

    auto step = cli.Post(("/sessions/" + id + "/prompts").c_str(), Json{{"delta", kP2}}.dump(), "application/json");
    REQUIRE(step);
    CHECK(step->status == 200);
    const auto s = Json::parse(step->body);
    CHECK(s["status"] == "succeeded");
    CHECK(s["objective"].get<double>() == doctest::Approx(184.0).epsilon(1e-9));
    CHECK(s["new_state_version"] == v0 + 1);
    CHECK(s["from_version"] == v0);
    CHECK_FALSE(s["solution"]["assignment"].is_null());

    summary_before = body_of(cli.Get(("/sessions/" + id).c_str()));
    CHECK(summary_before["version"] == v0 + 1);
    diff_before = body_of(cli.Get(fmt::format("/sessions/{}/diff/{}", id, v0 + 1).c_str()));
    CHECK(diff_before["text"].get<std::string>().find("flows") != std::string::npos);
    const auto hist = body_of(cli.Get(("/sessions/" + id + "/history").c_str()));
    REQUIRE(hist["events"].size() == 2);
    CHECK(hist["events"][0]["type"] == "create");
    CHECK(hist["events"][1]["type"] == "prompt");
    CHECK(body_of(cli.Get("/sessions"))["sessions"].size() == 1);
  }

  // A fresh process on the same store.
  LiveServer again(options);
  auto cli = again.client();
  const auto summary_after = body_of(cli.Get(("/sessions/" + id).c_str()));
  CHECK(summary_after["version"] == summary_before["version"]);
  CHECK(summary_after["objective"] == summary_before["objective"]);
  CHECK(summary_after["state"] == summary_before["state"]);
  CHECK(summary_after["solution"] == summary_before["solution"]);
  const auto v = summary_after["version"].get<std::uint64_t>();
  CHECK(body_of(cli.Get(fmt::format("/sessions/{}/diff/{}", id, v).c_str())) == diff_before);

  // The restored session keeps going from where it stopped.
  const auto next = body_of(cli.Post(("/sessions/" + id + "/prompts").c_str(), Json{{"delta", kP3}}.dump(),
                                     "application/json"));
  CHECK(next["status"] == "succeeded");
  CHECK(next["from_version"] == v);
  CHECK(next["new_state_version"] == v + 1);
  // P3 on top of P2: both changes are live, so the cost is above either alone.
  CHECK(next["objective"].get<double>() > 192.0);
}

TEST_CASE("restore refuses a log whose diff no longer matches") {
  TempDir dir;
  ServiceOptions options;
  options.store = dir.path;
  std::string id;
  {
    SessionService service(options);
    id = service.create({{"scenario", "toy"}})["session_id"].get<std::string>();
    CHECK(service.prompt(id, {{"delta", kP2}})["status"] == "succeeded");
  }
  const auto log = dir.path / id / "events.log";
  SessionStore store(dir.path);
  auto events = store.load(id).events;
  events[1]["outcome"]["diff"] = diff_to_json(StateDiff{0, 1, {}});
  fs::remove(log);
  for (const auto& e : events) store.append(id, e);

  SessionService service(options);
  try {
    service.restore(id);
    FAIL("expected StoreCorruption");
  } catch (const Error& e) {
    CHECK(e.code() == "StoreCorruption");
  }
}

TEST_CASE("restore tolerates a torn final record") {
  TempDir dir;
  ServiceOptions options;
  options.store = dir.path;
  std::string id;
  Json before;
  {
    SessionService service(options);
    id = service.create({{"scenario", "toy"}})["session_id"].get<std::string>();
    service.prompt(id, {{"delta", kP2}});
    before = service.summary(id);
  }
  const auto log = dir.path / id / "events.log";
  const auto intact = read_file(log);
  write_file(log, intact + "1234abcd {\"type\":\"prompt\",\"seq\"");

  SessionService service(options);
  CHECK(service.restore_all() == std::vector<std::string>{id});
  const auto after = service.summary(id);
  CHECK(after["version"] == before["version"]);
  CHECK(after["objective"] == before["objective"]);
  CHECK(after["restored_truncated"] == true);
  CHECK(read_file(log) == intact);
}

TEST_CASE("HTTP error mapping") {
  TempDir dir;
  ServiceOptions options;
  options.store = dir.path;
  LiveServer live(options);
  auto cli = live.client();

  SUBCASE("unknown session and version give 404") {
    auto r = cli.Get("/sessions/doesnotexist");
    REQUIRE(r);
    CHECK(r->status == 404);
    CHECK(Json::parse(r->body)["error"] == "UnknownSession");
    r = cli.Post("/sessions/doesnotexist/prompts", Json{{"delta", "x"}}.dump(), "application/json");
    REQUIRE(r);
    CHECK(r->status == 404);

    const auto id = body_of(cli.Post("/sessions", Json{{"scenario", "toy"}}.dump(), "application/json"))["session_id"]
                        .get<std::string>();
    r = cli.Get(fmt::format("/sessions/{}/diff/99", id).c_str());
    REQUIRE(r);
    CHECK(r->status == 404);
    CHECK(Json::parse(r->body)["error"] == "UnknownVersion");
  }

  SUBCASE("malformed bodies give 422 with per-field detail") {
    auto r = cli.Post("/sessions", Json{{"planner", "oracle"}, {"budget", 0}}.dump(), "application/json");
    REQUIRE(r);
    CHECK(r->status == 422);
    auto j = Json::parse(r->body);
    CHECK(j["error"] == "InvalidRequest");
    CHECK(j["fields"].contains("scenario"));
    CHECK(j["fields"].contains("planner"));
    CHECK(j["fields"].contains("budget"));

    r = cli.Post("/sessions", "{not json", "application/json");
    REQUIRE(r);
    CHECK(r->status == 422);
    CHECK(Json::parse(r->body)["fields"].contains("body"));

    r = cli.Post("/sessions", Json{{"scenario", "no-such-scenario"}}.dump(), "application/json");
    REQUIRE(r);
    CHECK(r->status == 422);
    CHECK(Json::parse(r->body)["fields"].contains("scenario"));

    const auto id = body_of(cli.Post("/sessions", Json{{"scenario", "toy"}}.dump(), "application/json"))["session_id"]
                        .get<std::string>();
    r = cli.Post(("/sessions/" + id + "/prompts").c_str(),
                 Json{{"budget", "two"}, {"checks", {"var_at_most(flows"}}}.dump(), "application/json");
    REQUIRE(r);
    CHECK(r->status == 422);
    j = Json::parse(r->body);
    CHECK(j["fields"].contains("delta"));
    CHECK(j["fields"].contains("budget"));
    CHECK(j["fields"].contains("checks/0"));
    // Nothing was recorded.
    CHECK(body_of(cli.Get(("/sessions/" + id + "/history").c_str()))["events"].size() == 1);
  }

  SUBCASE("a second prompt while one is in flight gives 409") {
    const auto id = body_of(cli.Post("/sessions", Json{{"scenario", "toy"}}.dump(), "application/json"))["session_id"]
                        .get<std::string>();
    auto session = live.service.find(id);
    std::mutex m;
    std::condition_variable cv;
    bool entered = false;
    bool release = false;
    auto inner = session->context.planner;
    session->context.planner = [&, inner](const PlannerCall& call) {
      {
        std::unique_lock lock(m);
        entered = true;
        cv.notify_all();
        cv.wait(lock, [&] { return release; });
      }
      return inner(call);
    };

    std::thread first([&] {
      auto c = live.client();
      auto r = c.Post(("/sessions/" + id + "/prompts").c_str(), Json{{"delta", kP2}}.dump(), "application/json");
      REQUIRE(r);
      CHECK(r->status == 200);
    });
    {
      std::unique_lock lock(m);
      cv.wait(lock, [&] { return entered; });
    }
    auto r = cli.Post(("/sessions/" + id + "/prompts").c_str(), Json{{"delta", kP3}}.dump(), "application/json");
    REQUIRE(r);
    CHECK(r->status == 409);
    CHECK(Json::parse(r->body)["error"] == "Busy");
    // Reads still work while the write is held.
    auto s = cli.Get(("/sessions/" + id).c_str());
    REQUIRE(s);
    CHECK(s->status == 200);
    {
      std::lock_guard lock(m);
      release = true;
    }
    cv.notify_all();
    first.join();
    CHECK(body_of(cli.Get(("/sessions/" + id).c_str()))["objective"].get<double>() ==
          doctest::Approx(184.0).epsilon(1e-9));
  }

  SUBCASE("unmatched routes") {
    auto r = cli.Get("/nowhere");
    REQUIRE(r);
    CHECK(r->status == 404);
  }
}

TEST_CASE("failed prompts leave the session version alone") {
  TempDir dir;
  ServiceOptions options;
  options.store = dir.path;
  SessionService service(options);
  const auto c = service.create({{"scenario", "toy"}});
  const auto id = c["session_id"].get<std::string>();
  const auto out = service.prompt(id, {{"delta", "Something nobody scripted."}, {"budget", 2}});
  CHECK(out["status"] == "failed_budget_exhausted");
  CHECK(out["attempts_used"] == 2);
  const auto s = service.summary(id);
  CHECK(s["version"] == c["version"]);
  CHECK(s["objective"] == c["objective"]);
  CHECK(service.history(id)["events"].size() == 2);  // the failure is still on record
}

TEST_CASE("catalog replay on the toy scenario") {
  const auto scenario = load_scenario("toy");
  const auto catalog = load_catalog(testing::source_path("scenarios/toy/toy_catalog.json"));
  REQUIRE(catalog.size() == 3);

  SUBCASE("patch variant") {
    const auto report = replay(scenario, catalog, {});
    REQUIRE(report.rows.size() == 3);
    const double expected[] = {174.0, 184.0, 192.0};
    for (std::size_t i = 0; i < 3; ++i) {
      const auto& row = report.rows[i];
      CHECK(row.result.status == "succeeded");
      REQUIRE(row.result.objective);
      CHECK(*row.result.objective == doctest::Approx(expected[i]).epsilon(1e-9));
      REQUIRE(row.reference_objective);
      CHECK(*row.delta_objective == doctest::Approx(0.0));
      CHECK(*row.gap_percent == doctest::Approx(0.0));
      CHECK_FALSE(row.missing_reference);
      REQUIRE(row.result.score);
      CHECK(row.result.score->final_success);
      CHECK(row.result.score->first_attempt_success);
    }
    const auto& agg = report.aggregates.at("patch");
    CHECK(agg.cases == 3);
    CHECK(agg.final_success == 3);
    CHECK(agg.first_attempt_success == 3);
    CHECK(agg.nested());

    const auto csv = report_to_csv(report);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
    CHECK(report_to_json(report)["rows"].size() == 3);
    CHECK(report_to_text(report).find("P2") != std::string::npos);
  }

  SUBCASE("patch-no-selector forces scratch") {
    const auto report = replay(scenario, catalog, {RunOptions{}, "patch-no-selector"});
    for (const auto& row : report.rows) {
      CHECK(row.result.strategy == "scratch");
      CHECK(row.result.status == "succeeded");
    }
    CHECK(report.aggregates.at("patch-no-selector").final_success == 3);
  }

  SUBCASE("unknown variant") { CHECK_THROWS_AS(replay(scenario, catalog, {RunOptions{}, "oracle"}), Error); }
}

TEST_CASE("catalog replay on the exam scenario") {
  const auto scenario = load_scenario("exam");
  const auto catalog = load_catalog(testing::source_path("scenarios/exam/exam_catalog.json"));
  const auto report = replay(scenario, catalog, {});
  REQUIRE(report.rows.size() == catalog.size());
  for (const auto& row : report.rows) {
    CHECK_MESSAGE(row.result.status == "succeeded", row.result.prompt_id, " ", row.result.error);
    REQUIRE(row.result.score);
    CHECK(row.result.score->final_success);
    REQUIRE(row.gap_percent);
    CHECK(*row.gap_percent == doctest::Approx(0.0).epsilon(1e-6));
  }
  CHECK(report.aggregates.at("patch").nested());
}

TEST_CASE("report arithmetic") {
  auto ok = [](std::string id, double obj) {
    CaseResult r{"toy", std::move(id), "patch", "succeeded", "warm", obj};
    r.score = CaseScore{true, true, true, true, {}};
    return r;
  };
  std::vector<CaseResult> results{ok("A", 110.0), ok("B", 0.5)};

  CaseResult failed{"toy", "C", "patch", "failed", "warm"};
  failed.score = CaseScore{true, false, false, false, {FailureMode::no_incumbent}};
  results.push_back(failed);

  CaseResult unscored = ok("D", 5.0);
  unscored.score.reset();
  results.push_back(unscored);

  CaseResult unreferenced = ok("E", 5.0);
  results.push_back(unreferenced);

  const std::map<std::string, double> refs{{"toy/A", 100.0}, {"toy/B", 0.25}, {"toy/C", 10.0}, {"toy/D", 5.0}};
  const auto report = compute_report(results, refs);
  REQUIRE(report.rows.size() == 5);
  CHECK(*report.rows[0].delta_objective == doctest::Approx(10.0));
  CHECK(*report.rows[0].gap_percent == doctest::Approx(10.0));
  // |ref| < 1 uses a unit denominator.
  CHECK(*report.rows[1].gap_percent == doctest::Approx(25.0));
  CHECK_FALSE(report.rows[2].delta_objective);
  CHECK(report.rows[3].missing_reference);
  CHECK(report.rows[4].missing_reference);

  const auto& agg = report.aggregates.at("patch");
  CHECK(agg.cases == 3);
  CHECK(agg.update_correct == 3);
  CHECK(agg.prompt_satisfied == 2);
  CHECK(agg.final_success == 2);
  CHECK(agg.first_attempt_success == 2);
  CHECK(agg.failure_modes.at(FailureMode::no_incumbent) == 1);
  CHECK(agg.nested());

  CriteriaCounts broken;
  broken.final_success = 2;
  broken.prompt_satisfied = 1;
  CHECK_FALSE(broken.nested());

  const auto j = report_to_json(report);
  CHECK(j["rows"][3]["missing_reference"] == true);
  CHECK(j["aggregates"]["patch"]["cases"] == 3);
}

TEST_CASE("catalog validation") {
  const Json good = Json::parse(R"J([
    {"prompt_id": "X", "delta": "d",
     "reference_actions": [{"op": "UPDATE_PARAMETER", "target": "supply", "update": {"key": ["P1"], "value": 0}}],
     "prompt_checks": ["param_equals(supply,P1,0)"],
     "domain_metrics": {"fill": "fulfillment_at_least(demand_constraints,1)"}},
    {"prompt_id": "Y", "delta": "no reference"}
  ])J");
  const auto entries = parse_catalog(good);
  REQUIRE(entries.size() == 2);
  CHECK(entries[0].reference->checks.size() == 1);
  CHECK(entries[0].domain_metrics.count("fill") == 1);
  CHECK_FALSE(entries[1].reference);

  const Json bad = Json::parse(R"J([
    {"delta": "missing id"},
    {"prompt_id": "Z", "delta": "d", "reference_actions": [{"op": "EXPLODE"}]},
    {"prompt_id": "W", "delta": "d", "prompt_checks": ["param_equals(supply,P1,0)"]},
    {"prompt_id": "V", "delta": "d", "reference_actions": [], "prompt_checks": ["nonsense("]}
  ])J");
  try {
    parse_catalog(bad);
    FAIL("expected MalformedCatalog");
  } catch (const Error& e) {
    CHECK(e.code() == "MalformedCatalog");
    const std::string what = e.what();
    CHECK(what.find("entry 0") != std::string::npos);
    CHECK(what.find("entry 1") != std::string::npos);
    CHECK(what.find("entry 2") != std::string::npos);
    CHECK(what.find("entry 3") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_catalog(Json::object()), Error);
}
