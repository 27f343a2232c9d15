#include <httplib.h>

#include <chrono>
#include <random>

#include <fmt/chrono.h>
#include <fmt/format.h>

#include "reopt/service.hpp"

namespace reopt {

namespace {

namespace fs = std::filesystem;

std::string now_iso() {
  const auto now = std::chrono::system_clock::now();
  const auto millis = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  return fmt::format("{:%Y-%m-%dT%H:%M:%S}.{:03d}Z", fmt::gmtime(std::chrono::system_clock::to_time_t(now)), millis);
}

std::string new_session_id() {
  static std::mutex mutex;
  static std::mt19937_64 rng{std::random_device{}()};
  std::lock_guard lock(mutex);
  return fmt::format("{:016x}", rng());
}

/// Malformed request body; `fields` maps each bad field to what is wrong.
class FieldErrors : public Error {
 public:
  explicit FieldErrors(Json fields)
      : Error("InvalidRequest", "malformed request body: " + fields.dump()), fields_(std::move(fields)) {}
  const Json& fields() const { return fields_; }

 private:
  Json fields_;
};

Json run_to_json(const RunOptions& run) {
  return {{"planner", run.planner}, {"strategy", run.strategy}, {"budget", run.budget}, {"backend", run.backend}};
}

RunOptions run_from_json(const Json& j, RunOptions base) {
  if (!j.is_object()) return base;
  base.planner = j.value("planner", base.planner);
  base.strategy = j.value("strategy", base.strategy);
  base.budget = j.value("budget", base.budget);
  base.backend = j.value("backend", base.backend);
  return base;
}

// Shared by create and prompt; collects every field problem before failing.
RunOptions parse_run_fields(const Json& body, const RunOptions& defaults, Json& errors) {
  RunOptions run = defaults;
  if (body.contains("planner")) {
    const auto& p = body.at("planner");
    if (!p.is_string() || (p != "mock" && p != "llm")) errors["planner"] = "must be \"mock\" or \"llm\"";
    else run.planner = p.get<std::string>();
  }
  if (body.contains("strategy")) {
    const auto& s = body.at("strategy");
    const auto& names = strategy_names();
    if (!s.is_string() || (s != "auto" && std::find(names.begin(), names.end(), s.get<std::string>()) == names.end())) {
      errors["strategy"] = "must be \"auto\" or a strategy name";
    } else {
      run.strategy = s.get<std::string>();
    }
  }
  if (body.contains("budget")) {
    const auto& b = body.at("budget");
    if (!b.is_number_integer() || b.get<long>() < 1 || b.get<long>() > 10) errors["budget"] = "must be an integer in [1,10]";
    else run.budget = b.get<std::size_t>();
  }
  return run;
}

}  // namespace

SessionService::SessionService(ServiceOptions options) : options_(std::move(options)), store_(options_.store) {}

std::shared_ptr<Session> SessionService::open(const std::string& id, const std::string& scenario_ref,
                                              const RunOptions& run) {
  auto s = std::make_shared<Session>();
  s->id = id;
  s->scenario_ref = scenario_ref;
  s->scenario = load_scenario(scenario_ref);
  s->run = run;
  s->context = make_agent_context(s->scenario, run);
  s->version = s->scenario.state.version;
  s->states[s->version] = s->scenario.state;
  s->diffs[s->version] = StateDiff{s->version, s->version, {}};
  return s;
}

Json SessionService::create(const Json& body) {
  Json errors = Json::object();
  if (!body.is_object()) throw FieldErrors(Json{{"body", "expected a JSON object"}});
  std::string ref;
  if (!body.contains("scenario") || !body.at("scenario").is_string() || body.at("scenario").get<std::string>().empty()) {
    errors["scenario"] = "required scenario name or file path";
  } else {
    ref = body.at("scenario").get<std::string>();
  }
  const auto run = parse_run_fields(body, options_.run, errors);
  if (!errors.empty()) throw FieldErrors(errors);

  fs::path resolved;
  try {
    resolved = fs::absolute(resolve_scenario(ref));
  } catch (const Error& e) {
    throw FieldErrors(Json{{"scenario", e.what()}});
  }
  const auto id = new_session_id();
  auto s = open(id, resolved.string(), run);
  const auto baseline = solve_baseline(s->scenario.state, s->context);
  s->solutions[s->version] = baseline;
  s->created = s->updated = now_iso();

  Json event{{"type", "create"},
             {"session_id", id},
             {"scenario", s->scenario_ref},
             {"run", run_to_json(run)},
             {"timestamp", s->created},
             {"version", s->version},
             {"baseline", solve_result_to_json(baseline)}};
  store_.append(id, event);
  s->events.push_back(event);
  {
    std::unique_lock lock(mutex_);
    sessions_[id] = s;
  }
  return {{"session_id", id},
          {"scenario", s->scenario.name},
          {"version", s->version},
          {"baseline", solve_result_to_json(baseline)},
          {"objective", baseline.objective ? Json(*baseline.objective) : Json()}};
}

std::shared_ptr<Session> SessionService::find(const std::string& id) const {
  std::shared_lock lock(mutex_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw Error("UnknownSession", fmt::format("no session '{}'", id));
  return it->second;
}

Json SessionService::prompt(const std::string& id, const Json& body) {
  auto s = find(id);
  Json errors = Json::object();
  if (!body.is_object()) throw FieldErrors(Json{{"body", "expected a JSON object"}});
  if (!body.contains("delta") || !body.at("delta").is_string() || body.at("delta").get<std::string>().empty()) {
    errors["delta"] = "required non-empty string";
  }
  Json budget_only = Json::object();
  if (body.contains("budget")) budget_only["budget"] = body.at("budget");
  const auto budget = parse_run_fields(budget_only, s->run, errors).budget;
  std::vector<PromptCheck> checks;
  if (body.contains("checks")) {
    if (!body.at("checks").is_array()) {
      errors["checks"] = "expected a list of prompt checks";
    } else {
      for (std::size_t i = 0; i < body.at("checks").size(); ++i) {
        try {
          checks.push_back(prompt_check_from_json(body.at("checks")[i]));
        } catch (const std::exception& e) {
          errors[fmt::format("checks/{}", i)] = e.what();
        }
      }
    }
  }
  if (!errors.empty()) throw FieldErrors(errors);

  std::unique_lock guard(s->write, std::try_to_lock);
  if (!guard.owns_lock()) throw Error("Busy", fmt::format("session '{}' already has a prompt in flight", id));

  const auto delta = body.at("delta").get<std::string>();
  std::uint64_t from = 0;
  ModelState current;
  SolveResult prior;
  {
    std::lock_guard data(s->data);
    from = s->version;
    current = s->states.at(from);
    prior = s->solutions.at(from);
  }
  auto outcome =
      run_closed_loop(delta, current, prior.has_incumbent() ? &prior : nullptr, budget, checks, s->context);
  auto out = step_outcome_to_json(outcome);
  out["session_id"] = id;
  out["from_version"] = from;

  Json checks_json = Json::array();
  for (const auto& c : checks) checks_json.push_back(c.text);
  Json event{{"type", "prompt"},
             {"seq", s->events.size()},
             {"timestamp", now_iso()},
             {"delta", delta},
             {"budget", budget},
             {"checks", checks_json},
             {"from_version", from},
             {"outcome", out}};
  // Persist before publishing; a failed append leaves the session as it was.
  std::lock_guard data(s->data);
  store_.append(id, event);
  s->events.push_back(event);
  s->updated = event["timestamp"].get<std::string>();
  if (outcome.status == StepStatus::succeeded) {
    s->version = outcome.new_state_version;
    s->states[s->version] = std::move(outcome.state);
    s->solutions[s->version] = *outcome.solution;
    s->diffs[s->version] = outcome.diff;
  }
  return out;
}

std::shared_ptr<Session> SessionService::restore(const std::string& id) {
  const auto loaded = store_.load(id);
  if (loaded.events.empty() || loaded.events.front().value("type", "") != "create") {
    throw Error("StoreCorruption", fmt::format("session '{}' log does not start with a create record", id));
  }
  const auto& head = loaded.events.front();
  auto s = open(id, head.at("scenario").get<std::string>(), run_from_json(head.value("run", Json()), options_.run));
  if (head.at("version").get<std::uint64_t>() != s->version) {
    throw Error("StoreCorruption", fmt::format("session '{}': scenario baseline version changed", id));
  }
  s->solutions[s->version] = solve_result_from_json(head.at("baseline"));
  s->created = s->updated = head.value("timestamp", "");
  s->events.push_back(head);

  for (std::size_t i = 1; i < loaded.events.size(); ++i) {
    const auto& e = loaded.events[i];
    auto corrupt = [&](const std::string& why) {
      return Error("StoreCorruption", fmt::format("session '{}' record {}: {}", id, i + 1, why));
    };
    const auto& out = e.at("outcome");
    if (out.at("status") == "succeeded") {
      if (e.at("from_version").get<std::uint64_t>() != s->version) throw corrupt("version chain is broken");
      const auto actions = action_set_from_json(out.at("applied_action_set"));
      ApplyResult applied;
      try {
        applied = apply_action_set(s->states.at(s->version), actions);
      } catch (const Error& err) {
        throw corrupt(fmt::format("committed action set no longer applies: {}", err.what()));
      }
      if (applied.state.version != out.at("new_state_version").get<std::uint64_t>()) throw corrupt("version mismatch");
      if (!(applied.diff == diff_from_json(out.at("diff")))) throw corrupt("replayed diff differs from the log");
      s->version = applied.state.version;
      s->states[s->version] = std::move(applied.state);
      s->solutions[s->version] = solve_result_from_json(out.at("solution"));
      s->diffs[s->version] = std::move(applied.diff);
    }
    s->updated = e.value("timestamp", s->updated);
    s->events.push_back(e);
  }
  if (loaded.truncated) {
    store_.drop_partial_tail(id);
    s->restored_truncated = true;
  }
  std::unique_lock lock(mutex_);
  sessions_[id] = s;
  return s;
}

std::vector<std::string> SessionService::restore_all() {
  std::vector<std::string> ids;
  for (const auto& id : store_.sessions()) {
    restore(id);
    ids.push_back(id);
  }
  return ids;
}

Json SessionService::summary(const std::string& id) const {
  auto s = find(id);
  std::lock_guard guard(s->data);
  const auto& state = s->states.at(s->version);
  auto names = [](const auto& list) {
    Json out = Json::array();
    for (const auto& item : list) out.push_back(item.name);
    return out;
  };
  const auto instance = instantiate(state);
  const auto& solution = s->solutions.at(s->version);
  return {{"session_id", s->id},
          {"scenario", s->scenario.name},
          {"version", s->version},
          {"versions", [&] {
             Json v = Json::array();
             for (const auto& [k, _] : s->states) v.push_back(k);
             return v;
           }()},
          {"created", s->created},
          {"updated", s->updated},
          {"restored_truncated", s->restored_truncated},
          {"run", run_to_json(s->run)},
          {"model",
           {{"parameters", names(state.parameters)},
            {"variable_families", names(state.variable_families)},
            {"constraint_families", names(state.constraint_families)},
            {"objective_components", names(state.objective_components)},
            {"columns", instance.variables.size()},
            {"rows", instance.rows.size()}}},
          {"state", save_state(state)},
          {"solution", solve_result_to_json(solution)},
          {"objective", solution.objective ? Json(*solution.objective) : Json()}};
}

Json SessionService::history(const std::string& id) const {
  auto s = find(id);
  std::lock_guard guard(s->data);
  return {{"session_id", s->id}, {"events", s->events}};
}

Json SessionService::diff(const std::string& id, std::uint64_t version) const {
  auto s = find(id);
  std::lock_guard guard(s->data);
  auto it = s->diffs.find(version);
  if (it == s->diffs.end()) {
    throw Error("UnknownVersion", fmt::format("session '{}' has no committed version {}", id, version));
  }
  auto j = diff_to_json(it->second);
  j["session_id"] = s->id;
  j["version"] = version;
  j["text"] = format_diff(it->second);
  j["solution"] = solve_result_to_json(s->solutions.at(version));
  return j;
}

Json SessionService::list() const {
  std::shared_lock lock(mutex_);
  Json out = Json::array();
  for (const auto& [id, s] : sessions_) out.push_back({{"session_id", id}, {"scenario", s->scenario.name}});
  return {{"sessions", out}};
}

// --- HTTP -------------------------------------------------------------------------------------------

namespace {

int status_for(const std::string& code) {
  if (code == "UnknownSession" || code == "UnknownVersion") return 404;
  if (code == "Busy") return 409;
  if (code == "InvalidRequest" || code == "ParseError" || code == "UnknownScenario" || code == "UnknownPlanner" ||
      code == "NoMockScript" || code == "InvalidBudget") {
    return 422;
  }
  return 500;
}

void reply(httplib::Response& res, int status, const Json& body) {
  res.status = status;
  res.set_content(body.dump(2), "application/json");
}

template <typename F>
void guarded(httplib::Response& res, F&& body) {
  try {
    body();
  } catch (const FieldErrors& e) {
    reply(res, 422, {{"error", e.code()}, {"message", e.what()}, {"fields", e.fields()}});
  } catch (const Error& e) {
    reply(res, status_for(e.code()), {{"error", e.code()}, {"message", e.what()}});
  } catch (const std::exception& e) {
    reply(res, 500, {{"error", "InternalError"}, {"message", e.what()}});
  }
}

Json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return Json::object();
  try {
    return Json::parse(req.body);
  } catch (const Json::exception& e) {
    throw FieldErrors(Json{{"body", fmt::format("not valid JSON: {}", e.what())}});
  }
}

}  // namespace

void SessionService::install(httplib::Server& server) {
  server.Get("/health", [](const httplib::Request&, httplib::Response& res) {
    reply(res, 200, {{"status", "ok"}});
  });
  server.Get("/sessions", [this](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] { reply(res, 200, list()); });
  });
  server.Post("/sessions", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { reply(res, 201, create(parse_body(req))); });
  });
  server.Post(R"(/sessions/([^/]+)/prompts)", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto id = req.matches[1].str();
      find(id);  // 404 before body checks
      reply(res, 200, prompt(id, parse_body(req)));
    });
  });
  server.Get(R"(/sessions/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { reply(res, 200, summary(req.matches[1].str())); });
  });
  server.Get(R"(/sessions/([^/]+)/history)", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { reply(res, 200, history(req.matches[1].str())); });
  });
  server.Get(R"(/sessions/([^/]+)/diff/(\d+))", [this](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      std::uint64_t v = 0;
      try {
        v = std::stoull(req.matches[2].str());
      } catch (const std::exception&) {
        throw Error("UnknownVersion", "version out of range");
      }
      reply(res, 200, diff(req.matches[1].str(), v));
    });
  });
  if (options_.ui_dir && fs::is_directory(*options_.ui_dir)) server.set_mount_point("/ui", options_.ui_dir->string());
  server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (res.body.empty()) {
      res.set_content(Json{{"error", res.status == 404 ? "NotFound" : "HttpError"}, {"status", res.status}}.dump(),
                      "application/json");
    }
  });
}

void serve(SessionService& service, const std::string& host, int port) {
  httplib::Server server;
  service.install(server);
  if (!server.listen(host, port)) throw Error("ListenFailed", fmt::format("cannot listen on {}:{}", host, port));
}

}  // namespace reopt
