// reopt: operator command line for the re-optimization engine.
//
// Exit codes: 0 success, 1 operational failure, 2 usage error.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <random>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "reopt/service.hpp"

using namespace reopt;
namespace fs = std::filesystem;

namespace {

constexpr int kOk = 0;
constexpr int kFailed = 1;
constexpr int kUsage = 2;

std::string number(const Json& j) {
  if (!j.is_number()) return "n/a";
  const double v = j.get<double>();
  if (std::abs(v - std::round(v)) < 1e-9 && std::abs(v) < 1e15) return fmt::format("{:.1f}", std::round(v));
  return fmt::format("{:.6g}", v);
}

void print_solution(const Json& s) {
  fmt::print("status: {}\n", s.value("status", "?"));
  fmt::print("objective: {}\n", number(s.value("objective", Json())));
  if (s.contains("gap") && s["gap"].is_number()) fmt::print("gap: {:.3g}\n", s["gap"].get<double>());
  fmt::print("wall_time: {:.3f}s  nodes: {}  backend: {}\n", s.value("wall_time", 0.0), s.value("node_count", 0),
             s.value("backend", ""));
}

void print_failure(const Json& f, const std::string& indent = "") {
  fmt::print("{}[{}/{}] {}\n", indent, f.value("failure_stage", "?"), f.value("failure_kind", "?"),
             f.value("failure_message", ""));
}

void print_step(const Json& out) {
  fmt::print("session: {}\n", out.value("session_id", ""));
  fmt::print("status: {}\n", out.value("status", "?"));
  fmt::print("attempts: {}  planner calls: {}\n", out.value("attempts_used", 0), out.value("planner_calls", 0));
  if (out["strategy"].is_object()) {
    fmt::print("strategy: {} ({})\n", out["strategy"].value("solve_strategy", ""),
               out["strategy"].value("rationale", ""));
  }
  for (const auto& c : out.value("candidates", Json::array())) {
    fmt::print("  attempt {} candidate {}: {}  objective {}\n", c.value("attempt", 0), c.value("candidate", 0),
               c.value("outcome", ""), number(c.value("objective", Json())));
    if (c.contains("failure")) print_failure(c["failure"], "    ");
  }
  if (out.value("status", "") == "succeeded") {
    fmt::print("version: {} -> {}\n", out.value("from_version", 0), out.value("new_state_version", 0));
    fmt::print("objective: {}\n", number(out.value("objective", Json())));
    fmt::print("diff:\n{}", format_diff(diff_from_json(out["diff"])));
  } else if (out["failure"].is_object()) {
    fmt::print("failure: ");
    print_failure(out["failure"]);
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("WriteFailed", fmt::format("cannot write {}", path.string()));
  out << text;
}

// Scratch store for one-shot scenario prompts; removed on exit.
struct ScratchStore {
  fs::path path;
  ScratchStore() {
    std::random_device rd;
    path = fs::temp_directory_path() / fmt::format("reopt-cli-{:08x}{:08x}", rd(), rd());
  }
  ~ScratchStore() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Interactive re-optimization of structured MIP models from natural-language change requests."};
  app.require_subcommand(1);
  app.set_version_flag("--version", "reopt 0.1.0");

  const std::vector<std::string> strategies = [] {
    std::vector<std::string> s{"auto"};
    for (const auto& n : strategy_names()) s.push_back(n);
    return s;
  }();

  // solve
  std::string solve_scenario;
  bool solve_json = false;
  std::string solve_backend = "builtin";
  auto* solve = app.add_subcommand("solve", "Solve a scenario's baseline from scratch");
  solve->add_option("scenario", solve_scenario, "Scenario file or name")->required();
  solve->add_option("--backend", solve_backend, "Solver backend")->check(CLI::IsMember({"builtin", "lp-roundtrip"}));
  solve->add_flag("--json", solve_json, "Print the SolveResult as JSON");

  // prompt
  std::string target;
  std::string delta;
  std::size_t budget = 2;
  std::string planner = "mock";
  std::string strategy = "auto";
  std::string store;
  bool prompt_json = false;
  std::vector<std::string> checks;
  auto* prompt = app.add_subcommand("prompt", "Run one change request through the closed loop");
  prompt->add_option("target", target, "Scenario file/name, or a session id in --store")->required();
  prompt->add_option("delta", delta, "Change request text")->required();
  prompt->add_option("--budget", budget, "Planner attempts (B)")->check(CLI::Range(1, 10));
  prompt->add_option("--planner", planner, "mock or llm")->check(CLI::IsMember({"mock", "llm"}));
  prompt->add_option("--strategy", strategy, "auto or a forced strategy")->check(CLI::IsMember(strategies));
  prompt->add_option("--store", store, "Session store; persists new sessions and resumes existing ones");
  prompt->add_option("--check", checks, "Prompt check, e.g. \"var_at_most(flows,(P2,C2),5)\"");
  prompt->add_flag("--json", prompt_json, "Print the StepOutcome as JSON");

  // replay
  std::string replay_scenario;
  std::string replay_catalog;
  std::string variant = "patch";
  std::string replay_planner = "mock";
  std::size_t replay_budget = 2;
  std::string out_json;
  std::string out_csv;
  bool replay_json = false;
  auto* replay_cmd = app.add_subcommand("replay", "Replay a prompt catalog and report the criteria tables");
  replay_cmd->add_option("scenario", replay_scenario, "Scenario file or name")->required();
  replay_cmd->add_option("catalog", replay_catalog, "Catalog file (default: the scenario's own)");
  replay_cmd->add_option("--variant", variant, "patch or patch-no-selector")
      ->check(CLI::IsMember({"patch", "patch-no-selector"}));
  replay_cmd->add_option("--planner", replay_planner, "mock or llm")->check(CLI::IsMember({"mock", "llm"}));
  replay_cmd->add_option("--budget", replay_budget, "Planner attempts (B)")->check(CLI::Range(1, 10));
  replay_cmd->add_option("--out-json", out_json, "Write the report as JSON");
  replay_cmd->add_option("--out-csv", out_csv, "Write the rows as CSV");
  replay_cmd->add_flag("--json", replay_json, "Print the JSON report instead of the text tables");

  // serve
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string serve_store = "reopt-store";
  std::string serve_planner = "mock";
  std::string ui_dir;
  auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP session service");
  serve_cmd->add_option("--host", host, "Bind address");
  serve_cmd->add_option("--port", port, "Port")->check(CLI::Range(1, 65535));
  serve_cmd->add_option("--store", serve_store, "Session store directory");
  serve_cmd->add_option("--planner", serve_planner, "Default planner for new sessions")
      ->check(CLI::IsMember({"mock", "llm"}));
  serve_cmd->add_option("--ui", ui_dir, "Built UI bundle served under /ui/");

  // export-lp
  std::string lp_scenario;
  auto* export_lp = app.add_subcommand("export-lp", "Write the scenario's instance in LP format to stdout");
  export_lp->add_option("scenario", lp_scenario, "Scenario file or name")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*solve) {
      const auto scenario = load_scenario(solve_scenario);
      const auto result = solve_with(solve_backend, instantiate(scenario.state), SolverConfig{});
      const auto j = solve_result_to_json(result);
      if (solve_json) {
        fmt::print("{}\n", j.dump(2));
      } else {
        fmt::print("scenario: {}\n", scenario.name);
        print_solution(j);
      }
      return result.has_incumbent() ? kOk : kFailed;
    }

    if (*prompt) {
      std::optional<ScratchStore> scratch;
      ServiceOptions options;
      options.run.planner = planner;
      options.run.strategy = strategy;
      options.run.budget = budget;
      const bool is_session = !store.empty() && fs::is_regular_file(fs::path(store) / target / "events.log");
      if (store.empty()) {
        scratch.emplace();
        options.store = scratch->path;
      } else {
        options.store = store;
      }
      SessionService service(options);
      std::string id;
      if (is_session) {
        auto s = service.restore(target);
        if (s->restored_truncated) fmt::print(stderr, "warning: dropped a torn final record from {}\n", target);
        id = target;
      } else {
        const auto created =
            service.create({{"scenario", target}, {"planner", planner}, {"strategy", strategy}, {"budget", budget}});
        id = created["session_id"].get<std::string>();
        if (!prompt_json) fmt::print("baseline objective: {}\n", number(created["objective"]));
      }
      Json body{{"delta", delta}, {"budget", budget}};
      if (!checks.empty()) body["checks"] = checks;
      const auto out = service.prompt(id, body);
      if (prompt_json) {
        fmt::print("{}\n", out.dump(2));
      } else {
        print_step(out);
      }
      return out.value("status", "") == "succeeded" ? kOk : kFailed;
    }

    if (*replay_cmd) {
      const auto scenario = load_scenario(replay_scenario);
      fs::path catalog_path;
      if (!replay_catalog.empty()) {
        catalog_path = replay_catalog;
      } else if (scenario.catalog) {
        catalog_path = *scenario.catalog;
      } else {
        fmt::print(stderr, "error: scenario '{}' names no catalog; pass one\n", scenario.name);
        return kUsage;
      }
      const auto catalog = load_catalog(catalog_path);
      ReplayOptions options;
      options.variant = variant;
      options.run.planner = replay_planner;
      options.run.budget = replay_budget;
      const auto report = replay(scenario, catalog, options);
      if (!out_json.empty()) write_text(out_json, report_to_json(report).dump(2) + "\n");
      if (!out_csv.empty()) write_text(out_csv, report_to_csv(report));
      if (replay_json) {
        fmt::print("{}\n", report_to_json(report).dump(2));
      } else {
        fmt::print("{}", report_to_text(report));
      }
      return kOk;
    }

    if (*serve_cmd) {
      ServiceOptions options;
      options.store = serve_store;
      options.run.planner = serve_planner;
      if (!ui_dir.empty()) options.ui_dir = fs::path(ui_dir);
      SessionService service(options);
      const auto restored = service.restore_all();
      fmt::print("restored {} session(s) from {}\n", restored.size(), serve_store);
      fmt::print("listening on http://{}:{}\n", host, port);
      std::fflush(stdout);
      serve(service, host, port);
      return kOk;
    }

    if (*export_lp) {
      const auto scenario = load_scenario(lp_scenario);
      fmt::print("{}", write_lp(instantiate(scenario.state), scenario.name));
      return kOk;
    }
  } catch (const Error& e) {
    fmt::print(stderr, "error: {}: {}\n", e.code(), e.what());
    return kFailed;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kFailed;
  }
  return kUsage;
}
