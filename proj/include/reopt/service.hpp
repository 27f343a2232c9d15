#pragma once

// Session service: event-sourced persistence, the per-session closed loop and
// its HTTP+JSON face.

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "reopt/harness.hpp"

namespace httplib {
class Server;
}

namespace reopt {

// --- store -------------------------------------------------------------------------------------

/// Append-only per-session log: `<root>/<session>/events.log`, one record per
/// line as "<crc32 hex8> <compact json>". Each append is flushed and fsynced.
class SessionStore {
 public:
  explicit SessionStore(std::filesystem::path root);

  const std::filesystem::path& root() const { return root_; }
  void append(const std::string& session_id, const Json& event);

  struct Loaded {
    std::vector<Json> events;
    /// The final record was cut short (no newline); it was dropped.
    bool truncated = false;
  };
  /// Throws Error("StoreCorruption") on a complete record whose checksum or
  /// JSON does not verify, Error("UnknownSession") when there is no log.
  Loaded load(const std::string& session_id) const;
  /// Cuts a partial final record so the next append starts on a clean line.
  void drop_partial_tail(const std::string& session_id);
  std::vector<std::string> sessions() const;

 private:
  std::filesystem::path root_;
  std::mutex mutex_;
};

/// Checksum used by the store (zlib crc32).
std::uint32_t record_checksum(std::string_view payload);

// --- sessions ------------------------------------------------------------------------------------

struct ServiceOptions {
  std::filesystem::path store = "reopt-store";
  RunOptions run;
  /// Served under /ui/ when it exists.
  std::optional<std::filesystem::path> ui_dir;
};

struct Session {
  std::string id;
  std::string scenario_ref;
  Scenario scenario;
  RunOptions run;
  AgentContext context;
  std::map<std::uint64_t, ModelState> states;
  std::map<std::uint64_t, SolveResult> solutions;
  std::map<std::uint64_t, StateDiff> diffs;
  std::vector<Json> events;
  std::string created;
  std::string updated;
  std::uint64_t version = 0;
  bool restored_truncated = false;

  std::mutex write;  // one prompt in flight
  std::mutex data;   // guards the maps above for readers
};

class SessionService {
 public:
  explicit SessionService(ServiceOptions options);

  /// Rebuilds every session in the store. Returns the ids restored.
  std::vector<std::string> restore_all();
  /// Replays one session's log from its scenario baseline. Throws
  /// Error("StoreCorruption") when a replayed diff disagrees with the log.
  std::shared_ptr<Session> restore(const std::string& id);

  /// body: {"scenario": name or path, "planner"?, "strategy"?, "budget"?}.
  /// Returns {session_id, version, baseline, objective}.
  Json create(const Json& body);
  /// body: {"delta", "budget"?, "checks"?}. Throws Error("Busy") while another
  /// prompt runs on the session.
  Json prompt(const std::string& id, const Json& body);
  Json summary(const std::string& id) const;
  Json history(const std::string& id) const;
  /// Diff from v-1 to v; v = 0 gives the empty baseline diff.
  Json diff(const std::string& id, std::uint64_t version) const;
  Json list() const;

  /// Throws Error("UnknownSession").
  std::shared_ptr<Session> find(const std::string& id) const;

  /// Registers every route on `server`.
  void install(httplib::Server& server);

  const ServiceOptions& options() const { return options_; }

 private:
  std::shared_ptr<Session> open(const std::string& id, const std::string& scenario_ref, const RunOptions& run);

  ServiceOptions options_;
  SessionStore store_;
  mutable std::shared_mutex mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
};

/// Blocks serving on host:port until the server stops.
void serve(SessionService& service, const std::string& host, int port);

}  // namespace reopt
