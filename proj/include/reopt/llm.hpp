#pragma once

// Prompt assembly, the OpenAI-compatible chat transport and the scripted
// mock that stands in for it.

#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "reopt/failure.hpp"
#include "reopt/patch.hpp"
#include "reopt/toolbox.hpp"

namespace reopt {

struct ChatRequest {
  std::string model;
  std::string system;
  std::string user;
  double temperature = 0.0;
  int max_tokens = 4096;
  double timeout = 120.0;  // seconds

  bool operator==(const ChatRequest&) const = default;
};

/// Throws Error("InvalidRequest").
void check_request(const ChatRequest& request);

/// Chat-completions request body.
Json chat_request_body(const ChatRequest& request);

// --- prompts --------------------------------------------------------------------

std::string_view planner_instruction();
std::string_view repair_prelude();
std::string_view selector_instruction();
/// Payload grammar of every patch operation, appended to the planner's system
/// message.
std::string patch_schema_text();

struct PromptSettings {
  std::string model = "gpt-4.1-mini";
  double temperature = 0.0;
  int max_tokens = 4096;
  double timeout = 120.0;
};

ChatRequest assemble_planner_prompt(std::string_view render, std::string_view delta, const FailureRecord* repair,
                                    std::string_view framing, std::string_view op_schemas,
                                    const PromptSettings& settings = {});

ChatRequest assemble_selector_prompt(const std::vector<ActionSet>& action_sets, const StrategyCatalog& catalog,
                                     const Json& hints, bool prior_available, const PromptSettings& settings = {});

// --- transport ---------------------------------------------------------------------

struct GatewayConfig {
  std::string base_url = "https://api.openai.com/v1";
  std::string api_key;
  std::string model = "gpt-4.1-mini";
  int max_retries = 2;
  std::chrono::milliseconds backoff{250};

  /// REOPT_LLM_BASE_URL, REOPT_LLM_API_KEY, REOPT_LLM_MODEL.
  static GatewayConfig from_env();
};

struct HttpReply {
  int status = 0;
  std::string body;
};

/// POSTs `body` to `url` with the given headers. Throws Error("TransportError")
/// when no reply arrives and Error("Timeout") when the deadline passes.
using HttpTransport = std::function<HttpReply(const std::string& url, const std::map<std::string, std::string>& headers,
                                              const std::string& body, double timeout)>;

HttpTransport default_transport();

/// One chat completion; returns the assistant text. Transport faults and 5xx
/// or 429 replies are retried with exponential backoff. Throws
/// Error("AuthError") (missing key, or 401/403, never retried),
/// Error("Timeout") or Error("TransportError").
std::string chat_complete(const ChatRequest& request, const GatewayConfig& config,
                          const HttpTransport& transport = default_transport());

// --- scripted mock --------------------------------------------------------------------

struct MockEntry {
  /// Case-insensitive substring of the delta; empty matches anything.
  std::string contains;
  std::optional<std::string> regex;
  /// Response for attempt n (0-based); the last one repeats.
  std::vector<std::string> responses;
};

class MockScript {
 public:
  MockScript() = default;
  explicit MockScript(std::vector<MockEntry> entries) : entries_(std::move(entries)) {}

  /// {"entries": [{"match": {"contains": "..."} | {"regex": "..."} | {}, "responses": [text | object, ...]}]}
  static MockScript from_json(const Json& j);
  static MockScript load(const std::filesystem::path& path);

  /// First matching entry wins. nullopt when nothing matches.
  std::optional<std::string> respond(std::string_view delta, std::size_t attempt) const;
  const std::vector<MockEntry>& entries() const { return entries_; }

 private:
  std::vector<MockEntry> entries_;
};

}  // namespace reopt
