#include <httplib.h>

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <regex>
#include <thread>

#include <fmt/format.h>

#include "reopt/llm.hpp"

namespace reopt {

// --- failure records -----------------------------------------------------------------

std::string_view to_string(FailureStage stage) {
  switch (stage) {
    case FailureStage::plan_parse: return "plan_parse";
    case FailureStage::normalize: return "normalize";
    case FailureStage::apply: return "apply";
    case FailureStage::solve: return "solve";
    case FailureStage::prompt_check: return "prompt_check";
  }
  return "plan_parse";
}

FailureStage parse_failure_stage(std::string_view text) {
  for (auto s : {FailureStage::plan_parse, FailureStage::normalize, FailureStage::apply, FailureStage::solve,
                 FailureStage::prompt_check}) {
    if (to_string(s) == text) return s;
  }
  throw ParseError("failure_stage", fmt::format("unknown failure stage '{}'", text));
}

Json failure_to_json(const FailureRecord& record) {
  Json history = Json::array();
  for (const auto& a : record.attempt_history) {
    history.push_back({{"failure_stage", to_string(a.stage)}, {"failure_kind", a.kind}, {"failure_message", a.message}});
  }
  return {{"failure_stage", to_string(record.stage)},
          {"failure_kind", record.kind},
          {"failure_message", record.message},
          {"repair_instruction", record.repair_instruction},
          {"attempt_history", std::move(history)}};
}

FailureRecord failure_from_json(const Json& j) {
  FailureRecord r;
  r.stage = parse_failure_stage(j.at("failure_stage").get<std::string>());
  r.kind = j.at("failure_kind").get<std::string>();
  r.message = j.value("failure_message", "");
  r.repair_instruction = j.value("repair_instruction", "");
  for (const auto& a : j.value("attempt_history", Json::array())) {
    r.attempt_history.push_back({parse_failure_stage(a.at("failure_stage").get<std::string>()),
                                 a.at("failure_kind").get<std::string>(), a.value("failure_message", "")});
  }
  return r;
}

// --- transport -------------------------------------------------------------------------

GatewayConfig GatewayConfig::from_env() {
  GatewayConfig config;
  if (const char* v = std::getenv("REOPT_LLM_BASE_URL"); v && *v) config.base_url = v;
  if (const char* v = std::getenv("REOPT_LLM_API_KEY"); v && *v) config.api_key = v;
  if (const char* v = std::getenv("REOPT_LLM_MODEL"); v && *v) config.model = v;
  return config;
}

namespace {

// "https://host:port/prefix" -> ("https://host:port", "/prefix")
std::pair<std::string, std::string> split_url(const std::string& url) {
  const auto scheme = url.find("://");
  if (scheme == std::string::npos) throw Error("TransportError", fmt::format("'{}' is not an absolute URL", url));
  const auto path = url.find('/', scheme + 3);
  if (path == std::string::npos) return {url, ""};
  return {url.substr(0, path), url.substr(path)};
}

}  // namespace

HttpTransport default_transport() {
  return [](const std::string& url, const std::map<std::string, std::string>& headers, const std::string& body,
            double timeout) {
    auto [origin, path] = split_url(url);
    httplib::Client client(origin);
    const auto seconds = static_cast<time_t>(timeout);
    const auto micros = static_cast<time_t>((timeout - double(seconds)) * 1e6);
    client.set_connection_timeout(seconds, micros);
    client.set_read_timeout(seconds, micros);
    client.set_write_timeout(seconds, micros);
    httplib::Headers h;
    for (const auto& [k, v] : headers) h.emplace(k, v);
    auto result = client.Post(path, h, body, "application/json");
    if (!result) {
      const auto err = result.error();
      if (err == httplib::Error::Read || err == httplib::Error::Write || err == httplib::Error::ConnectionTimeout) {
        // httplib reports a read timeout as a read error; both mean no reply in time.
        throw Error("Timeout", fmt::format("{}: {}", url, httplib::to_string(err)));
      }
      throw Error("TransportError", fmt::format("{}: {}", url, httplib::to_string(err)));
    }
    return HttpReply{result->status, result->body};
  };
}

std::string chat_complete(const ChatRequest& request, const GatewayConfig& config, const HttpTransport& transport) {
  check_request(request);
  if (config.api_key.empty()) throw Error("AuthError", "REOPT_LLM_API_KEY is not set");
  auto base = config.base_url;
  while (!base.empty() && base.back() == '/') base.pop_back();
  const auto url = base + "/chat/completions";
  auto body_json = chat_request_body(request);
  if (body_json["model"].get<std::string>().empty()) body_json["model"] = config.model;
  const auto body = body_json.dump();
  const std::map<std::string, std::string> headers{{"Authorization", "Bearer " + config.api_key}};

  std::string last;
  std::string last_code = "TransportError";
  for (int attempt = 0; attempt <= config.max_retries; ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(config.backoff * (1 << (attempt - 1)));
    HttpReply reply;
    try {
      reply = transport(url, headers, body, request.timeout);
    } catch (const Error& e) {
      if (e.code() != "TransportError" && e.code() != "Timeout") throw;
      last_code = e.code();
      last = e.what();
      continue;
    }
    if (reply.status == 401 || reply.status == 403) {
      throw Error("AuthError", fmt::format("endpoint rejected the credential (HTTP {})", reply.status));
    }
    if (reply.status == 429 || reply.status >= 500) {
      last_code = "TransportError";
      last = fmt::format("HTTP {}: {}", reply.status, reply.body.substr(0, 200));
      continue;
    }
    if (reply.status != 200) {
      throw Error("TransportError", fmt::format("HTTP {}: {}", reply.status, reply.body.substr(0, 200)));
    }
    try {
      const auto doc = Json::parse(reply.body);
      const auto& content = doc.at("choices").at(0).at("message").at("content");
      return content.is_string() ? content.get<std::string>() : content.dump();
    } catch (const std::exception& e) {
      throw Error("TransportError", fmt::format("unexpected chat-completions reply: {}", e.what()));
    }
  }
  throw Error(last_code, fmt::format("giving up after {} attempts: {}", config.max_retries + 1, last));
}

// --- mock ------------------------------------------------------------------------------

MockScript MockScript::from_json(const Json& j) {
  const auto& list = j.is_array() ? j : j.at("entries");
  std::vector<MockEntry> entries;
  for (std::size_t i = 0; i < list.size(); ++i) {
    const auto& e = list[i];
    MockEntry entry;
    const auto match = e.value("match", Json::object());
    entry.contains = match.value("contains", "");
    if (match.contains("regex")) {
      entry.regex = match.at("regex").get<std::string>();
      std::regex check(*entry.regex);  // reject bad patterns at load time
    }
    const auto& responses = e.at("responses");
    if (!responses.is_array() || responses.empty()) {
      throw ParseError(fmt::format("entries/{}/responses", i), "expected a non-empty list");
    }
    for (const auto& r : responses) entry.responses.push_back(r.is_string() ? r.get<std::string>() : r.dump(2));
    entries.push_back(std::move(entry));
  }
  return MockScript(std::move(entries));
}

MockScript MockScript::load(const std::filesystem::path& path) { return from_json(read_json_file(path)); }

std::optional<std::string> MockScript::respond(std::string_view delta, std::size_t attempt) const {
  auto lower = [](std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
    return out;
  };
  const auto haystack = lower(delta);
  for (const auto& e : entries_) {
    if (!e.contains.empty() && haystack.find(lower(e.contains)) == std::string::npos) continue;
    if (e.regex && !std::regex_search(std::string(delta), std::regex(*e.regex))) continue;
    return e.responses[std::min(attempt, e.responses.size() - 1)];
  }
  return std::nullopt;
}

}  // namespace reopt
