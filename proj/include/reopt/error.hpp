#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace reopt {

/// Base of every error raised by the library. `code()` is a stable short
/// identifier (e.g. "DuplicateName") that callers surface in failure records
/// and HTTP error bodies.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

/// Malformed document. `location` is a field path or byte offset.
class ParseError : public Error {
 public:
  ParseError(const std::string& location, const std::string& message)
      : Error("ParseError", location.empty() ? message : location + ": " + message),
        location_(location) {}

  const std::string& location() const noexcept { return location_; }

 private:
  std::string location_;
};

}  // namespace reopt
