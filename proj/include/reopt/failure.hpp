#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "reopt/model_io.hpp"

namespace reopt {

enum class FailureStage { plan_parse, normalize, apply, solve, prompt_check };

std::string_view to_string(FailureStage stage);
FailureStage parse_failure_stage(std::string_view text);

struct AttemptNote {
  FailureStage stage = FailureStage::plan_parse;
  std::string kind;
  std::string message;

  bool operator==(const AttemptNote&) const = default;
};

/// Repair context handed back to the planner after a failed attempt.
struct FailureRecord {
  FailureStage stage = FailureStage::plan_parse;
  std::string kind;
  std::string message;
  std::string repair_instruction;
  /// Earlier failures of the same run, oldest first.
  std::vector<AttemptNote> attempt_history;

  AttemptNote note() const { return {stage, kind, message}; }
  bool operator==(const FailureRecord&) const = default;
};

Json failure_to_json(const FailureRecord& record);
FailureRecord failure_from_json(const Json& j);

}  // namespace reopt
