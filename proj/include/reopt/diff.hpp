#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "reopt/model.hpp"
#include "reopt/model_io.hpp"

namespace reopt {

/// One changed location. A missing `before` means the path was added, a
/// missing `after` means it was removed.
struct DiffEntry {
  std::vector<std::string> path;
  std::optional<Json> before;
  std::optional<Json> after;

  /// "parameters.supply.P1"
  std::string path_string() const;

  bool operator==(const DiffEntry&) const = default;
};

/// Path-level difference between two states. Versions travel beside the
/// entries so that a diff of identical content is empty.
struct StateDiff {
  std::uint64_t from_version = 0;
  std::uint64_t to_version = 0;
  std::vector<DiffEntry> entries;

  bool empty() const { return entries.empty(); }
  bool operator==(const StateDiff&) const = default;
};

/// Minimal diff: keyed parameter values, bound overrides, per-row rhs and
/// objective overrides are compared entry by entry; added or removed objects
/// appear as a single entry.
StateDiff diff_states(const ModelState& before, const ModelState& after);

/// Replays a diff onto `state`. apply_diff(s, diff_states(s, t)) == t.
/// Throws Error("DiffMismatch") when an entry's before-value does not match.
ModelState apply_diff(const ModelState& state, const StateDiff& diff);

Json diff_to_json(const StateDiff& diff);
StateDiff diff_from_json(const Json& j);

/// One line per entry: "parameters.supply.P1: 20 -> 0".
std::string format_diff(const StateDiff& diff);

}  // namespace reopt
