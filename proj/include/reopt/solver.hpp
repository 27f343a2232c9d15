#pragma once

// Desk-scale LP/MIP kernel: bounded two-phase simplex and best-bound
// branch-and-bound, plus the backend registry that lets another solver stand
// in for it.

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <stop_token>
#include <string>
#include <string_view>
#include <vector>

#include "reopt/model.hpp"
#include "reopt/model_io.hpp"

namespace reopt {

enum class SolveStatus { optimal, feasible_time_limit, infeasible, unbounded, no_incumbent };
enum class NodeSelection { best_bound, depth_first };
enum class Branching { most_fractional };

std::string_view to_string(SolveStatus status);
std::string_view to_string(NodeSelection selection);
SolveStatus parse_solve_status(std::string_view text);
NodeSelection parse_node_selection(std::string_view text);

struct SolverConfig {
  double time_limit = 60.0;  // seconds
  double mip_gap_tolerance = 1e-4;
  double feasibility_tolerance = 1e-6;
  NodeSelection node_selection = NodeSelection::best_bound;
  Branching branching = Branching::most_fractional;
  std::optional<std::string> preset_name;
  std::uint64_t random_seed = 0;

  bool operator==(const SolverConfig&) const = default;
};

/// Throws Error("InvalidConfig") unless tolerances and the time limit are > 0.
void check_config(const SolverConfig& config);

using Assignment = std::map<std::string, double>;

struct SolveResult {
  SolveStatus status = SolveStatus::no_incumbent;
  /// Present iff an incumbent exists.
  std::optional<Assignment> assignment;
  std::optional<double> objective;
  /// Lower bound on the optimum; +inf for infeasible, -inf when unknown.
  double best_bound = -kInfinity;
  /// |objective - best_bound| / max(1, |objective|); present with an incumbent.
  std::optional<double> gap;
  double wall_time = 0.0;
  std::uint64_t node_count = 0;
  std::string backend = "builtin";

  bool has_incumbent() const { return assignment.has_value(); }
};

Json solve_result_to_json(const SolveResult& result);
SolveResult solve_result_from_json(const Json& j);

enum class WarmStartSource { direct, heuristic, fix_and_release };
std::string_view to_string(WarmStartSource source);

struct WarmStart {
  Assignment values;  // partial allowed
  WarmStartSource source = WarmStartSource::direct;
  /// Keys of the seed that the target instance does not have.
  std::size_t dropped = 0;
  /// Matched keys over instance columns.
  double coverage = 0.0;
};

/// Solves the continuous relaxation. Integrality marks are ignored.
/// Throws Error("NumericalFailure") when the simplex loses its footing.
SolveResult solve_lp(const Instance& instance, const SolverConfig& config = {}, std::stop_token stop = {});

/// Branch-and-bound. A warm start that is feasible (after completing missing
/// continuous values by an LP with the given integers fixed) becomes the first
/// incumbent; otherwise its values only steer which child is explored first.
SolveResult solve_mip(const Instance& instance, const SolverConfig& config = {}, const WarmStart* warm_start = nullptr,
                      std::stop_token stop = {});

struct FeasibilityViolation {
  enum class Kind { missing, row, lower_bound, upper_bound, integrality };
  Kind kind = Kind::row;
  std::string key;  // variable or row flat key
  double amount = 0.0;

  std::string describe() const;
};

/// Empty result = feasible.
std::vector<FeasibilityViolation> check_feasible(const Instance& instance, const Assignment& assignment,
                                                 double tolerance = 1e-6);

/// c'x over the instance columns; missing keys count as 0.
double objective_value(const Instance& instance, const Assignment& assignment);

// --- Backends -----------------------------------------------------------------

using SolverBackend =
    std::function<SolveResult(const Instance&, const SolverConfig&, const WarmStart*, std::stop_token)>;

/// "builtin" (this kernel) and "lp-roundtrip" (write the instance as LP text,
/// read it back and solve; exercises the interop path) are always present.
void register_backend(const std::string& name, SolverBackend backend);
std::vector<std::string> backend_names();
/// Throws Error("BackendUnavailable").
SolveResult solve_with(std::string_view backend, const Instance& instance, const SolverConfig& config = {},
                       const WarmStart* warm_start = nullptr, std::stop_token stop = {});

}  // namespace reopt
