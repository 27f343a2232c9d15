#pragma once

// Re-optimization techniques the strategy selector can pick from: direct warm
// starts, fix-and-release, the exam-scheduling heuristic, and solver presets.

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "reopt/diff.hpp"
#include "reopt/model.hpp"
#include "reopt/solver.hpp"

namespace reopt {

// --- Catalog -----------------------------------------------------------------

inline constexpr const char* kStrategyWarm = "warm";
inline constexpr const char* kStrategyWarmTuned = "warm+tuned";
inline constexpr const char* kStrategyTuned = "tuned";
inline constexpr const char* kStrategyScratch = "scratch";
inline constexpr const char* kStrategyHeuristicWarm = "heuristic_warm";
inline constexpr const char* kStrategyFixAndRelease = "fix_and_release";

/// Catalog order.
const std::vector<std::string>& strategy_names();

struct StrategyEntry {
  std::string name;
  bool available = false;
  std::string description;
  /// Set on entries that use a preset.
  std::optional<std::string> preset_name;
};

struct StrategyCatalog {
  std::vector<StrategyEntry> entries;

  bool allows(std::string_view name) const;
  const StrategyEntry* find(std::string_view name) const;
  std::vector<std::string> available() const;
};

struct CatalogContext {
  /// Preset registered for the instance; enables the tuned entries.
  std::optional<std::string> preset_name;
  /// The scenario carries what the exam heuristic needs.
  bool heuristic_configured = false;
};

StrategyCatalog list_strategies(const ModelState& state, const SolveResult* prior, const CatalogContext& context);

Json catalog_to_json(const StrategyCatalog& catalog);

// --- Presets -------------------------------------------------------------------

/// Directories searched by load_preset when none are given: $REOPT_PRESET_DIR
/// first, then the presets shipped with the sources.
std::vector<std::filesystem::path> default_preset_dirs();

/// Reads `<name>.prm` (key = value lines, '#' comments) over the default
/// SolverConfig. Throws Error("UnknownPreset") or Error("InvalidConfig").
SolverConfig load_preset(const std::string& name, const std::vector<std::filesystem::path>& dirs = default_preset_dirs());
SolverConfig parse_preset(std::string_view text, const std::string& name);

// --- Warm starts ----------------------------------------------------------------

/// Keeps the prior keys the instance still has. coverage = matched / columns.
WarmStart direct_warm_start(const Assignment& prior, const Instance& instance);

struct FixAndRelease {
  WarmStart start;
  /// The instance with every unaffected column pinned to its prior value.
  Instance restricted;
  std::set<std::string> fixed;
  std::set<std::string> released;
};

/// Throws Error("MissingPriorValue") for an unaffected column absent from the
/// prior.
FixAndRelease fix_and_release(const Assignment& prior, const std::set<std::string>& affected_keys,
                              const Instance& instance);

/// Columns reachable from an edit: new columns, columns whose bounds, type or
/// cost changed, and every column appearing in a row that was added, removed
/// or changed. Whole families are released when the diff touches the family
/// object itself rather than one of its entries.
std::set<std::string> affected_keys(const Instance& before, const Instance& after, const StateDiff& diff);

// --- Exam-scheduling heuristic ----------------------------------------------------

struct ExamWarmStartParams {
  std::map<std::string, long> enrollment;     // block -> e(b); virtual blocks carry 0
  std::vector<int> slots;                     // ascending
  std::map<std::string, std::vector<int>> days;  // day -> slots of that day
  std::map<std::string, int> reserved;        // virtual block -> slot
  std::optional<long> large_threshold;        // none = infinity
  int cutoff = 0;
  std::map<std::string, long> day_caps;       // partial
  std::map<std::string, int> base_assignment; // X0

  /// Throws Error("InvalidInput") when the partition or the pins are broken.
  void check() const;
};

/// Which stage placed each block; tests use it to check the stage conditions.
enum class ExamStage { reserved, front_load, day_cap, fallback };

struct ExamAssignment {
  std::map<std::string, int> slot;
  std::map<std::string, ExamStage> stage;
};

/// The four-stage construction. Throws Error("InfeasibleInput") when there
/// are more blocks than slots.
ExamAssignment exam_heuristic_warm_start(const ExamWarmStartParams& params);

/// Reads the exam parameters off a state and a prior solution using the
/// parameter names in `config` (a scenario's "heuristic" object).
ExamWarmStartParams exam_params_from_state(const Json& config, const ModelState& state, const Assignment& prior);

/// x(b,s) = 1 for assigned pairs, 0 for every other column of the family.
WarmStart exam_assignment_to_warm_start(const ExamAssignment& assignment, const Json& config, const Instance& instance);

/// Semantic kinds used by exam scenarios: reserved_virtual_slot and
/// slot_load_cap. Safe to call more than once.
void register_exam_domain(SemanticRegistry& registry = SemanticRegistry::global());

}  // namespace reopt
