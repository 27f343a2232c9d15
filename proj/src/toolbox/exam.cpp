#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "reopt/model_io.hpp"
#include "reopt/toolbox.hpp"

namespace reopt {

void ExamWarmStartParams::check() const {
  if (!std::is_sorted(slots.begin(), slots.end()) || std::adjacent_find(slots.begin(), slots.end()) != slots.end()) {
    throw Error("InvalidInput", "slots must be strictly ascending");
  }
  std::set<int> covered;
  for (const auto& [day, members] : days) {
    for (int s : members) {
      if (!std::binary_search(slots.begin(), slots.end(), s)) {
        throw Error("InvalidInput", fmt::format("day {} lists unknown slot {}", day, s));
      }
      if (!covered.insert(s).second) throw Error("InvalidInput", fmt::format("slot {} belongs to two days", s));
    }
  }
  if (!days.empty() && covered.size() != slots.size()) throw Error("InvalidInput", "days do not cover every slot");
  std::set<int> pinned;
  for (const auto& [block, s] : reserved) {
    if (!enrollment.count(block)) throw Error("InvalidInput", fmt::format("reserved block {} is unknown", block));
    if (!std::binary_search(slots.begin(), slots.end(), s)) {
      throw Error("InvalidInput", fmt::format("reserved slot {} is unknown", s));
    }
    if (!pinned.insert(s).second) throw Error("InvalidInput", fmt::format("slot {} is reserved twice", s));
  }
  for (const auto& [block, e] : enrollment) {
    if (e < 0) throw Error("InvalidInput", fmt::format("block {} has negative enrollment", block));
  }
  for (const auto& [day, cap] : day_caps) {
    if (!days.count(day)) throw Error("InvalidInput", fmt::format("cap for unknown day {}", day));
  }
}

ExamAssignment exam_heuristic_warm_start(const ExamWarmStartParams& params) {
  if (params.enrollment.size() > params.slots.size()) {
    throw Error("InfeasibleInput", fmt::format("{} blocks cannot fit into {} slots", params.enrollment.size(),
                                               params.slots.size()));
  }
  params.check();

  ExamAssignment x;
  std::set<int> free(params.slots.begin(), params.slots.end());
  auto place = [&](const std::string& block, int slot, ExamStage stage) {
    x.slot[block] = slot;
    x.stage[block] = stage;
    free.erase(slot);
  };
  // enrollment is a map, so iteration is already by ascending block id
  auto unassigned = [&] {
    std::vector<std::string> out;
    for (const auto& [block, e] : params.enrollment) {
      if (!x.slot.count(block)) out.push_back(block);
    }
    return out;
  };
  auto e = [&](const std::string& block) { return params.enrollment.at(block); };

  for (const auto& [block, slot] : params.reserved) place(block, slot, ExamStage::reserved);

  if (params.large_threshold) {
    auto large = unassigned();
    large.erase(std::remove_if(large.begin(), large.end(), [&](const auto& b) { return e(b) < *params.large_threshold; }),
                large.end());
    std::stable_sort(large.begin(), large.end(), [&](const auto& a, const auto& b) { return e(a) > e(b); });
    for (const auto& block : large) {
      if (!free.empty() && *free.begin() < params.cutoff) place(block, *free.begin(), ExamStage::front_load);
    }
  }

  for (const auto& [day, cap] : params.day_caps) {
    const auto& members = params.days.at(day);
    const std::set<int> day_slots(members.begin(), members.end());
    long load = 0;
    for (const auto& [block, slot] : x.slot) {
      if (day_slots.count(slot)) load += e(block);
    }
    auto order = unassigned();
    std::stable_sort(order.begin(), order.end(), [&](const auto& a, const auto& b) { return e(a) < e(b); });
    for (const auto& block : order) {
      auto slot = std::find_if(free.begin(), free.end(), [&](int s) { return day_slots.count(s) > 0; });
      if (slot == free.end() || load + e(block) > cap) break;
      load += e(block);
      place(block, *slot, ExamStage::day_cap);
    }
  }

  for (const auto& block : unassigned()) {
    auto base = params.base_assignment.find(block);
    if (base != params.base_assignment.end() && free.count(base->second)) {
      place(block, base->second, ExamStage::fallback);
    } else {
      place(block, *free.begin(), ExamStage::fallback);
    }
  }
  return x;
}

// --- binding to model state ---------------------------------------------------------

namespace {

std::string field(const Json& config, const char* key, const char* fallback) {
  return config.value(key, std::string(fallback));
}

int as_slot(const std::string& id) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(id, &used);
    if (used == id.size()) return v;
  } catch (const std::exception&) {
  }
  throw Error("InvalidInput", fmt::format("slot id '{}' is not an integer", id));
}

std::string slot_id(double v) { return std::to_string(static_cast<long>(std::llround(v))); }

const KeyedValues& keyed(const ModelState& state, const std::string& name) {
  const auto* p = state.find_parameter(name);
  if (!p || !std::holds_alternative<KeyedValues>(p->value)) {
    throw Error("InvalidInput", fmt::format("exam heuristic needs keyed parameter '{}'", name));
  }
  return std::get<KeyedValues>(p->value);
}

std::optional<double> scalar(const ModelState& state, const std::string& name) {
  const auto* p = state.find_parameter(name);
  if (!p) return std::nullopt;
  if (!std::holds_alternative<double>(p->value)) {
    throw Error("InvalidInput", fmt::format("exam heuristic needs scalar parameter '{}'", name));
  }
  return std::get<double>(p->value);
}

const KeyedValues* keyed_if(const ModelState& state, const std::string& name) {
  const auto* p = state.find_parameter(name);
  if (!p) return nullptr;
  return &keyed(state, name);
}

}  // namespace

ExamWarmStartParams exam_params_from_state(const Json& config, const ModelState& state, const Assignment& prior) {
  ExamWarmStartParams params;
  const auto family = field(config, "family", "x");
  for (const auto& [key, value] : keyed(state, field(config, "enrollment", "enrollment"))) {
    params.enrollment[key.at(0)] = std::lround(value);
  }
  for (const auto& [key, day] : keyed(state, field(config, "slot_day", "slot_day"))) {
    const int s = as_slot(key.at(0));
    params.slots.push_back(s);
    params.days[slot_id(day)].push_back(s);
  }
  std::sort(params.slots.begin(), params.slots.end());
  if (const auto* reserved = keyed_if(state, field(config, "reserved", "reserved_slot"))) {
    for (const auto& [key, slot] : *reserved) params.reserved[key.at(0)] = static_cast<int>(std::lround(slot));
  }
  if (auto tau = scalar(state, field(config, "large_threshold", "large_threshold")); tau && std::isfinite(*tau)) {
    params.large_threshold = std::lround(*tau);
  }
  params.cutoff = params.slots.empty() ? 0 : params.slots.front();
  if (auto c = scalar(state, field(config, "cutoff", "cutoff_slot"))) params.cutoff = static_cast<int>(std::lround(*c));
  if (const auto* caps = keyed_if(state, field(config, "day_cap", "day_cap"))) {
    for (const auto& [key, cap] : *caps) params.day_caps[key.at(0)] = std::lround(cap);
  }
  for (const auto& [flat, value] : prior) {
    if (value < 0.5) continue;
    auto [name, index] = parse_flat_key(flat);
    if (name != family || index.size() != 2) continue;
    params.base_assignment[index[0]] = as_slot(index[1]);
  }
  return params;
}

WarmStart exam_assignment_to_warm_start(const ExamAssignment& assignment, const Json& config, const Instance& instance) {
  const auto family = field(config, "family", "x");
  WarmStart start;
  start.source = WarmStartSource::heuristic;
  for (const auto& v : instance.variables) {
    auto [name, index] = parse_flat_key(v.key);
    if (name != family || index.size() != 2) continue;
    auto it = assignment.slot.find(index[0]);
    start.values[v.key] = it != assignment.slot.end() && std::to_string(it->second) == index[1] ? 1.0 : 0.0;
  }
  start.coverage = instance.variables.empty() ? 1.0 : double(start.values.size()) / double(instance.variables.size());
  return start;
}

// --- semantic kinds ------------------------------------------------------------------

namespace {

std::string payload_name(const Json& payload, const char* key, const char* fallback) {
  if (!payload.is_object()) throw Error("InvalidModel", "semantic payload must be an object");
  return payload.value(key, std::string(fallback));
}

// One row per virtual block: x(v, reserved slot).
std::vector<SemanticRow> reserved_rows(const Json& payload, const ModelState& state) {
  const auto family = payload_name(payload, "family", "x");
  const auto* reserved = state.find_parameter(payload_name(payload, "reserved", "reserved_slot"));
  std::vector<SemanticRow> rows;
  if (!reserved) return rows;
  for (const auto& [key, slot] : std::get<KeyedValues>(reserved->value)) {
    rows.push_back({key, {SemanticTerm{family, {key.at(0), slot_id(slot)}, 1.0}}});
  }
  return rows;
}

// One row per capped day: sum of e(b) x(b,s) over the day's slots.
std::vector<SemanticRow> load_rows(const Json& payload, const ModelState& state) {
  const auto family_name = payload_name(payload, "family", "x");
  const auto* family = state.find_variable_family(family_name);
  if (!family) throw Error("UnresolvedReference", fmt::format("slot_load_cap: unknown family '{}'", family_name));
  const auto& enrollment = keyed(state, payload_name(payload, "enrollment", "enrollment"));
  const auto& slot_day = keyed(state, payload_name(payload, "slot_day", "slot_day"));
  const auto* caps = state.find_parameter(payload_name(payload, "day_cap", "day_cap"));
  std::vector<SemanticRow> rows;
  if (!caps) return rows;
  for (const auto& [day_key, cap] : std::get<KeyedValues>(caps->value)) {
    SemanticRow row{day_key, {}};
    for (const auto& index : family->index_set) {
      auto d = slot_day.find({index.at(1)});
      if (d == slot_day.end() || slot_id(d->second) != day_key.at(0)) continue;
      auto e = enrollment.find({index.at(0)});
      const double weight = e == enrollment.end() ? 0.0 : e->second;
      if (weight != 0.0) row.terms.push_back({family_name, index, weight});
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

void register_exam_domain(SemanticRegistry& registry) {
  if (!registry.contains("reserved_virtual_slot")) {
    registry.register_kind("reserved_virtual_slot", reserved_rows, {"reserved_slot"});
  }
  if (!registry.contains("slot_load_cap")) {
    registry.register_kind("slot_load_cap", load_rows, {"enrollment", "slot_day", "day_cap"});
  }
}

}  // namespace reopt
