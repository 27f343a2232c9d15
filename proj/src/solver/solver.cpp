#include "reopt/solver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <mutex>
#include <set>

#include <fmt/format.h>

#include "simplex.hpp"

namespace reopt {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

Json optional_number(const std::optional<double>& value) { return value ? bound_to_json(*value) : Json(); }

std::optional<double> optional_number_from(const Json& j) {
  if (j.is_null()) return std::nullopt;
  return bound_from_json(j);
}

struct Problem {
  std::vector<double> cost;
  std::vector<double> lower;
  std::vector<double> upper;
  std::vector<std::size_t> integers;
};

Problem problem_of(const Instance& instance, bool relax) {
  Problem p;
  for (std::size_t j = 0; j < instance.variables.size(); ++j) {
    const auto& v = instance.variables[j];
    p.cost.push_back(v.objective);
    double lo = v.lower;
    double up = v.upper;
    if (!relax && v.type != VarType::continuous) {
      // Integer columns only take integral values, so fractional bounds tighten.
      if (std::isfinite(lo)) lo = std::ceil(lo - 1e-9);
      if (std::isfinite(up)) up = std::floor(up + 1e-9);
      p.integers.push_back(j);
    }
    p.lower.push_back(lo);
    p.upper.push_back(up);
  }
  return p;
}

Assignment to_assignment(const Instance& instance, const std::vector<double>& x) {
  Assignment out;
  for (std::size_t j = 0; j < x.size(); ++j) out.emplace(instance.variables[j].key, x[j] == 0.0 ? 0.0 : x[j]);
  return out;
}

double objective_of(const std::vector<double>& cost, const std::vector<double>& x) {
  double total = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) total += cost[j] * x[j];
  return total;
}

double gap_of(double objective, double bound) {
  if (!std::isfinite(bound)) return kInfinity;
  return std::abs(objective - bound) / std::max(1.0, std::abs(objective));
}

struct Node {
  std::vector<double> lower;
  std::vector<double> upper;
  double bound;
  std::uint64_t id;
};

struct NodeOrder {
  bool operator()(const Node& a, const Node& b) const {
    if (a.bound != b.bound) return a.bound < b.bound;
    return a.id < b.id;
  }
};

class BranchAndBound {
 public:
  BranchAndBound(const Instance& instance, const SolverConfig& config, std::stop_token stop)
      : instance_(instance), config_(config), stop_(std::move(stop)), problem_(problem_of(instance, false)) {}

  SolveResult run(const WarmStart* warm_start) {
    start_ = Clock::now();
    hints_.assign(problem_.cost.size(), std::nullopt);
    if (warm_start) install(*warm_start);

    auto root = lp(problem_.lower, problem_.upper);
    ++nodes_;
    if (root.status == detail::LpStatus::unbounded) {
      result_.status = SolveStatus::unbounded;
      return finish(-kInfinity);
    }
    if (root.status == detail::LpStatus::infeasible) {
      result_.status = SolveStatus::infeasible;
      return finish(kInfinity);
    }
    if (root.status == detail::LpStatus::interrupted) return timed_out(-kInfinity);
    process({problem_.lower, problem_.upper, root.objective, next_id_++}, root);

    while (!open_empty()) {
      if (interrupted()) return timed_out(open_bound());
      Node node = pop();
      if (prunable(node.bound)) {
        pruned_bound_ = std::min(pruned_bound_, node.bound);
        continue;
      }
      auto relaxation = lp(node.lower, node.upper);
      ++nodes_;
      if (relaxation.status == detail::LpStatus::interrupted) {
        open_bound_extra_ = std::min(open_bound_extra_, node.bound);
        return timed_out(open_bound());
      }
      if (relaxation.status != detail::LpStatus::optimal) continue;
      node.bound = relaxation.objective;
      process(std::move(node), relaxation);
    }
    result_.status = incumbent_ ? SolveStatus::optimal : SolveStatus::infeasible;
    return finish(incumbent_ ? std::min(incumbent_objective_, pruned_bound_) : kInfinity);
  }

 private:
  bool interrupted() const { return stop_.stop_requested() || seconds_since(start_) > config_.time_limit; }

  detail::LpSolution lp(const std::vector<double>& lower, const std::vector<double>& upper) const {
    return detail::solve_bounded(problem_.cost, instance_.rows, lower, upper, [this] { return interrupted(); });
  }

  // Gap-based pruning: a node that cannot improve the incumbent by more than
  // the tolerance is dropped, and its bound is remembered for reporting.
  bool prunable(double bound) const {
    if (!incumbent_) return false;
    return incumbent_objective_ - bound <= config_.mip_gap_tolerance * std::max(1.0, std::abs(incumbent_objective_));
  }

  // Offers an integral LP point as incumbent. Integer columns are snapped to
  // the nearest integer first; if snapping breaks a row the raw point is
  // tried. An LP optimum that fails both is a numerical failure.
  void consider(const std::vector<double>& raw) {
    auto snapped = raw;
    for (auto j : problem_.integers) snapped[j] = std::round(snapped[j]);
    const std::vector<double>* candidates[] = {&snapped, &raw};
    for (const auto* candidate : candidates) {
      if (!check_feasible(instance_, to_assignment(instance_, *candidate), config_.feasibility_tolerance).empty()) {
        continue;
      }
      const double objective = objective_of(problem_.cost, *candidate);
      if (!incumbent_ || objective < incumbent_objective_) {
        incumbent_ = *candidate;
        incumbent_objective_ = objective;
      }
      return;
    }
    throw Error("NumericalFailure", "LP solution violates the model beyond the feasibility tolerance");
  }

  void install(const WarmStart& start) {
    const auto columns = instance_.column_map();
    std::vector<std::optional<double>> values(problem_.cost.size());
    for (const auto& [key, value] : start.values) {
      if (auto it = columns.find(key); it != columns.end()) values[it->second] = value;
    }
    hints_ = values;
    const bool complete = std::all_of(values.begin(), values.end(), [](const auto& v) { return v.has_value(); });
    if (complete) {
      std::vector<double> x;
      for (const auto& v : values) x.push_back(*v);
      if (check_feasible(instance_, to_assignment(instance_, x), config_.feasibility_tolerance).empty()) {
        incumbent_ = std::move(x);
        incumbent_objective_ = objective_of(problem_.cost, *incumbent_);
        return;
      }
    }
    // Fix the seeded integer values and let an LP fill in the rest.
    auto lower = problem_.lower;
    auto upper = problem_.upper;
    for (auto j : problem_.integers) {
      if (!values[j]) return;
      const double r = std::round(*values[j]);
      if (std::abs(r - *values[j]) > config_.feasibility_tolerance || r < lower[j] || r > upper[j]) return;
      lower[j] = upper[j] = r;
    }
    if (problem_.integers.empty()) return;
    auto completion = lp(lower, upper);
    if (completion.status != detail::LpStatus::optimal) return;
    try {
      consider(completion.x);
    } catch (const Error&) {
      // An unusable seed is only a missed shortcut.
    }
  }

  void process(Node node, const detail::LpSolution& relaxation) {
    if (prunable(node.bound)) {
      pruned_bound_ = std::min(pruned_bound_, node.bound);
      return;
    }
    // Most fractional integer column; ties go to the lowest column.
    std::optional<std::size_t> branch;
    double best = 0.0;
    for (auto j : problem_.integers) {
      const double f = relaxation.x[j] - std::floor(relaxation.x[j]);
      const double distance = std::min(f, 1.0 - f);
      if (distance > config_.feasibility_tolerance && distance > best) {
        best = distance;
        branch = j;
      }
    }
    if (!branch) {
      consider(relaxation.x);
      return;
    }
    const auto j = *branch;
    const double value = relaxation.x[j];
    Node down{node.lower, node.upper, node.bound, 0};
    down.upper[j] = std::floor(value);
    Node up{std::move(node.lower), std::move(node.upper), node.bound, 0};
    up.lower[j] = std::ceil(value);

    bool up_first = value - std::floor(value) >= 0.5;
    if (hints_[j]) up_first = *hints_[j] >= value;
    Node& first = up_first ? up : down;
    Node& second = up_first ? down : up;
    first.id = next_id_++;
    second.id = next_id_++;
    if (config_.node_selection == NodeSelection::depth_first) {
      stack_.push_back(std::move(second));
      stack_.push_back(std::move(first));
    } else {
      queue_.insert(std::move(first));
      queue_.insert(std::move(second));
    }
  }

  bool open_empty() const { return queue_.empty() && stack_.empty(); }

  Node pop() {
    if (config_.node_selection == NodeSelection::depth_first) {
      Node node = std::move(stack_.back());
      stack_.pop_back();
      return node;
    }
    return std::move(queue_.extract(queue_.begin()).value());
  }

  double open_bound() const {
    double bound = std::min(pruned_bound_, open_bound_extra_);
    for (const auto& node : queue_) bound = std::min(bound, node.bound);
    for (const auto& node : stack_) bound = std::min(bound, node.bound);
    if (incumbent_) bound = std::min(bound, incumbent_objective_);
    return bound;
  }

  SolveResult timed_out(double bound) {
    result_.status = incumbent_ ? SolveStatus::feasible_time_limit : SolveStatus::no_incumbent;
    return finish(bound);
  }

  SolveResult finish(double bound) {
    result_.best_bound = bound;
    if (incumbent_) {
      result_.assignment = to_assignment(instance_, *incumbent_);
      result_.objective = incumbent_objective_;
      result_.gap = gap_of(incumbent_objective_, bound);
    }
    result_.node_count = nodes_;
    result_.wall_time = seconds_since(start_);
    return result_;
  }

  const Instance& instance_;
  const SolverConfig& config_;
  std::stop_token stop_;
  Problem problem_;
  Clock::time_point start_;
  std::vector<std::optional<double>> hints_;
  std::optional<std::vector<double>> incumbent_;
  double incumbent_objective_ = kInfinity;
  double pruned_bound_ = kInfinity;
  double open_bound_extra_ = kInfinity;
  std::set<Node, NodeOrder> queue_;
  std::vector<Node> stack_;
  std::uint64_t next_id_ = 0;
  std::uint64_t nodes_ = 0;
  SolveResult result_;
};

std::mutex& backend_mutex() {
  static std::mutex mutex;
  return mutex;
}

std::map<std::string, SolverBackend, std::less<>>& backends() {
  static std::map<std::string, SolverBackend, std::less<>> registry = [] {
    std::map<std::string, SolverBackend, std::less<>> out;
    out["builtin"] = [](const Instance& instance, const SolverConfig& config, const WarmStart* warm,
                        std::stop_token stop) { return solve_mip(instance, config, warm, std::move(stop)); };
    out["lp-roundtrip"] = [](const Instance& instance, const SolverConfig& config, const WarmStart* warm,
                             std::stop_token stop) {
      // Names change on the way through the LP file; map them back.
      auto reread = read_lp(write_lp(instance));
      std::map<std::string, std::string> original;
      for (const auto& v : instance.variables) original[sanitize_lp_name(v.key)] = v.key;
      std::optional<WarmStart> renamed;
      if (warm) {
        renamed = WarmStart{{}, warm->source, warm->dropped};
        for (const auto& [key, value] : warm->values) renamed->values[sanitize_lp_name(key)] = value;
      }
      auto result = solve_mip(reread, config, renamed ? &*renamed : nullptr, std::move(stop));
      if (result.assignment) {
        Assignment mapped;
        for (const auto& [key, value] : *result.assignment) {
          auto it = original.find(key);
          mapped[it == original.end() ? key : it->second] = value;
        }
        result.assignment = std::move(mapped);
      }
      return result;
    };
    return out;
  }();
  return registry;
}

}  // namespace

std::string_view to_string(SolveStatus status) {
  switch (status) {
    case SolveStatus::optimal:
      return "optimal";
    case SolveStatus::feasible_time_limit:
      return "feasible_time_limit";
    case SolveStatus::infeasible:
      return "infeasible";
    case SolveStatus::unbounded:
      return "unbounded";
    case SolveStatus::no_incumbent:
      return "no_incumbent";
  }
  return "no_incumbent";
}

std::string_view to_string(NodeSelection selection) {
  return selection == NodeSelection::best_bound ? "best_bound" : "depth_first";
}

SolveStatus parse_solve_status(std::string_view text) {
  for (auto status : {SolveStatus::optimal, SolveStatus::feasible_time_limit, SolveStatus::infeasible,
                      SolveStatus::unbounded, SolveStatus::no_incumbent}) {
    if (to_string(status) == text) return status;
  }
  throw ParseError("status", fmt::format("unknown solve status '{}'", text));
}

NodeSelection parse_node_selection(std::string_view text) {
  if (text == "best_bound") return NodeSelection::best_bound;
  if (text == "depth_first") return NodeSelection::depth_first;
  throw Error("InvalidConfig", fmt::format("unknown node selection '{}'", text));
}

std::string_view to_string(WarmStartSource source) {
  switch (source) {
    case WarmStartSource::direct:
      return "direct";
    case WarmStartSource::heuristic:
      return "heuristic";
    case WarmStartSource::fix_and_release:
      return "fix_and_release";
  }
  return "direct";
}

void check_config(const SolverConfig& config) {
  if (!(config.time_limit > 0.0)) throw Error("InvalidConfig", "time_limit must be positive");
  if (!(config.mip_gap_tolerance > 0.0)) throw Error("InvalidConfig", "mip_gap_tolerance must be positive");
  if (!(config.feasibility_tolerance > 0.0)) throw Error("InvalidConfig", "feasibility_tolerance must be positive");
}

Json solve_result_to_json(const SolveResult& result) {
  Json out{{"status", to_string(result.status)},
           {"objective", optional_number(result.objective)},
           {"best_bound", bound_to_json(result.best_bound)},
           {"gap", optional_number(result.gap)},
           {"wall_time", result.wall_time},
           {"node_count", result.node_count},
           {"backend", result.backend}};
  out["assignment"] = result.assignment ? Json(*result.assignment) : Json();
  return out;
}

SolveResult solve_result_from_json(const Json& j) {
  SolveResult result;
  result.status = parse_solve_status(j.at("status").get<std::string>());
  result.objective = optional_number_from(j.value("objective", Json()));
  result.best_bound = bound_from_json(j.at("best_bound"));
  result.gap = optional_number_from(j.value("gap", Json()));
  result.wall_time = j.value("wall_time", 0.0);
  result.node_count = j.value("node_count", std::uint64_t{0});
  result.backend = j.value("backend", std::string("builtin"));
  if (auto it = j.find("assignment"); it != j.end() && !it->is_null()) result.assignment = it->get<Assignment>();
  return result;
}

SolveResult solve_lp(const Instance& instance, const SolverConfig& config, std::stop_token stop) {
  check_config(config);
  const auto start = Clock::now();
  auto p = problem_of(instance, true);
  auto lp = detail::solve_bounded(p.cost, instance.rows, p.lower, p.upper, [&] {
    return stop.stop_requested() || seconds_since(start) > config.time_limit;
  });
  SolveResult result;
  result.node_count = 1;
  switch (lp.status) {
    case detail::LpStatus::optimal:
      result.status = SolveStatus::optimal;
      result.assignment = to_assignment(instance, lp.x);
      result.objective = lp.objective;
      result.best_bound = lp.objective;
      result.gap = 0.0;
      break;
    case detail::LpStatus::infeasible:
      result.status = SolveStatus::infeasible;
      result.best_bound = kInfinity;
      break;
    case detail::LpStatus::unbounded:
      result.status = SolveStatus::unbounded;
      break;
    case detail::LpStatus::interrupted:
      result.status = SolveStatus::no_incumbent;
      break;
  }
  result.wall_time = seconds_since(start);
  return result;
}

SolveResult solve_mip(const Instance& instance, const SolverConfig& config, const WarmStart* warm_start,
                      std::stop_token stop) {
  check_config(config);
  BranchAndBound search(instance, config, std::move(stop));
  return search.run(warm_start);
}

std::string FeasibilityViolation::describe() const {
  switch (kind) {
    case Kind::missing:
      return fmt::format("{}: no value", key);
    case Kind::row:
      return fmt::format("{}: violated by {}", key, amount);
    case Kind::lower_bound:
      return fmt::format("{}: below lower bound by {}", key, amount);
    case Kind::upper_bound:
      return fmt::format("{}: above upper bound by {}", key, amount);
    case Kind::integrality:
      return fmt::format("{}: {} away from an integer", key, amount);
  }
  return key;
}

std::vector<FeasibilityViolation> check_feasible(const Instance& instance, const Assignment& assignment,
                                                 double tolerance) {
  using Kind = FeasibilityViolation::Kind;
  std::vector<FeasibilityViolation> out;
  std::vector<double> x(instance.variables.size(), 0.0);
  std::vector<bool> known(instance.variables.size(), false);
  for (std::size_t j = 0; j < instance.variables.size(); ++j) {
    const auto& v = instance.variables[j];
    auto it = assignment.find(v.key);
    if (it == assignment.end()) {
      out.push_back({Kind::missing, v.key, 0.0});
      continue;
    }
    x[j] = it->second;
    known[j] = true;
    if (x[j] < v.lower - tolerance) out.push_back({Kind::lower_bound, v.key, v.lower - x[j]});
    if (x[j] > v.upper + tolerance) out.push_back({Kind::upper_bound, v.key, x[j] - v.upper});
    if (v.type != VarType::continuous) {
      const double distance = std::abs(x[j] - std::round(x[j]));
      if (distance > tolerance) out.push_back({Kind::integrality, v.key, distance});
    }
  }
  for (const auto& row : instance.rows) {
    bool complete = true;
    double activity = 0.0;
    for (const auto& [j, a] : row.terms) {
      complete = complete && known[j];
      activity += a * x[j];
    }
    if (!complete) continue;
    double excess = 0.0;
    if (row.sense != Sense::greater_equal) excess = std::max(excess, activity - row.rhs);
    if (row.sense != Sense::less_equal) excess = std::max(excess, row.rhs - activity);
    if (excess > tolerance) out.push_back({Kind::row, row.key, excess});
  }
  return out;
}

double objective_value(const Instance& instance, const Assignment& assignment) {
  double total = 0.0;
  for (const auto& v : instance.variables) {
    if (auto it = assignment.find(v.key); it != assignment.end()) total += v.objective * it->second;
  }
  return total;
}

void register_backend(const std::string& name, SolverBackend backend) {
  std::lock_guard lock(backend_mutex());
  backends()[name] = std::move(backend);
}

std::vector<std::string> backend_names() {
  std::lock_guard lock(backend_mutex());
  std::vector<std::string> out;
  for (const auto& [name, _] : backends()) out.push_back(name);
  return out;
}

SolveResult solve_with(std::string_view backend, const Instance& instance, const SolverConfig& config,
                       const WarmStart* warm_start, std::stop_token stop) {
  SolverBackend chosen;
  {
    std::lock_guard lock(backend_mutex());
    auto it = backends().find(backend);
    if (it == backends().end()) throw Error("BackendUnavailable", fmt::format("no solver backend named '{}'", backend));
    chosen = it->second;
  }
  auto result = chosen(instance, config, warm_start, std::move(stop));
  result.backend = std::string(backend);
  return result;
}

}  // namespace reopt
