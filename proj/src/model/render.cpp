#include <sstream>

#include <fmt/format.h>

#include "reopt/model_io.hpp"

namespace reopt {

namespace {

constexpr std::string_view kAllowedOps[] = {
    "UPDATE_PARAMETER",           "UPDATE_BOUND",           "UPDATE_CONSTRAINT_RHS",
    "UPDATE_CONSTRAINT_LHS",      "UPDATE_OBJECTIVE_COEFF", "UPDATE_OBJECTIVE_WEIGHT",
    "UPDATE_COEFFICIENT",         "FIX_VARIABLES_BY_PATTERN", "UPDATE_CONSTRAINT_RHS_BY_PATTERN",
    "ADD_VARIABLE_FAMILY",        "ADD_CONSTRAINT_FAMILY",  "REMOVE_CONSTRAINT_FAMILY",
    "ADD_OBJECTIVE_COMPONENT",
};

std::string bound_text(double value) {
  if (value == kInfinity) return "inf";
  if (value == -kInfinity) return "-inf";
  return fmt::format("{}", value);
}

std::string coef_text(const CoefExpr& expr) {
  if (const auto* literal = std::get_if<double>(&expr)) return fmt::format("{}", *literal);
  const auto& ref = std::get<ParamRef>(expr);
  if (ref.key.empty()) return ref.parameter;
  return fmt::format("{}[{}]", ref.parameter, fmt::join(ref.key, ","));
}

std::string tags_text(const std::set<std::string>& tags) {
  return tags.empty() ? "-" : fmt::format("{}", fmt::join(tags, ", "));
}

void header(std::ostream& out, std::string_view name, std::string_view summary, const std::string& description,
            const std::set<std::string>& tags) {
  out << "- " << name << " [" << summary << "]\n";
  out << "  desc: " << (description.empty() ? "-" : description) << "\n";
  out << "  tags: " << tags_text(tags) << "\n";
}

template <typename Items, typename Line>
void capped(std::ostream& out, const Items& items, std::size_t cap, std::string_view label, Line&& line) {
  std::size_t shown = 0;
  for (const auto& item : items) {
    if (shown == cap) break;
    out << "    " << line(item) << "\n";
    ++shown;
  }
  if (items.size() > shown) {
    out << "    " << kTruncationMarker << " " << items.size() - shown << " more " << label << "\n";
  }
}

}  // namespace

std::string render_for_planner(const ModelState& state, const RenderOptions& options) {
  std::ostringstream out;
  const auto cap = options.index_cap;
  out << "# Model representation (version " << state.version << ", sense minimize)\n";

  out << "\n## Parameters\n";
  for (const auto& p : state.parameters) {
    std::visit(
        [&](const auto& value) {
          using T = std::decay_t<decltype(value)>;
          if constexpr (std::is_same_v<T, double>) {
            header(out, p.name, "scalar", p.description, p.tags);
            out << "  value: " << fmt::format("{}", value) << "\n";
          } else if constexpr (std::is_same_v<T, KeyedValues>) {
            header(out, p.name, fmt::format("keyed, {} entries", value.size()), p.description, p.tags);
            out << "  values:\n";
            capped(out, value, cap, "entries",
                   [](const auto& kv) { return fmt::format("({}) = {}", format_key(kv.first), kv.second); });
          } else {
            header(out, p.name, fmt::format("key list, {} keys", value.size()), p.description, p.tags);
            out << "  keys:\n";
            capped(out, value, cap, "keys", [](const IndexKey& k) { return fmt::format("({})", format_key(k)); });
          }
        },
        p.value);
  }

  out << "\n## Variable families\n";
  for (const auto& v : state.variable_families) {
    header(out, v.name,
           fmt::format("{}, {} indices, default bounds [{}, {}]", to_string(v.var_type), v.index_set.size(),
                       bound_text(v.default_bounds.lower), bound_text(v.default_bounds.upper)),
           v.description, v.tags);
    out << "  index_set:\n";
    capped(out, v.index_set, cap, "indices", [](const IndexKey& k) { return fmt::format("({})", format_key(k)); });
    if (!v.bound_overrides.empty()) {
      out << "  bound_overrides:\n";
      capped(out, v.bound_overrides, cap, "overrides", [](const auto& kv) {
        return fmt::format("({}) in [{}, {}]", format_key(kv.first), bound_text(kv.second.lower),
                           bound_text(kv.second.upper));
      });
    }
  }

  out << "\n## Constraint families\n";
  for (const auto& c : state.constraint_families) {
    std::string lhs = std::visit(
        [](const auto& spec) -> std::string {
          using T = std::decay_t<decltype(spec)>;
          if constexpr (std::is_same_v<T, ExplicitTerms>) {
            return "explicit_terms";
          } else if constexpr (std::is_same_v<T, IndexedSum>) {
            return fmt::format("indexed_sum of {} matching positions [{}] with coefficient {}", spec.family,
                               fmt::join(spec.match_positions, ","), coef_text(spec.coefficient));
          } else {
            return fmt::format("semantic kind {} payload {}", spec.kind, spec.payload.dump());
          }
        },
        c.lhs);
    header(out, c.name, fmt::format("{}, sense {}, {} rows", lhs, to_string(c.sense), c.index_set.size()),
           c.description, c.tags);
    if (c.rhs.uniform) out << "  rhs: " << coef_text(*c.rhs.uniform) << "\n";
    if (!c.rhs.rows.empty()) {
      out << "  rhs rows:\n";
      capped(out, c.rhs.rows, cap, "rows",
             [](const auto& kv) { return fmt::format("({}) = {}", format_key(kv.first), coef_text(kv.second)); });
    }
    out << "  rows:\n";
    capped(out, c.index_set, cap, "rows", [](const IndexKey& k) { return fmt::format("({})", format_key(k)); });
  }

  out << "\n## Objective components\n";
  for (const auto& o : state.objective_components) {
    header(out, o.name, fmt::format("weight {}, {} terms", o.weight, o.terms.size()), o.description, o.tags);
    out << "  terms:\n";
    capped(out, o.terms, cap, "terms", [](const ObjectiveTerm& t) {
      return fmt::format("{} * {}{}", coef_text(t.coefficient), t.family,
                         t.index ? fmt::format("({})", format_key(*t.index)) : std::string("[all]"));
    });
    if (!o.coefficient_overrides.empty()) {
      out << "  coefficient_overrides:\n";
      capped(out, o.coefficient_overrides, cap, "overrides",
             [](const auto& kv) { return fmt::format("{} = {}", kv.first, kv.second); });
    }
  }

  out << "\n## Entity registry\n";
  for (const auto& [label, id] : state.entity_registry) out << "- " << label << " -> " << id << "\n";

  out << "\n## Allowed patch operations\n";
  for (auto op : kAllowedOps) out << "- " << op << "\n";
  return out.str();
}

}  // namespace reopt
