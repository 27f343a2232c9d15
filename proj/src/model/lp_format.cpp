#include <algorithm>
#include <cctype>
#include <cmath>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <fmt/format.h>

#include "reopt/model_io.hpp"

namespace reopt {

namespace {

bool lp_name_char(unsigned char c) {
  static constexpr std::string_view kExtra = "!\"#$%&()/,.;?@_`'{}|~";
  return std::isalnum(c) || kExtra.find(static_cast<char>(c)) != std::string_view::npos;
}

std::string number(double value) { return fmt::format("{}", value); }

void write_expression(std::ostringstream& out, const std::vector<std::pair<std::string, double>>& terms,
                      const std::string& fallback_name) {
  if (terms.empty()) {
    out << " 0 " << fallback_name;
    return;
  }
  bool first = true;
  for (const auto& [name, coefficient] : terms) {
    if (first) {
      out << (coefficient < 0 ? " - " : " ") << number(std::abs(coefficient)) << " " << name;
    } else {
      out << (coefficient < 0 ? " - " : " + ") << number(std::abs(coefficient)) << " " << name;
    }
    first = false;
  }
}

// --- reader --------------------------------------------------------------

enum class Section { none, objective, constraints, bounds, generals, binaries, end };

struct Token {
  enum Kind { name, number, op, colon, sign } kind;
  std::string text;
  double value = 0.0;
};

std::string lower(std::string_view text) {
  std::string out(text);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

std::vector<Token> tokenize(std::string_view line, std::size_t line_number) {
  std::vector<Token> tokens;
  std::size_t i = 0;
  while (i < line.size()) {
    const unsigned char c = line[i];
    if (std::isspace(c)) {
      ++i;
    } else if (c == '\\') {
      break;
    } else if (c == '<' || c == '>' || c == '=') {
      std::string op(1, static_cast<char>(c));
      if (i + 1 < line.size() && line[i + 1] == '=') {
        op += '=';
        ++i;
      }
      if (op == "=<") op = "<=";
      if (op == "=>") op = ">=";
      if (op == "<") op = "<=";
      if (op == ">") op = ">=";
      if (op == "==") op = "=";
      tokens.push_back({Token::op, op});
      ++i;
    } else if (c == ':') {
      tokens.push_back({Token::colon, ":"});
      ++i;
    } else if (c == '+' || c == '-') {
      // "-inf" / "+inf" are numbers.
      auto rest = lower(line.substr(i + 1, 8));
      if (rest.rfind("infinity", 0) == 0 || rest.rfind("inf", 0) == 0) {
        const auto len = rest.rfind("infinity", 0) == 0 ? 8 : 3;
        tokens.push_back({Token::number, std::string(line.substr(i, len + 1)), c == '-' ? -kInfinity : kInfinity});
        i += len + 1;
      } else {
        tokens.push_back({Token::sign, std::string(1, static_cast<char>(c))});
        ++i;
      }
    } else if (std::isdigit(c) || (c == '.' && i + 1 < line.size() && std::isdigit(line[i + 1]))) {
      std::size_t j = i;
      while (j < line.size() && (std::isdigit(line[j]) || line[j] == '.')) ++j;
      if (j < line.size() && (line[j] == 'e' || line[j] == 'E')) {
        std::size_t k = j + 1;
        if (k < line.size() && (line[k] == '+' || line[k] == '-')) ++k;
        if (k < line.size() && std::isdigit(line[k])) {
          j = k;
          while (j < line.size() && std::isdigit(line[j])) ++j;
        }
      }
      const std::string text(line.substr(i, j - i));
      tokens.push_back({Token::number, text, std::stod(text)});
      i = j;
    } else if (lp_name_char(c)) {
      std::size_t j = i;
      while (j < line.size() && lp_name_char(line[j]) && line[j] != ':') ++j;
      std::string text(line.substr(i, j - i));
      const auto l = lower(text);
      if (l == "inf" || l == "infinity") {
        tokens.push_back({Token::number, text, kInfinity});
      } else {
        tokens.push_back({Token::name, std::move(text)});
      }
      i = j;
    } else {
      throw ParseError(fmt::format("line {}", line_number), fmt::format("unexpected character '{}'", line[i]));
    }
  }
  return tokens;
}

std::optional<Section> section_of(std::string_view raw) {
  auto text = lower(raw);
  text.erase(std::remove_if(text.begin(), text.end(), [](unsigned char c) { return std::isspace(c); }), text.end());
  if (text == "minimize" || text == "minimise" || text == "min" || text == "minimum") return Section::objective;
  if (text == "maximize" || text == "maximise" || text == "max" || text == "maximum") {
    throw ParseError("objective", "maximization is not supported");
  }
  if (text == "subjectto" || text == "st" || text == "s.t." || text == "such that" || text == "suchthat") {
    return Section::constraints;
  }
  if (text == "bounds" || text == "bound") return Section::bounds;
  if (text == "generals" || text == "general" || text == "gen" || text == "integers") return Section::generals;
  if (text == "binaries" || text == "binary" || text == "bin") return Section::binaries;
  if (text == "end") return Section::end;
  return std::nullopt;
}

struct LinearParse {
  std::vector<std::pair<std::string, double>> terms;
  std::optional<std::string> op;
  double rhs = 0.0;
};

/// "[name:] (+|-)? number? name ... (op (+|-)? number)?"
LinearParse parse_linear(const std::vector<Token>& tokens, std::size_t begin, const std::string& where) {
  LinearParse out;
  double sign = 1.0;
  std::optional<double> pending;
  std::size_t i = begin;
  for (; i < tokens.size(); ++i) {
    const auto& t = tokens[i];
    if (t.kind == Token::sign) {
      sign = t.text == "-" ? -sign : sign;
    } else if (t.kind == Token::number) {
      pending = pending.value_or(1.0) * t.value;
    } else if (t.kind == Token::name) {
      out.terms.emplace_back(t.text, sign * pending.value_or(1.0));
      sign = 1.0;
      pending.reset();
    } else if (t.kind == Token::op) {
      out.op = t.text;
      ++i;
      break;
    } else {
      throw ParseError(where, "unexpected ':'");
    }
  }
  if (pending) out.terms.emplace_back("", sign * *pending);  // constant term
  if (out.op) {
    double rsign = 1.0;
    bool seen = false;
    for (; i < tokens.size(); ++i) {
      if (tokens[i].kind == Token::sign) {
        rsign = tokens[i].text == "-" ? -rsign : rsign;
      } else if (tokens[i].kind == Token::number && !seen) {
        out.rhs = rsign * tokens[i].value;
        seen = true;
      } else {
        throw ParseError(where, "malformed right-hand side");
      }
    }
    if (!seen) throw ParseError(where, "missing right-hand side");
  }
  return out;
}

}  // namespace

std::string sanitize_lp_name(std::string_view name) {
  std::string out;
  out.reserve(name.size() + 1);
  for (unsigned char c : name) out += lp_name_char(c) ? static_cast<char>(c) : '_';
  if (out.empty() || std::isdigit(static_cast<unsigned char>(out.front())) || out.front() == '.') out.insert(0, "_");
  // Names starting with e/E followed by a digit read as exponents in some parsers.
  if (out.size() > 1 && (out[0] == 'e' || out[0] == 'E') && std::isdigit(static_cast<unsigned char>(out[1]))) {
    out.insert(0, "_");
  }
  return out;
}

std::string write_lp(const Instance& instance, std::string_view problem_name) {
  std::vector<std::string> names;
  std::unordered_set<std::string> used;
  auto unique = [&](std::string name) {
    std::string candidate = name;
    for (int n = 1; !used.insert(candidate).second; ++n) candidate = fmt::format("{}#{}", name, n);
    return candidate;
  };
  for (const auto& v : instance.variables) names.push_back(unique(sanitize_lp_name(v.key)));
  const std::string fallback = names.empty() ? std::string("_dummy") : names.front();

  std::ostringstream out;
  out << "\\ Problem: " << problem_name << "\n";
  out << "Minimize\n obj:";
  std::vector<std::pair<std::string, double>> objective;
  // Every column goes into the objective, zero or not, so a reader meets the
  // columns in instance order and none goes missing.
  for (std::size_t j = 0; j < instance.variables.size(); ++j) objective.emplace_back(names[j], instance.variables[j].objective);
  write_expression(out, objective, fallback);
  out << "\nSubject To\n";
  std::unordered_set<std::string> row_names;
  for (const auto& row : instance.rows) {
    auto name = sanitize_lp_name(row.key);
    for (int n = 1; !row_names.insert(name).second; ++n) name = fmt::format("{}#{}", sanitize_lp_name(row.key), n);
    std::vector<std::pair<std::string, double>> terms;
    for (const auto& [column, coefficient] : row.terms) terms.emplace_back(names[column], coefficient);
    out << " " << name << ":";
    write_expression(out, terms, fallback);
    out << " " << to_string(row.sense) << " " << number(row.rhs) << "\n";
  }
  out << "Bounds\n";
  std::vector<std::string> generals;
  std::vector<std::string> binaries;
  for (std::size_t j = 0; j < instance.variables.size(); ++j) {
    const auto& v = instance.variables[j];
    const bool plain_binary = v.type == VarType::binary && v.lower == 0.0 && v.upper == 1.0;
    if (plain_binary) {
      binaries.push_back(names[j]);
      continue;
    }
    if (v.type != VarType::continuous) generals.push_back(names[j]);
    if (v.lower == -kInfinity && v.upper == kInfinity) {
      out << " " << names[j] << " free\n";
    } else if (v.lower == v.upper) {
      out << " " << names[j] << " = " << number(v.lower) << "\n";
    } else if (!(v.lower == 0.0 && v.upper == kInfinity)) {
      out << " " << (v.lower == -kInfinity ? std::string("-inf") : number(v.lower)) << " <= " << names[j] << " <= "
          << (v.upper == kInfinity ? std::string("+inf") : number(v.upper)) << "\n";
    }
  }
  if (!generals.empty()) {
    out << "Generals\n";
    for (const auto& g : generals) out << " " << g << "\n";
  }
  if (!binaries.empty()) {
    out << "Binaries\n";
    for (const auto& b : binaries) out << " " << b << "\n";
  }
  out << "End\n";
  return out.str();
}

Instance read_lp(std::string_view text) {
  Instance instance;
  std::unordered_map<std::string, std::size_t> columns;
  std::unordered_set<std::string> bounded;
  auto column = [&](const std::string& name) {
    auto [it, inserted] = columns.emplace(name, instance.variables.size());
    if (inserted) instance.variables.push_back({name, VarType::continuous, 0.0, kInfinity, 0.0});
    return it->second;
  };

  Section section = Section::none;
  std::vector<Token> pending;  // statement tokens accumulated across lines
  auto flush_constraint = [&](std::size_t line_number) {
    if (pending.empty()) return;
    const auto where = fmt::format("line {}", line_number);
    std::string name = fmt::format("R{}", instance.rows.size() + 1);
    std::size_t begin = 0;
    if (pending.size() >= 2 && pending[0].kind == Token::name && pending[1].kind == Token::colon) {
      name = pending[0].text;
      begin = 2;
    }
    auto parsed = parse_linear(pending, begin, where);
    if (!parsed.op) throw ParseError(where, "constraint without a sense");
    InstanceRow row;
    row.key = name;
    row.sense = parse_sense(*parsed.op);
    row.rhs = parsed.rhs;
    for (const auto& [var, coefficient] : parsed.terms) {
      if (var.empty()) {
        row.rhs -= coefficient;
        continue;
      }
      const auto j = column(var);
      auto it = std::find_if(row.terms.begin(), row.terms.end(), [&](const auto& t) { return t.first == j; });
      if (it == row.terms.end()) {
        row.terms.emplace_back(j, coefficient);
      } else {
        it->second += coefficient;
      }
    }
    instance.rows.push_back(std::move(row));
    pending.clear();
  };
  auto flush_objective = [&](std::size_t line_number) {
    if (pending.empty()) return;
    std::size_t begin = 0;
    if (pending.size() >= 2 && pending[0].kind == Token::name && pending[1].kind == Token::colon) begin = 2;
    auto parsed = parse_linear(pending, begin, fmt::format("line {}", line_number));
    for (const auto& [var, coefficient] : parsed.terms) {
      if (!var.empty()) instance.variables[column(var)].objective += coefficient;
    }
    pending.clear();
  };

  std::istringstream lines{std::string(text)};
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(lines, line)) {
    ++line_number;
    if (auto next = section_of(line)) {
      if (section == Section::objective) flush_objective(line_number);
      if (section == Section::constraints) flush_constraint(line_number);
      section = *next;
      if (section == Section::end) break;
      continue;
    }
    auto tokens = tokenize(line, line_number);
    if (tokens.empty()) continue;
    const auto where = fmt::format("line {}", line_number);
    switch (section) {
      case Section::none:
        throw ParseError(where, "content before the objective section");
      case Section::objective:
        pending.insert(pending.end(), tokens.begin(), tokens.end());
        break;
      case Section::constraints:
        // A new "name:" starts a new constraint; otherwise lines continue one.
        if (tokens.size() >= 2 && tokens[0].kind == Token::name && tokens[1].kind == Token::colon) {
          flush_constraint(line_number);
        }
        pending.insert(pending.end(), tokens.begin(), tokens.end());
        if (std::any_of(tokens.begin(), tokens.end(), [](const Token& t) { return t.kind == Token::op; }) &&
            tokens.back().kind == Token::number) {
          flush_constraint(line_number);
        }
        break;
      case Section::bounds: {
        if (tokens.size() == 2 && tokens[0].kind == Token::name && lower(tokens[1].text) == "free") {
          auto& v = instance.variables[column(tokens[0].text)];
          v.lower = -kInfinity;
          v.upper = kInfinity;
          bounded.insert(tokens[0].text);
          break;
        }
        // Normalise signs into the numbers.
        std::vector<Token> merged;
        for (std::size_t i = 0; i < tokens.size(); ++i) {
          if (tokens[i].kind == Token::sign && i + 1 < tokens.size() && tokens[i + 1].kind == Token::number) {
            Token t = tokens[i + 1];
            if (tokens[i].text == "-") t.value = -t.value;
            merged.push_back(t);
            ++i;
          } else {
            merged.push_back(tokens[i]);
          }
        }
        auto as_bound = [&](const Token& t) {
          if (t.kind != Token::number) throw ParseError(where, "expected a bound value");
          return t.value;
        };
        if (merged.size() == 5 && merged[2].kind == Token::name) {
          auto& v = instance.variables[column(merged[2].text)];
          v.lower = as_bound(merged[0]);
          v.upper = as_bound(merged[4]);
          bounded.insert(merged[2].text);
        } else if (merged.size() == 3 && merged[0].kind == Token::name) {
          auto& v = instance.variables[column(merged[0].text)];
          const double value = as_bound(merged[2]);
          if (merged[1].text == "<=") v.upper = value;
          else if (merged[1].text == ">=") v.lower = value;
          else v.lower = v.upper = value;
          bounded.insert(merged[0].text);
        } else if (merged.size() == 3 && merged[2].kind == Token::name) {
          auto& v = instance.variables[column(merged[2].text)];
          const double value = as_bound(merged[0]);
          if (merged[1].text == "<=") v.lower = value;
          else if (merged[1].text == ">=") v.upper = value;
          else v.lower = v.upper = value;
          bounded.insert(merged[2].text);
        } else {
          throw ParseError(where, "unrecognised bound");
        }
        break;
      }
      case Section::generals:
      case Section::binaries:
        for (const auto& t : tokens) {
          if (t.kind != Token::name) throw ParseError(where, "expected variable names");
          auto& v = instance.variables[column(t.text)];
          if (section == Section::generals) {
            v.type = VarType::integer;
          } else {
            v.type = VarType::binary;
            if (!bounded.count(t.text)) v.upper = 1.0;
          }
        }
        break;
      case Section::end:
        break;
    }
  }
  if (section == Section::objective) flush_objective(line_number);
  if (section == Section::constraints) flush_constraint(line_number);
  return instance;
}

}  // namespace reopt
