#include "simplex.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

#include <fmt/format.h>

namespace reopt::detail {

namespace {

constexpr double kPivotEps = 1e-9;
constexpr double kCostEps = 1e-9;
constexpr double kZero = 1e-12;
constexpr int kStallLimit = 50;

// x_var = offset + sign * column
struct Column {
  std::size_t var;
  double sign;
};

struct Row {
  std::vector<double> coef;  // over structural columns
  Sense sense;
  double rhs;
};

class Tableau {
 public:
  Tableau(std::size_t rows, std::size_t cols) : m_(rows), width_(cols + 1), data_((rows + 2) * (cols + 1), 0.0) {}

  double& at(std::size_t r, std::size_t c) { return data_[r * width_ + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * width_ + c]; }
  double& rhs(std::size_t r) { return at(r, width_ - 1); }
  std::size_t cols() const { return width_ - 1; }
  std::size_t rows() const { return m_; }
  // Row m_ holds phase-2 reduced costs, row m_+1 phase-1 reduced costs.
  std::size_t cost_row() const { return m_; }
  std::size_t phase1_row() const { return m_ + 1; }

  void pivot(std::size_t r, std::size_t c) {
    double* pr = &data_[r * width_];
    const double inv = 1.0 / pr[c];
    for (std::size_t j = 0; j < width_; ++j) pr[j] *= inv;
    pr[c] = 1.0;
    for (std::size_t i = 0; i < m_ + 2; ++i) {
      if (i == r) continue;
      double* pi = &data_[i * width_];
      const double factor = pi[c];
      if (factor == 0.0) continue;
      for (std::size_t j = 0; j < width_; ++j) {
        if (pr[j] != 0.0) pi[j] -= factor * pr[j];
      }
      pi[c] = 0.0;
    }
  }

 private:
  std::size_t m_;
  std::size_t width_;
  std::vector<double> data_;
};

enum class Outcome { optimal, unbounded, interrupted };

Outcome iterate(Tableau& t, std::vector<std::size_t>& basis, std::size_t objective_row, std::size_t usable_cols,
                const std::function<bool()>& interrupted, std::size_t& iterations) {
  const std::size_t limit = 50000 + 200 * (t.rows() + t.cols());
  bool bland = false;
  int stalled = 0;
  while (true) {
    if (++iterations % 32 == 0 && interrupted && interrupted()) return Outcome::interrupted;
    if (iterations > limit) throw Error("NumericalFailure", "simplex iteration limit reached");

    std::size_t enter = usable_cols;
    double best = -kCostEps;
    for (std::size_t j = 0; j < usable_cols; ++j) {
      const double d = t.at(objective_row, j);
      if (d < best) {
        enter = j;
        if (bland) break;
        best = d;
      }
    }
    if (enter == usable_cols) return Outcome::optimal;

    std::size_t leave = t.rows();
    double ratio = 0.0;
    for (std::size_t i = 0; i < t.rows(); ++i) {
      const double a = t.at(i, enter);
      if (a <= kPivotEps) continue;
      const double r = std::max(t.rhs(i), 0.0) / a;
      if (leave == t.rows() || r < ratio - kZero * (1.0 + ratio) ||
          (r <= ratio + kZero * (1.0 + ratio) && basis[i] < basis[leave])) {
        leave = i;
        ratio = r;
      }
    }
    if (leave == t.rows()) return Outcome::unbounded;
    if (ratio <= kZero) {
      if (++stalled > kStallLimit) bland = true;
    } else {
      stalled = 0;
    }
    t.pivot(leave, enter);
    basis[leave] = enter;
  }
}

}  // namespace

LpSolution solve_bounded(const std::vector<double>& cost, const std::vector<InstanceRow>& rows,
                         const std::vector<double>& lower, const std::vector<double>& upper,
                         const std::function<bool()>& interrupted) {
  const std::size_t n = cost.size();
  LpSolution out;

  // Shift and split variables so every column is >= 0.
  std::vector<double> offset(n, 0.0);
  std::vector<Column> columns;
  std::vector<std::pair<std::size_t, double>> range_rows;  // column, width
  for (std::size_t j = 0; j < n; ++j) {
    const double lo = lower[j];
    const double up = upper[j];
    if (lo > up || lo == kInfinity || up == -kInfinity) return out;  // infeasible
    if (std::isfinite(lo) && std::isfinite(up) && up - lo <= 0.0) {
      offset[j] = lo;
    } else if (std::isfinite(lo)) {
      offset[j] = lo;
      columns.push_back({j, 1.0});
      if (std::isfinite(up)) range_rows.emplace_back(columns.size() - 1, up - lo);
    } else if (std::isfinite(up)) {
      offset[j] = up;
      columns.push_back({j, -1.0});
    } else {
      columns.push_back({j, 1.0});
      columns.push_back({j, -1.0});
    }
  }
  const std::size_t k = columns.size();
  std::vector<std::vector<std::size_t>> columns_of(n);
  for (std::size_t c = 0; c < k; ++c) columns_of[columns[c].var].push_back(c);

  std::vector<Row> work;
  double scale = 1.0;
  for (const auto& row : rows) {
    Row r{std::vector<double>(k, 0.0), row.sense, row.rhs};
    bool empty = true;
    for (const auto& [j, a] : row.terms) {
      r.rhs -= a * offset[j];
      for (auto c : columns_of[j]) {
        r.coef[c] += a * columns[c].sign;
        empty = false;
      }
    }
    scale = std::max(scale, std::abs(r.rhs));
    if (empty) {
      const double tol = 1e-9 * (1.0 + std::abs(row.rhs));
      const bool ok = (row.sense == Sense::less_equal && r.rhs >= -tol) ||
                      (row.sense == Sense::greater_equal && r.rhs <= tol) ||
                      (row.sense == Sense::equal && std::abs(r.rhs) <= tol);
      if (!ok) return out;
      continue;
    }
    work.push_back(std::move(r));
  }
  for (const auto& [c, width] : range_rows) {
    Row r{std::vector<double>(k, 0.0), Sense::less_equal, width};
    r.coef[c] = 1.0;
    work.push_back(std::move(r));
  }

  const std::size_t m = work.size();
  std::size_t slacks = 0;
  for (const auto& r : work) slacks += r.sense != Sense::equal;
  // Rows whose slack cannot start basic need an artificial.
  std::size_t artificials = 0;
  for (const auto& r : work) {
    const bool flip = r.rhs < 0.0;
    const bool slack_basic = (r.sense == Sense::less_equal && !flip) || (r.sense == Sense::greater_equal && flip);
    artificials += !slack_basic;
  }
  const std::size_t first_slack = k;
  const std::size_t first_art = k + slacks;
  Tableau t(m, k + slacks + artificials);
  std::vector<std::size_t> basis(m);

  std::size_t s = first_slack;
  std::size_t a = first_art;
  for (std::size_t i = 0; i < m; ++i) {
    const auto& r = work[i];
    const double sign = r.rhs < 0.0 ? -1.0 : 1.0;
    for (std::size_t c = 0; c < k; ++c) t.at(i, c) = sign * r.coef[c];
    t.rhs(i) = sign * r.rhs;
    std::optional<std::size_t> basic;
    if (r.sense != Sense::equal) {
      const double slack = (r.sense == Sense::less_equal ? 1.0 : -1.0) * sign;
      t.at(i, s) = slack;
      if (slack > 0.0) basic = s;
      ++s;
    }
    if (!basic) {
      t.at(i, a) = 1.0;
      basic = a++;
    }
    basis[i] = *basic;
  }

  for (std::size_t c = 0; c < k; ++c) t.at(t.cost_row(), c) = cost[columns[c].var] * columns[c].sign;
  for (std::size_t i = 0; i < m; ++i) {
    if (basis[i] < first_art) continue;
    for (std::size_t c = 0; c <= t.cols(); ++c) {
      if (c < first_art || c == t.cols()) t.at(t.phase1_row(), c) -= t.at(i, c);
    }
  }

  if (artificials > 0) {
    auto phase1 = iterate(t, basis, t.phase1_row(), first_art, interrupted, out.iterations);
    if (phase1 == Outcome::interrupted) {
      out.status = LpStatus::interrupted;
      return out;
    }
    const double infeasibility = -t.rhs(t.phase1_row());
    if (infeasibility > 1e-9 * (1.0 + scale)) return out;
    // Pivot any artificial still basic (at zero) out of the basis.
    for (std::size_t i = 0; i < m; ++i) {
      if (basis[i] < first_art) continue;
      std::size_t best = first_art;
      double magnitude = kPivotEps;
      for (std::size_t c = 0; c < first_art; ++c) {
        if (std::abs(t.at(i, c)) > magnitude) {
          magnitude = std::abs(t.at(i, c));
          best = c;
        }
      }
      if (best < first_art) {
        t.pivot(i, best);
        basis[i] = best;
      }
    }
  }

  auto phase2 = iterate(t, basis, t.cost_row(), first_art, interrupted, out.iterations);
  if (phase2 == Outcome::interrupted) {
    out.status = LpStatus::interrupted;
    return out;
  }
  if (phase2 == Outcome::unbounded) {
    out.status = LpStatus::unbounded;
    return out;
  }

  std::vector<double> value(k, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    if (basis[i] < k) value[basis[i]] = std::max(t.rhs(i), 0.0);
  }
  out.x = offset;
  for (std::size_t c = 0; c < k; ++c) out.x[columns[c].var] += columns[c].sign * value[c];
  for (std::size_t j = 0; j < n; ++j) {
    out.x[j] = std::clamp(out.x[j], lower[j], upper[j]);
    out.objective += cost[j] * out.x[j];
  }
  out.status = LpStatus::optimal;
  return out;
}

}  // namespace reopt::detail
