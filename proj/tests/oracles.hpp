#pragma once

// Brute-force references for small instances. Nothing here shares code with
// the simplex or the branch-and-bound.

#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "reopt/model.hpp"

namespace reopt::testing {

inline bool satisfies(const Instance& inst, const std::vector<double>& x, double tol = 1e-7) {
  for (std::size_t j = 0; j < x.size(); ++j) {
    if (x[j] < inst.variables[j].lower - tol || x[j] > inst.variables[j].upper + tol) return false;
  }
  for (const auto& row : inst.rows) {
    double lhs = 0.0;
    for (const auto& [j, a] : row.terms) lhs += a * x[j];
    const double slack = tol * (1.0 + std::abs(row.rhs));
    if (row.sense == Sense::less_equal && lhs > row.rhs + slack) return false;
    if (row.sense == Sense::greater_equal && lhs < row.rhs - slack) return false;
    if (row.sense == Sense::equal && std::abs(lhs - row.rhs) > slack) return false;
  }
  return true;
}

inline double cost_of(const Instance& inst, const std::vector<double>& x) {
  double c = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) c += inst.variables[j].objective * x[j];
  return c;
}

// Gaussian elimination with partial pivoting; nullopt when singular.
inline std::optional<std::vector<double>> solve_square(std::vector<std::vector<double>> a, std::vector<double> b) {
  const std::size_t n = b.size();
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < n; ++r) {
      if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
    }
    if (std::abs(a[piv][col]) < 1e-10) return std::nullopt;
    std::swap(a[piv], a[col]);
    std::swap(b[piv], b[col]);
    for (std::size_t r = 0; r < n; ++r) {
      if (r == col) continue;
      const double f = a[r][col] / a[col][col];
      for (std::size_t c = col; c < n; ++c) a[r][c] -= f * a[col][c];
      b[r] -= f * b[col];
    }
  }
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = b[i] / a[i][i];
  return x;
}

// Optimum of a bounded LP by enumerating every basic point. Requires finite
// bounds on all columns so the optimum sits at a vertex.
inline std::optional<double> vertex_optimum(const Instance& inst) {
  const std::size_t n = inst.variables.size();
  std::vector<std::vector<double>> planes;
  std::vector<double> levels;
  for (const auto& row : inst.rows) {
    std::vector<double> a(n, 0.0);
    for (const auto& [j, v] : row.terms) a[j] += v;
    planes.push_back(a);
    levels.push_back(row.rhs);
  }
  for (std::size_t j = 0; j < n; ++j) {
    std::vector<double> e(n, 0.0);
    e[j] = 1.0;
    planes.push_back(e);
    levels.push_back(inst.variables[j].lower);
    planes.push_back(e);
    levels.push_back(inst.variables[j].upper);
  }
  std::optional<double> best;
  std::vector<std::size_t> pick(n);
  // Walk all n-subsets of the planes.
  const std::size_t total = planes.size();
  std::vector<bool> mask(total, false);
  std::fill(mask.begin(), mask.begin() + static_cast<long>(n), true);
  do {
    std::vector<std::vector<double>> a;
    std::vector<double> b;
    for (std::size_t i = 0; i < total; ++i) {
      if (mask[i]) {
        a.push_back(planes[i]);
        b.push_back(levels[i]);
      }
    }
    auto x = solve_square(a, b);
    if (x && satisfies(inst, *x)) {
      const double c = cost_of(inst, *x);
      if (!best || c < *best) best = c;
    }
  } while (std::prev_permutation(mask.begin(), mask.end()));
  return best;
}

// Optimum of a pure integer program over a small box by exhaustive search.
inline std::optional<double> grid_optimum(const Instance& inst) {
  const std::size_t n = inst.variables.size();
  std::vector<double> x(n);
  for (std::size_t j = 0; j < n; ++j) x[j] = std::ceil(inst.variables[j].lower);
  std::optional<double> best;
  while (true) {
    if (satisfies(inst, x)) {
      const double c = cost_of(inst, x);
      if (!best || c < *best) best = c;
    }
    std::size_t j = 0;
    while (j < n) {
      x[j] += 1.0;
      if (x[j] <= inst.variables[j].upper) break;
      x[j] = std::ceil(inst.variables[j].lower);
      ++j;
    }
    if (j == n) break;
  }
  return best;
}

// Small random instance with boxed columns.
inline Instance random_instance(std::mt19937& rng, std::size_t n, std::size_t m, VarType type, int box) {
  auto coef = [&](int lo, int hi) { return double(std::uniform_int_distribution<int>(lo, hi)(rng)); };
  Instance inst;
  for (std::size_t j = 0; j < n; ++j) {
    InstanceVariable v;
    v.key = "x" + std::to_string(j);
    v.type = type;
    v.lower = type == VarType::binary ? 0.0 : coef(-box, 0);
    v.upper = type == VarType::binary ? 1.0 : coef(1, box);
    v.objective = coef(-9, 9);
    inst.variables.push_back(v);
  }
  for (std::size_t i = 0; i < m; ++i) {
    InstanceRow row;
    row.key = "r" + std::to_string(i);
    for (std::size_t j = 0; j < n; ++j) {
      const double a = coef(-5, 5);
      if (a != 0.0) row.terms.emplace_back(j, a);
    }
    const int s = std::uniform_int_distribution<int>(0, 4)(rng);
    row.sense = s < 3 ? Sense::less_equal : (s == 3 ? Sense::greater_equal : Sense::equal);
    row.rhs = coef(-6, 12);
    inst.rows.push_back(row);
  }
  return inst;
}

}  // namespace reopt::testing
