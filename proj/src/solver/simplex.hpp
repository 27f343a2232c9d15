#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "reopt/model.hpp"

namespace reopt::detail {

enum class LpStatus { optimal, infeasible, unbounded, interrupted };

struct LpSolution {
  LpStatus status = LpStatus::infeasible;
  std::vector<double> x;
  double objective = 0.0;
  std::size_t iterations = 0;
};

// min cost'x  s.t. rows, lower <= x <= upper. Dense two-phase tableau with
// Dantzig pricing that falls back to Bland's rule once it stalls on
// degenerate pivots. `interrupted` is polled every few iterations.
LpSolution solve_bounded(const std::vector<double>& cost, const std::vector<InstanceRow>& rows,
                         const std::vector<double>& lower, const std::vector<double>& upper,
                         const std::function<bool()>& interrupted = {});

}  // namespace reopt::detail
