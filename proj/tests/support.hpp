#pragma once

#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include <doctest.h>

#include "cascade/grid.hpp"
#include "cascade/noise.hpp"
#include "cascade/yield_function.hpp"

namespace testing {

using cascade::Bus;
using cascade::Grid;
using cascade::Line;

inline std::filesystem::path data_dir() { return CASCADE_DATA_DIR; }

inline std::filesystem::path case118() { return data_dir() / "case118.m"; }

/// Fresh scratch directory under the build tree.
inline std::filesystem::path scratch(const std::string& name) {
  const std::filesystem::path dir = std::filesystem::path(CASCADE_SCRATCH_DIR) / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

/// Generator at bus 1 feeding a load at bus 2 over one line.
inline Grid two_bus(double demand_mw = 1.0, double limit_mw = 2.0, double x = 1.0) {
  return Grid({Bus{1, 0.0, demand_mw}, Bus{2, demand_mw, 0.0}}, {Line{1, 0, 1, x, limit_mw}});
}

/// Bus 1 generates 2, buses 2 and 3 each draw 1; unit reactances.
inline Grid triangle(double u12 = 10.0, double u13 = 10.0, double u23 = 10.0) {
  return Grid({Bus{1, 0.0, 2.0}, Bus{2, 1.0, 0.0}, Bus{3, 1.0, 0.0}},
              {Line{1, 0, 1, 1.0, u12}, Line{2, 0, 2, 1.0, u13}, Line{3, 1, 2, 1.0, u23}});
}

/// Runs the recursion and checks the piece count against the factorial
/// bound. Every optimal_yield call in the test suite goes through here.
inline cascade::OptimalYield checked_optimal_yield(const Grid& grid, const cascade::NoiseEnsemble& ensemble,
                                                   int horizon, const cascade::YieldOptions& options = {}) {
  cascade::OptimalYield out = cascade::optimal_yield(grid, ensemble, horizon, options);
  const double bound = cascade::breakpoint_bound(ensemble.size(), grid.line_count(), horizon);
  CHECK(static_cast<double>(out.eta_hat.breakpoint_count()) <= bound);
  return out;
}

}  // namespace testing
