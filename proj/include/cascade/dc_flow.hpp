#pragma once

#include <span>
#include <vector>

#include "cascade/grid.hpp"

namespace cascade {

/// Relative tolerance for flow conservation and island balance checks.
inline constexpr double kFlowTolerance = 1e-8;

/// Connected components over active lines, ordered by smallest bus id.
/// Bus lists inside an island are ascending.
struct IslandPartition {
  std::vector<std::vector<int>> islands;
  std::vector<int> bus_island;   // island index per bus
  std::vector<int> line_island;  // island index per line, -1 if inactive

  std::size_t size() const { return islands.size(); }
};

IslandPartition find_islands(const Grid& grid);

/// Per-bus generation and served demand, both nonnegative MW.
struct Dispatch {
  std::vector<double> generation;
  std::vector<double> demand;

  std::vector<double> injections() const;
  double total_demand() const;
  void scale(double factor);
};

Dispatch initial_dispatch(const Grid& grid, double scale = 1.0);

/// Rebalances one island in place and returns the ratio r. If demand
/// exceeds generation, demand is scaled by r = G/D; otherwise generation is
/// scaled by r = D/G. An island lacking either side is zeroed (r = 0).
double balance_island(Dispatch& dispatch, std::span<const int> island);

void balance_islands(Dispatch& dispatch, const IslandPartition& partition);

/// Signed line flows in MW (oriented from -> to, zero on inactive lines)
/// and bus angles in radians (zero at each island's reference bus).
struct FlowSolution {
  std::vector<double> flows;
  std::vector<double> angles;
};

/// Solves N f = beta, N^T phi - X f = 0 island by island through the
/// reduced weighted Laplacian. Throws InfeasibleError if an island's
/// injections do not sum to zero.
FlowSolution solve_flows(const Grid& grid, const IslandPartition& partition,
                         std::span<const double> injections);
FlowSolution solve_flows(const Grid& grid, std::span<const double> injections);

}  // namespace cascade
