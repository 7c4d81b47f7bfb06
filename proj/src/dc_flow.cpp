#include "cascade/dc_flow.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "cascade/errors.hpp"

namespace cascade {

IslandPartition find_islands(const Grid& grid) {
  const std::size_t n = grid.bus_count();
  std::vector<int> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto root = [&](int v) {
    while (parent[v] != v) v = parent[v] = parent[parent[v]];
    return v;
  };
  for (std::size_t j = 0; j < grid.line_count(); ++j) {
    if (!grid.active(j)) continue;
    const int a = root(static_cast<int>(grid.line(j).from_bus)), b = root(static_cast<int>(grid.line(j).to_bus));
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }

  // Islands are numbered by their smallest bus; members come out sorted.
  IslandPartition p;
  p.bus_island.assign(n, -1);
  std::vector<int> id_of_root(n, -1);
  for (std::size_t v = 0; v < n; ++v) {
    const int r = root(static_cast<int>(v));
    if (id_of_root[r] < 0) {
      id_of_root[r] = static_cast<int>(p.islands.size());
      p.islands.emplace_back();
    }
    p.bus_island[v] = id_of_root[r];
    p.islands[id_of_root[r]].push_back(static_cast<int>(v));
  }

  p.line_island.assign(grid.line_count(), -1);
  for (std::size_t j = 0; j < grid.line_count(); ++j) {
    if (grid.active(j)) p.line_island[j] = p.bus_island[grid.line(j).from_bus];
  }
  return p;
}

std::vector<double> Dispatch::injections() const {
  std::vector<double> beta(generation.size());
  for (std::size_t i = 0; i < beta.size(); ++i) beta[i] = generation[i] - demand[i];
  return beta;
}

double Dispatch::total_demand() const { return std::accumulate(demand.begin(), demand.end(), 0.0); }

void Dispatch::scale(double factor) {
  for (double& g : generation) g *= factor;
  for (double& d : demand) d *= factor;
}

Dispatch initial_dispatch(const Grid& grid, double scale) {
  Dispatch d;
  d.generation.reserve(grid.bus_count());
  d.demand.reserve(grid.bus_count());
  for (const Bus& b : grid.buses()) {
    d.generation.push_back(scale * b.pg_mw);
    d.demand.push_back(scale * b.pd_mw);
  }
  return d;
}

double balance_island(Dispatch& dispatch, std::span<const int> island) {
  double gen = 0.0, dem = 0.0;
  for (int i : island) {
    gen += dispatch.generation[i];
    dem += dispatch.demand[i];
  }
  if (!(gen > 0.0) || !(dem > 0.0)) {
    for (int i : island) {
      dispatch.generation[i] = 0.0;
      dispatch.demand[i] = 0.0;
    }
    return 0.0;
  }
  // Already balanced up to rounding: leave the island untouched.
  if (std::abs(dem - gen) <= 1e-13 * std::max(dem, gen)) return 1.0;
  if (dem >= gen) {
    const double r = gen / dem;
    for (int i : island) dispatch.demand[i] *= r;
    return r;
  }
  const double r = dem / gen;
  for (int i : island) dispatch.generation[i] *= r;
  return r;
}

void balance_islands(Dispatch& dispatch, const IslandPartition& partition) {
  for (const auto& island : partition.islands) balance_island(dispatch, island);
}

namespace {

constexpr std::size_t kDenseLimit = 64;

// Solves the reduced Laplacian of one island; the first bus is the reference.
void solve_island(const Grid& grid, const IslandPartition& partition, std::size_t island_id,
                  std::span<const std::size_t> lines, std::span<const double> beta_pu, std::vector<int>& local,
                  FlowSolution& out) {
  const auto& island = partition.islands[island_id];
  const std::size_t k = island.size();
  if (k < 2) return;
  for (std::size_t a = 0; a < k; ++a) local[island[a]] = static_cast<int>(a) - 1;  // reference -> -1

  Eigen::VectorXd rhs(k - 1);
  for (std::size_t a = 1; a < k; ++a) rhs[a - 1] = beta_pu[island[a]];

  Eigen::VectorXd theta;
  if (k - 1 <= kDenseLimit) {
    Eigen::MatrixXd lap = Eigen::MatrixXd::Zero(k - 1, k - 1);
    for (std::size_t j : lines) {
      const Line& l = grid.line(j);
      const double y = 1.0 / l.reactance;
      const int p = local[l.from_bus], q = local[l.to_bus];
      if (p >= 0) lap(p, p) += y;
      if (q >= 0) lap(q, q) += y;
      if (p >= 0 && q >= 0) {
        lap(p, q) -= y;
        lap(q, p) -= y;
      }
    }
    Eigen::LLT<Eigen::MatrixXd> llt(lap);
    if (llt.info() != Eigen::Success) {
      throw SolverError("reduced Laplacian of island " + std::to_string(island_id) + " is not positive definite");
    }
    theta = llt.solve(rhs);
  } else {
    std::vector<Eigen::Triplet<double>> triplets;
    for (std::size_t j : lines) {
      const Line& l = grid.line(j);
      const double y = 1.0 / l.reactance;
      const int p = local[l.from_bus], q = local[l.to_bus];
      if (p >= 0) triplets.emplace_back(p, p, y);
      if (q >= 0) triplets.emplace_back(q, q, y);
      if (p >= 0 && q >= 0) {
        triplets.emplace_back(p, q, -y);
        triplets.emplace_back(q, p, -y);
      }
    }
    Eigen::SparseMatrix<double> lap(static_cast<Eigen::Index>(k - 1), static_cast<Eigen::Index>(k - 1));
    lap.setFromTriplets(triplets.begin(), triplets.end());
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(lap);
    if (ldlt.info() != Eigen::Success) {
      throw SolverError("reduced Laplacian of island " + std::to_string(island_id) + " is singular");
    }
    theta = ldlt.solve(rhs);
    if (ldlt.info() != Eigen::Success) {
      throw SolverError("solve failed on island " + std::to_string(island_id));
    }
  }
  out.angles[island[0]] = 0.0;
  for (std::size_t a = 1; a < k; ++a) out.angles[island[a]] = theta[static_cast<Eigen::Index>(a - 1)];
}

}  // namespace

FlowSolution solve_flows(const Grid& grid, const IslandPartition& partition,
                         std::span<const double> injections) {
  if (injections.size() != grid.bus_count()) throw SolverError("injection vector has the wrong length");
  for (std::size_t s = 0; s < partition.size(); ++s) {
    double sum = 0.0, magnitude = 0.0;
    for (int i : partition.islands[s]) {
      sum += injections[i];
      magnitude += std::abs(injections[i]);
    }
    if (std::abs(sum) > kFlowTolerance * 0.5 * magnitude + 1e-12) {
      throw InfeasibleError("island " + std::to_string(s) + " is unbalanced (net injection " +
                                std::to_string(sum) + " MW)",
                            s);
    }
  }

  const double base = grid.base_mva();
  std::vector<double> beta_pu(injections.size());
  for (std::size_t i = 0; i < beta_pu.size(); ++i) beta_pu[i] = injections[i] / base;

  FlowSolution out;
  out.angles.assign(grid.bus_count(), 0.0);
  out.flows.assign(grid.line_count(), 0.0);
  std::vector<std::size_t> offset(partition.size() + 1, 0), order(grid.line_count());
  for (int isl : partition.line_island) {
    if (isl >= 0) ++offset[static_cast<std::size_t>(isl) + 1];
  }
  for (std::size_t s = 0; s < partition.size(); ++s) offset[s + 1] += offset[s];
  std::vector<std::size_t> fill(offset.begin(), offset.end() - 1);
  for (std::size_t j = 0; j < grid.line_count(); ++j) {
    if (partition.line_island[j] >= 0) order[fill[static_cast<std::size_t>(partition.line_island[j])]++] = j;
  }
  std::vector<int> local(grid.bus_count(), -1);
  for (std::size_t s = 0; s < partition.size(); ++s) {
    const std::span<const std::size_t> lines(order.data() + offset[s], offset[s + 1] - offset[s]);
    solve_island(grid, partition, s, lines, beta_pu, local, out);
  }

  for (std::size_t j = 0; j < grid.line_count(); ++j) {
    if (!grid.active(j)) continue;
    const Line& l = grid.line(j);
    out.flows[j] = (out.angles[l.from_bus] - out.angles[l.to_bus]) / l.reactance * base;
  }
  return out;
}

FlowSolution solve_flows(const Grid& grid, std::span<const double> injections) {
  return solve_flows(grid, find_islands(grid), injections);
}

}  // namespace cascade
