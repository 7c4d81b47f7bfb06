#pragma once

#include <span>
#include <vector>

#include <json.hpp>

#include "cascade/dc_flow.hpp"
#include "cascade/grid.hpp"
#include "cascade/noise.hpp"

namespace cascade {

/// Relative slack on the strict tripping test: a line trips only when its
/// noisy flow exceeds u * (1 + kTripTolerance). Keeps lines whose noisy
/// flow sits exactly on the limit (up to rounding) in service.
inline constexpr double kTripTolerance = 1e-10;

/// Per-step load scaling factors lambda(1..T-1), each in (0, 1].
class ControlVector {
 public:
  ControlVector() = default;
  explicit ControlVector(std::vector<double> lambdas);
  static ControlVector ones(std::size_t count) { return ControlVector(std::vector<double>(count, 1.0)); }

  std::size_t size() const { return lambdas_.size(); }
  double operator[](std::size_t t) const { return lambdas_[t]; }
  const std::vector<double>& values() const { return lambdas_; }

  friend bool operator==(const ControlVector&, const ControlVector&) = default;

 private:
  std::vector<double> lambdas_;
};

/// Grid state at the start of time step `t` (1-based): balanced dispatch on
/// the current topology with its flows solved.
struct CascadeState {
  int t = 1;
  Grid grid;
  IslandPartition partition;
  Dispatch dispatch;
  FlowSolution flows;
};

struct CascadeTrace {
  std::vector<CascadeState> states;  // start of steps 1..T, then the terminal state
  std::vector<std::vector<std::size_t>> trips;
  std::vector<double> lambdas;
  double psi = 1.0;
  double yield = 1.0;
};

/// Balanced state built from the grid's own injections scaled by `scale`.
CascadeState initial_state(const Grid& grid, double scale = 1.0);

/// Lines with (1 + eps) |f| > u.
std::vector<std::size_t> trip_set(const FlowSolution& flows, const Grid& grid,
                                  std::span<const double> eps_column);

struct StepResult {
  CascadeState state;
  std::vector<std::size_t> tripped;
};

/// One controlled step: scale loads and generation by lambda, solve, trip,
/// re-island and rebalance.
StepResult step(const CascadeState& state, double lambda, std::span<const double> eps_column);

struct Termination {
  double psi = 1.0;
  CascadeState state;
};

/// psi = max(1, max_j (1 + eps_j)|f_j| / ((1 - b) u_j)); if psi > 1 every
/// demand and generation is divided by psi.
Termination terminate(const CascadeState& state, std::span<const double> eps_column, double noise_bound);

/// Served fraction of the grid's reference demand.
double served_fraction(const Grid& grid, const Dispatch& dispatch);

/// Runs T = controls.size() + 1 steps starting from injections scaled by
/// `initial_scale`; the realization must cover at least T steps.
CascadeTrace run(const Grid& grid, const ControlVector& controls, const Realization& realization,
                 double noise_bound, double initial_scale = 1.0);

nlohmann::json trace_to_json(const CascadeTrace& trace, const Grid& grid);

}  // namespace cascade
