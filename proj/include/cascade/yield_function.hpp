#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <vector>

#include "cascade/cascade.hpp"
#include "cascade/grid.hpp"
#include "cascade/noise.hpp"
#include "cascade/piecewise_linear.hpp"

namespace cascade {

/// Relative gap below which neighbouring critical points are merged.
inline constexpr double kCriticalTolerance = 1e-9;

/// One realization's view at a time step: topology, flows at unit scale, and
/// the noise applied to those flows.
struct EnsembleMember {
  const Grid* grid = nullptr;
  std::span<const double> flows;
  std::span<const double> eps;
};

struct EnsembleState {
  std::vector<EnsembleMember> members;
};

/// Distinct scales gamma > 0 at which some member's noisy flow reaches its
/// limit: gamma = u_j / ((1 + eps_j) |f_j|). Values closer than
/// kCriticalTolerance (relative) are merged and represented by the smallest.
std::vector<double> critical_points(const EnsembleState& ensemble);

/// Number of critical points strictly below z.
std::size_t q_of_z(std::span<const double> gammas, double z);

/// A node of the optimal policy.
///
/// Window nodes (lo < hi) hold the value on (lo, hi]. At scale s in
/// (gammas[q-1], gammas[q]] the target y = s * lambda is either s itself
/// (no shedding, child q) or one of gammas[0..q-1] (child i, value
/// candidates[i]). Intervals inside the window have window children; below
/// it, children are evaluated only at their critical point, and a child
/// whose candidate provably cannot win is left null with candidate -inf.
///
/// Point nodes (lo == hi) hold only the value at hi and the best target
/// there, with its child as children[0].
///
/// A null child means the next step is the terminal one.
struct PolicyNode {
  int remaining = 1;      // steps left, termination included
  std::size_t step = 0;   // 0-based time step this node decides
  double lo = 0.0;
  double hi = 1.0;
  double target = 1.0;    // point nodes only
  std::vector<double> gammas;
  std::vector<std::shared_ptr<const PolicyNode>> children;
  std::vector<double> candidates;
  PiecewiseLinear value;

  bool is_point() const { return lo == hi; }
};

struct PolicyTree {
  std::shared_ptr<const PolicyNode> root;
  int horizon = 1;
};

struct YieldOptions {
  std::size_t interval_guard = 100000;  // critical points per node
  std::size_t node_guard = 2000000;     // recursion nodes in total
  double z_max = 1.0;
};

struct OptimalYield {
  PiecewiseLinear eta_hat;
  PolicyTree policy;
  std::size_t node_count = 0;
  std::size_t state_count = 0;
};

/// Maximum average terminal yield over common control vectors, as a
/// function of the initial scale z in (0, z_max], for the realizations of
/// `ensemble` on `grid` over `horizon` steps. Throws ResourceError when a
/// guard is exceeded.
OptimalYield optimal_yield(const Grid& grid, const NoiseEnsemble& ensemble, int horizon,
                           const YieldOptions& options = {});

/// The control the policy applies when the cascade starts at scale z0.
ControlVector extract_control(const PolicyTree& policy, double z0 = 1.0);

/// One decision along the policy path from z0.
struct PolicyStep {
  std::size_t step = 0;
  double scale = 1.0;   // s at the start of the step
  double target = 1.0;  // chosen s * lambda
  double lambda = 1.0;
  PiecewiseLinear value;     // node value as a function of s on its window
  PiecewiseLinear response;  // value of choosing lambda, over the targets inside the window
};

std::vector<PolicyStep> policy_path(const PolicyTree& policy, double z0 = 1.0);

/// N * m (m-1) ... (m-T+1), factors clamped below at 1, saturating.
double breakpoint_bound(std::size_t realizations, std::size_t lines, int horizon);

}  // namespace cascade
