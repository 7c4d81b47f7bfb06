#include "cascade/yield_function.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <deque>
#include <limits>
#include <string>
#include <unordered_map>

#include "cascade/dc_flow.hpp"
#include "cascade/errors.hpp"

namespace cascade {

namespace {

// Candidates must beat the incumbent by this much to be preferred.
constexpr double kTieTolerance = 1e-12;

struct Crossing {
  double gamma;
  std::size_t member;
  std::size_t line;
};

// Sorted crossings below `cutoff`. When a dropped crossing could still merge
// with the last kept one, the full list is returned instead so grouping is
// unaffected by the cut.
std::vector<Crossing> crossings(const EnsembleState& ensemble,
                                double cutoff = std::numeric_limits<double>::infinity()) {
  std::vector<Crossing> out;
  double dropped = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < ensemble.members.size(); ++k) {
    const EnsembleMember& m = ensemble.members[k];
    for (std::size_t j = 0; j < m.grid->line_count(); ++j) {
      if (!m.grid->active(j) || m.flows[j] == 0.0) continue;
      const double gamma = m.grid->line(j).limit_mw / noisy_flow(m.flows[j], m.eps[j]);
      if (!std::isfinite(gamma) || !(gamma > 0.0)) continue;
      if (gamma < cutoff) {
        out.push_back({gamma, k, j});
      } else {
        dropped = std::min(dropped, gamma);
      }
    }
  }
  std::sort(out.begin(), out.end(), [](const Crossing& a, const Crossing& b) {
    if (a.gamma != b.gamma) return a.gamma < b.gamma;
    if (a.member != b.member) return a.member < b.member;
    return a.line < b.line;
  });
  if (!out.empty() && dropped <= out.back().gamma * (1.0 + kCriticalTolerance)) return crossings(ensemble);
  return out;
}

// Group index per sorted crossing; a new group starts when the gap to the
// previous value exceeds the merge tolerance.
std::vector<std::size_t> group_crossings(const std::vector<Crossing>& sorted, std::vector<double>& reps) {
  std::vector<std::size_t> group(sorted.size());
  reps.clear();
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (i == 0 || sorted[i].gamma > sorted[i - 1].gamma * (1.0 + kCriticalTolerance)) {
      reps.push_back(sorted[i].gamma);
    }
    group[i] = reps.size() - 1;
  }
  return group;
}

}  // namespace

std::vector<double> critical_points(const EnsembleState& ensemble) {
  std::vector<double> reps;
  group_crossings(crossings(ensemble), reps);
  return reps;
}

std::size_t q_of_z(std::span<const double> gammas, double z) {
  return static_cast<std::size_t>(std::lower_bound(gammas.begin(), gammas.end(), z) - gammas.begin());
}

double breakpoint_bound(std::size_t realizations, std::size_t lines, int horizon) {
  double bound = static_cast<double>(realizations);
  for (int k = 0; k < horizon; ++k) {
    bound *= std::max(1.0, static_cast<double>(lines) - k);
    if (!std::isfinite(bound)) return std::numeric_limits<double>::infinity();
  }
  return bound;
}

namespace {

// A realization's state at unit scale; at scale s the dispatch is s * base.
// Flows are solved on first use.
struct MemberState {
  Grid grid;
  IslandPartition partition;
  Dispatch base;
  std::vector<double> flows;
  bool solved = false;
  double served = 0.0;
};

std::string bytes_of(const void* data, std::size_t size) {
  return std::string(static_cast<const char*>(data), size);
}

class YieldSolver {
 public:
  YieldSolver(const Grid& grid, const NoiseEnsemble& ensemble, int horizon, const YieldOptions& options)
      : grid_(grid), ensemble_(ensemble), horizon_(horizon), options_(options),
        bound_(ensemble.spec().bound()) {}

  OptimalYield solve() {
    CascadeState start = initial_state(grid_);
    MemberState root;
    root.grid = start.grid;
    root.partition = std::move(start.partition);
    root.base = std::move(start.dispatch);
    root.flows = std::move(start.flows.flows);
    root.solved = true;
    root.served = served_fraction(grid_, root.base);
    const std::size_t root_id = intern(std::move(root));

    std::vector<std::size_t> members(ensemble_.size(), root_id);
    OptimalYield out;
    out.policy.horizon = horizon_;
    out.policy.root = build(members, horizon_, 0.0, options_.z_max);
    out.eta_hat = out.policy.root->value;
    out.node_count = node_count_;
    out.state_count = states_.size();
    return out;
  }

 private:
  struct Point {
    double value;
    std::shared_ptr<const PolicyNode> node;  // null at the terminal step
  };

  std::size_t intern(MemberState state) {
    std::string key = bytes_of(state.grid.active_mask().data(), state.grid.active_mask().size());
    key += bytes_of(state.base.generation.data(), state.base.generation.size() * sizeof(double));
    key += bytes_of(state.base.demand.data(), state.base.demand.size() * sizeof(double));
    auto [it, inserted] = state_index_.try_emplace(std::move(key), states_.size());
    if (inserted) states_.push_back(std::move(state));
    return it->second;
  }

  std::size_t child_state(std::size_t parent, const std::vector<std::size_t>& tripped) {
    if (tripped.empty()) return parent;
    std::string key = bytes_of(&parent, sizeof parent);
    key += bytes_of(tripped.data(), tripped.size() * sizeof(std::size_t));
    if (auto it = child_index_.find(key); it != child_index_.end()) return it->second;

    const MemberState& p = states_[parent];
    MemberState c;
    c.grid = apply_outage(p.grid, tripped);
    c.partition = find_islands(c.grid);
    c.base = p.base;
    balance_islands(c.base, c.partition);
    c.served = served_fraction(grid_, c.base);
    const std::size_t id = intern(std::move(c));
    child_index_.emplace(std::move(key), id);
    return id;
  }

  const MemberState& solved(std::size_t id) {
    MemberState& s = states_[id];
    if (!s.solved) {
      s.flows = solve_flows(s.grid, s.partition, s.base.injections()).flows;
      s.solved = true;
    }
    return s;
  }

  EnsembleState view(const std::vector<std::size_t>& members, std::size_t step) {
    EnsembleState e;
    e.members.reserve(members.size());
    for (std::size_t k = 0; k < members.size(); ++k) {
      const MemberState& s = solved(members[k]);
      e.members.push_back({&s.grid, s.flows, ensemble_.realization(k).column(step)});
    }
    return e;
  }

  void count_node() {
    if (++node_count_ > options_.node_guard) {
      throw ResourceError("optimal-yield recursion exceeded " + std::to_string(options_.node_guard) + " nodes",
                          node_count_);
    }
  }

  // Largest noisy loading relative to the termination threshold (1 - b) u;
  // zero when no rated line carries flow.
  double terminal_loading(std::size_t id, std::size_t k) {
    const std::uint64_t key = static_cast<std::uint64_t>(id) * ensemble_.size() + k;
    if (auto it = loading_.find(key); it != loading_.end()) return it->second;
    const MemberState& s = solved(id);
    const auto eps = ensemble_.realization(k).column(static_cast<std::size_t>(horizon_ - 1));
    double c = 0.0;
    for (std::size_t j = 0; j < s.grid.line_count(); ++j) {
      if (!s.grid.active(j)) continue;
      const double u = s.grid.line(j).limit_mw;
      if (!std::isfinite(u)) continue;
      c = std::max(c, noisy_flow(s.flows[j], eps[j]) / ((1.0 - bound_) * u));
    }
    loading_.emplace(key, c);
    return c;
  }

  std::shared_ptr<const PolicyNode> build(const std::vector<std::size_t>& members, int remaining, double lo,
                                          double hi) {
    std::string key = bytes_of(&remaining, sizeof remaining);
    key += bytes_of(members.data(), members.size() * sizeof(std::size_t));
    auto& cached = memo_[key];
    for (const auto& n : cached) {
      if (n->lo <= lo && n->hi >= hi) return n;
    }
    count_node();
    auto node = std::make_shared<PolicyNode>();
    node->remaining = remaining;
    node->step = static_cast<std::size_t>(horizon_ - remaining);
    node->hi = hi;
    if (remaining == 1) {
      node->value = terminal_value(members, hi);
    } else {
      node->lo = lo;
      expand(*node, members);
    }
    cached.push_back(node);
    return node;
  }

  // Average over members of s -> served * min(s, 1/c).
  PiecewiseLinear terminal_value(const std::vector<std::size_t>& members, double hi) {
    struct Piece {
      double threshold;  // 1/c, infinite when no line is loaded
      double served;
      double cap;  // served / c
    };
    std::vector<Piece> pieces;
    pieces.reserve(members.size());
    for (std::size_t k = 0; k < members.size(); ++k) {
      const double c = terminal_loading(members[k], k);
      const double served = states_[members[k]].served;
      const double threshold = c > 0.0 ? 1.0 / c : std::numeric_limits<double>::infinity();
      pieces.push_back({threshold, served, c > 0.0 ? served / c : 0.0});
    }
    std::sort(pieces.begin(), pieces.end(), [](const Piece& a, const Piece& b) { return a.threshold < b.threshold; });

    const double inv = 1.0 / static_cast<double>(members.size());
    double slope = 0.0;
    for (const Piece& p : pieces) slope += p.served;
    double intercept = 0.0;
    std::vector<Segment> segs;
    double lo = 0.0;
    std::size_t i = 0;
    while (lo < hi) {
      while (i < pieces.size() && pieces[i].threshold <= lo) {
        slope -= pieces[i].served;
        intercept += pieces[i].cap;
        ++i;
      }
      const double up = i < pieces.size() ? std::min(pieces[i].threshold, hi) : hi;
      segs.push_back({lo, up, std::max(0.0, slope) * inv, intercept * inv});
      lo = up;
    }
    return PiecewiseLinear(std::move(segs)).simplified();
  }

  double terminal_point(const std::vector<std::size_t>& members, double s) {
    double sum = 0.0;
    for (std::size_t k = 0; k < members.size(); ++k) {
      const double c = terminal_loading(members[k], k);
      sum += states_[members[k]].served * (c * s > 1.0 ? 1.0 / c : s);
    }
    return sum / static_cast<double>(members.size());
  }

  // Critical points below hi and, per interval, the member states after its
  // trip set, stored as the changes from the previous interval.
  struct Change {
    std::size_t member, from, to;
  };
  struct Intervals {
    std::vector<double> gammas;
    std::vector<Change> changes;
    std::vector<std::size_t> offset;  // changes into interval i: [offset[i], offset[i + 1])
    std::vector<double> served;       // mean served fraction per interval
  };

  // Member states of one interval at a time.
  class Cursor {
   public:
    Cursor(const Intervals& iv, std::vector<std::size_t> members) : iv_(iv), members_(std::move(members)) {}
    const std::vector<std::size_t>& at(std::size_t i) {
      for (; pos_ < i; ++pos_) {
        for (std::size_t c = iv_.offset[pos_ + 1]; c < iv_.offset[pos_ + 2]; ++c) {
          members_[iv_.changes[c].member] = iv_.changes[c].to;
        }
      }
      for (; pos_ > i; --pos_) {
        for (std::size_t c = iv_.offset[pos_]; c < iv_.offset[pos_ + 1]; ++c) {
          members_[iv_.changes[c].member] = iv_.changes[c].from;
        }
      }
      return members_;
    }

   private:
    const Intervals& iv_;
    std::vector<std::size_t> members_;
    std::size_t pos_ = 0;
  };

  // Upper bound on any value reachable from interval i at scale gamma. The
  // slack absorbs rounding in the running mean.
  static double value_bound(const Intervals& iv, std::size_t i, double gamma) {
    return gamma * iv.served[i] * (1.0 + 1e-9);
  }

  Intervals intervals(const std::vector<std::size_t>& members, std::size_t step, double hi) {
    const std::vector<Crossing> sorted = crossings(view(members, step), hi * (1.0 + 1e-6));
    std::vector<double> reps;
    const std::vector<std::size_t> group = group_crossings(sorted, reps);
    const std::size_t p = q_of_z(reps, hi);
    if (p > options_.interval_guard) {
      throw ResourceError("optimal-yield node has " + std::to_string(p) + " critical intervals (guard " +
                              std::to_string(options_.interval_guard) + ")",
                          p);
    }
    Intervals out;
    out.gammas.assign(reps.begin(), reps.begin() + static_cast<std::ptrdiff_t>(p));
    out.offset.assign(2, 0);
    std::vector<std::size_t> current = members;
    double sum = 0.0;
    for (std::size_t id : members) sum += states_[id].served;
    const double inv = 1.0 / static_cast<double>(members.size());
    out.served.push_back(sum * inv);

    std::vector<std::vector<std::size_t>> tripped(members.size());
    std::vector<std::size_t> touched;
    std::size_t cursor = 0;
    for (std::size_t i = 1; i <= p; ++i) {
      touched.clear();
      while (cursor < sorted.size() && group[cursor] < i) {
        const Crossing& c = sorted[cursor++];
        auto& list = tripped[c.member];
        list.insert(std::upper_bound(list.begin(), list.end(), c.line), c.line);
        if (touched.empty() || touched.back() != c.member) touched.push_back(c.member);
      }
      std::sort(touched.begin(), touched.end());
      touched.erase(std::unique(touched.begin(), touched.end()), touched.end());
      for (std::size_t k : touched) {
        const std::size_t next = child_state(members[k], tripped[k]);
        if (next == current[k]) continue;
        out.changes.push_back({k, current[k], next});
        sum += states_[next].served - states_[current[k]].served;
        current[k] = next;
      }
      out.offset.push_back(out.changes.size());
      out.served.push_back(sum * inv);
    }
    return out;
  }

  // Best value at scale h alone.
  Point evaluate_point(const std::vector<std::size_t>& members, int remaining, double h) {
    if (remaining == 1) return {terminal_point(members, h), nullptr};
    count_node();
    const std::size_t step = static_cast<std::size_t>(horizon_ - remaining);
    const Intervals iv = intervals(members, step, h);
    const std::size_t p = iv.gammas.size();
    Cursor sets(iv, members);

    Point best = evaluate_point(sets.at(p), remaining - 1, h);
    double target = h;
    for (std::size_t i = p; i-- > 0;) {
      const double up = iv.gammas[i];
      if (value_bound(iv, i, up) <= best.value + kTieTolerance) continue;
      Point cand = evaluate_point(sets.at(i), remaining - 1, up);
      if (cand.value > best.value + kTieTolerance) {
        best = std::move(cand);
        target = up;
      }
    }
    auto node = std::make_shared<PolicyNode>();
    node->remaining = remaining;
    node->step = step;
    node->lo = node->hi = h;
    node->target = target;
    node->children.push_back(std::move(best.node));
    node->value = PiecewiseLinear::constant(best.value, h);
    return {best.value, std::move(node)};
  }

  void expand(PolicyNode& node, const std::vector<std::size_t>& members) {
    const Intervals iv = intervals(members, node.step, node.hi);
    const std::size_t p = iv.gammas.size();
    node.gammas = iv.gammas;
    Cursor sets(iv, members);
    const std::size_t first = q_of_z(node.gammas, node.lo);  // interval holding lo
    node.children.assign(p + 1, nullptr);
    node.candidates.assign(p, -std::numeric_limits<double>::infinity());

    // Inside the window: the best target at or below z among targets in
    // the window, a nondecreasing function.
    std::vector<Segment> segs;
    double best = -std::numeric_limits<double>::infinity();
    std::size_t below_end = first;
    for (std::size_t i = first; i <= p; ++i) {
      const double lo = std::max(node.lo, i == 0 ? 0.0 : node.gammas[i - 1]);
      const double up = i < p ? node.gammas[i] : node.hi;
      if (!(up > lo)) {
        below_end = i + 1;  // a critical point exactly at lo
        continue;
      }
      auto child = build(sets.at(i), node.remaining - 1, lo, up);
      node.children[i] = child;
      const PiecewiseLinear window = child->value.window(lo, up);
      const PiecewiseLinear piece = std::isfinite(best) ? pwl_max(window, best) : window;
      for (const Segment& g : piece.segments()) {
        segs.push_back({segs.empty() ? g.lo : segs.back().hi, g.hi, g.slope, g.intercept});
      }
      if (i < p) {
        node.candidates[i] = child->value(up);
        best = std::max(best, node.candidates[i]);
      }
    }
    const double floor = segs.front().at(segs.front().lo);

    // Below the window only candidates above `floor` can change the value or
    // the chosen target. Shedding and termination never raise served
    // demand, so gamma * served bounds a candidate and prunes dominated
    // children without evaluating them.
    double below = -std::numeric_limits<double>::infinity();
    for (std::size_t i = below_end; i-- > 0;) {
      const double up = node.gammas[i];
      if (value_bound(iv, i, up) <= std::max(floor, below)) continue;
      Point cand = evaluate_point(sets.at(i), node.remaining - 1, up);
      node.children[i] = std::move(cand.node);
      node.candidates[i] = cand.value;
      below = std::max(below, cand.value);
    }

    PiecewiseLinear window(std::move(segs));
    node.value = (below > floor ? pwl_max(window, below) : window).simplified();
  }

  const Grid& grid_;
  const NoiseEnsemble& ensemble_;
  int horizon_;
  YieldOptions options_;
  double bound_;

  std::deque<MemberState> states_;
  std::unordered_map<std::string, std::size_t> state_index_;
  std::unordered_map<std::string, std::size_t> child_index_;
  std::unordered_map<std::uint64_t, double> loading_;
  std::unordered_map<std::string, std::vector<std::shared_ptr<const PolicyNode>>> memo_;
  std::size_t node_count_ = 0;
};

}  // namespace

OptimalYield optimal_yield(const Grid& grid, const NoiseEnsemble& ensemble, int horizon,
                           const YieldOptions& options) {
  if (horizon < 1) throw ValidationError("horizon must be at least 1");
  if (ensemble.lines() != grid.line_count() || ensemble.steps() < static_cast<std::size_t>(horizon)) {
    throw ValidationError("noise ensemble does not cover the grid and horizon");
  }
  if (!(options.z_max > 0.0)) throw ValidationError("z_max must be positive");
  return YieldSolver(grid, ensemble, horizon, options).solve();
}

namespace {

struct Choice {
  std::size_t child;
  double target;
};

// Ties prefer the larger target, i.e. less shedding.
Choice choose(const PolicyNode& node, double s) {
  if (node.is_point()) return {0, node.target};
  const std::size_t q = q_of_z(node.gammas, s);
  Choice best{q, s};
  double value = node.children[q]->value(s);
  for (std::size_t i = q; i-- > 0;) {
    if (node.candidates[i] > value + kTieTolerance) {
      value = node.candidates[i];
      best = {i, node.gammas[i]};
    }
  }
  return best;
}

PiecewiseLinear response_curve(const PolicyNode& node, double s) {
  std::vector<Segment> segs;
  if (node.is_point()) return {};
  const std::size_t q = q_of_z(node.gammas, s);
  for (std::size_t i = q_of_z(node.gammas, node.lo); i <= q; ++i) {
    const double lo = std::max(node.lo, i == 0 ? 0.0 : node.gammas[i - 1]);
    const double up = i < q ? node.gammas[i] : s;
    if (!(up > lo)) continue;
    const PiecewiseLinear window = node.children[i]->value.window(lo, up);
    for (const Segment& g : window.segments()) {
      // lambda = y / s
      const double a = segs.empty() ? g.lo / s : segs.back().hi;
      segs.push_back({a, g.hi / s, g.slope * s, g.intercept});
    }
  }
  return PiecewiseLinear(std::move(segs)).simplified();
}

}  // namespace

ControlVector extract_control(const PolicyTree& policy, double z0) {
  std::vector<double> lambdas;
  for (const PolicyStep& s : policy_path(policy, z0)) lambdas.push_back(s.lambda);
  return ControlVector(std::move(lambdas));
}

std::vector<PolicyStep> policy_path(const PolicyTree& policy, double z0) {
  if (!policy.root) throw ValidationError("empty policy");
  if (!(z0 > 0.0)) throw ValidationError("policy scale must be positive");
  std::vector<PolicyStep> path;
  const PolicyNode* node = policy.root.get();
  double s = z0;
  while (node && node->remaining > 1) {
    const Choice c = choose(*node, s);
    PolicyStep step;
    step.step = node->step;
    step.scale = s;
    step.target = c.target;
    step.lambda = std::min(1.0, c.target / s);
    step.value = node->value;
    step.response = response_curve(*node, s);
    path.push_back(std::move(step));
    node = node->children[c.child].get();
    s = c.target;
  }
  return path;
}

}  // namespace cascade
