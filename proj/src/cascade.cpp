#include "cascade/cascade.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cascade/errors.hpp"

namespace cascade {

ControlVector::ControlVector(std::vector<double> lambdas) : lambdas_(std::move(lambdas)) {
  for (double l : lambdas_) {
    if (!(l > 0.0) || !(l <= 1.0)) {
      throw ValidationError("control factor " + std::to_string(l) + " outside (0, 1]");
    }
  }
}

CascadeState initial_state(const Grid& grid, double scale) {
  CascadeState s;
  s.t = 1;
  s.grid = grid;
  s.partition = find_islands(grid);
  s.dispatch = initial_dispatch(grid, scale);
  balance_islands(s.dispatch, s.partition);
  s.flows = solve_flows(grid, s.partition, s.dispatch.injections());
  return s;
}

std::vector<std::size_t> trip_set(const FlowSolution& flows, const Grid& grid,
                                  std::span<const double> eps_column) {
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < grid.line_count(); ++j) {
    if (!grid.active(j)) continue;
    if (noisy_flow(flows.flows[j], eps_column[j]) > grid.line(j).limit_mw * (1.0 + kTripTolerance)) {
      out.push_back(j);
    }
  }
  return out;
}

StepResult step(const CascadeState& state, double lambda, std::span<const double> eps_column) {
  if (!(lambda > 0.0) || !(lambda <= 1.0)) throw ValidationError("control factor outside (0, 1]");
  if (eps_column.size() < state.grid.line_count()) throw ValidationError("noise column does not cover all lines");

  Dispatch dispatch = state.dispatch;
  dispatch.scale(lambda);
  balance_islands(dispatch, state.partition);
  const FlowSolution flows = solve_flows(state.grid, state.partition, dispatch.injections());

  StepResult result;
  result.tripped = trip_set(flows, state.grid, eps_column);

  CascadeState& next = result.state;
  next.t = state.t + 1;
  next.grid = result.tripped.empty() ? state.grid : apply_outage(state.grid, result.tripped);
  next.partition = result.tripped.empty() ? state.partition : find_islands(next.grid);
  next.dispatch = std::move(dispatch);
  balance_islands(next.dispatch, next.partition);
  next.flows = solve_flows(next.grid, next.partition, next.dispatch.injections());
  return result;
}

Termination terminate(const CascadeState& state, std::span<const double> eps_column, double noise_bound) {
  if (!(noise_bound >= 0.0) || !(noise_bound < 1.0)) throw ValidationError("noise bound must lie in [0, 1)");
  double worst = 0.0;
  for (std::size_t j = 0; j < state.grid.line_count(); ++j) {
    if (!state.grid.active(j)) continue;
    const double u = state.grid.line(j).limit_mw;
    if (!std::isfinite(u)) continue;
    worst = std::max(worst, noisy_flow(state.flows.flows[j], eps_column[j]) / ((1.0 - noise_bound) * u));
  }
  Termination out{std::max(1.0, worst), state};
  if (out.psi > 1.0) {
    out.state.dispatch.scale(1.0 / out.psi);
    out.state.flows = solve_flows(out.state.grid, out.state.partition, out.state.dispatch.injections());
  }
  return out;
}

double served_fraction(const Grid& grid, const Dispatch& dispatch) {
  const double ref = grid.total_demand_reference();
  if (!(ref > 0.0)) return 1.0;
  return dispatch.total_demand() / ref;
}

CascadeTrace run(const Grid& grid, const ControlVector& controls, const Realization& realization,
                 double noise_bound, double initial_scale) {
  const std::size_t steps = controls.size() + 1;
  if (realization.steps() < steps || realization.lines() != grid.line_count()) {
    throw ValidationError("noise realization does not cover the grid and horizon");
  }
  CascadeTrace trace;
  trace.lambdas = controls.values();
  trace.states.push_back(initial_state(grid, initial_scale));
  for (std::size_t t = 0; t + 1 < steps; ++t) {
    StepResult r = step(trace.states.back(), controls[t], realization.column(t));
    trace.trips.push_back(std::move(r.tripped));
    trace.states.push_back(std::move(r.state));
  }
  Termination term = terminate(trace.states.back(), realization.column(steps - 1), noise_bound);
  trace.psi = term.psi;
  trace.yield = served_fraction(grid, term.state.dispatch);
  trace.states.push_back(std::move(term.state));
  return trace;
}

nlohmann::json trace_to_json(const CascadeTrace& trace, const Grid& grid) {
  using nlohmann::json;
  json steps = json::array();
  for (std::size_t s = 0; s < trace.states.size(); ++s) {
    const CascadeState& st = trace.states[s];
    const bool terminal = s + 1 == trace.states.size();
    double max_loading = 0.0;
    for (std::size_t j = 0; j < st.grid.line_count(); ++j) {
      if (st.grid.active(j) && std::isfinite(st.grid.line(j).limit_mw)) {
        max_loading = std::max(max_loading, std::abs(st.flows.flows[j]) / st.grid.line(j).limit_mw);
      }
    }
    json entry = {{"t", st.t},
                  {"terminal", terminal},
                  {"islands", st.partition.size()},
                  {"active_lines", st.grid.active_line_count()},
                  {"served_mw", st.dispatch.total_demand()},
                  {"max_loading", max_loading}};
    if (s < trace.trips.size()) {
      entry["lambda"] = trace.lambdas[s];
      json tripped = json::array();
      for (std::size_t j : trace.trips[s]) tripped.push_back(grid.line(j).label);
      entry["tripped"] = std::move(tripped);
    }
    steps.push_back(std::move(entry));
  }
  return {{"T", trace.lambdas.size() + 1},
          {"controls", trace.lambdas},
          {"steps", std::move(steps)},
          {"psi", trace.psi},
          {"yield", trace.yield}};
}

}  // namespace cascade
