#include "cascade/saa.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <sstream>
#include <thread>

#include <boost/math/distributions/students_t.hpp>

#include "cascade/errors.hpp"

namespace cascade {

Evaluation summarize(std::vector<double> yields, double conf) {
  if (!(conf > 0.0) || !(conf < 1.0)) throw ValidationError("confidence level must lie in (0, 1)");
  Evaluation e;
  e.yields = std::move(yields);
  const std::size_t n = e.yields.size();
  if (n == 0) return e;
  // Shifted by the first sample so identical yields give an exact mean and zero spread.
  const double shift = e.yields.front();
  double sum = 0.0;
  for (double y : e.yields) sum += y - shift;
  const double offset = sum / static_cast<double>(n);
  e.mean = shift + offset;
  if (n < 2) return e;
  double ss = 0.0;
  for (double y : e.yields) ss += (y - shift - offset) * (y - shift - offset);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  const boost::math::students_t dist(static_cast<double>(n - 1));
  const double t = boost::math::quantile(dist, 0.5 + conf / 2.0);
  const double half = t * sd / std::sqrt(static_cast<double>(n));
  e.ci = std::make_pair(e.mean - half, e.mean + half);
  return e;
}

Evaluation evaluate_control(const Grid& grid, const ControlVector& control, const NoiseEnsemble& ensemble,
                            double conf, unsigned threads) {
  const std::size_t n = ensemble.size();
  std::vector<double> yields(n, 0.0);
  const double bound = ensemble.spec().bound();
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t k = begin; k < end; ++k) {
      yields[k] = run(grid, control, ensemble.realization(k), bound).yield;
    }
  };
  const std::size_t workers = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(1, n));
  if (workers == 1) {
    work(0, n);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    const std::size_t chunk = (n + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
      const std::size_t begin = std::min(n, w * chunk), end = std::min(n, begin + chunk);
      pool.emplace_back([&, w, begin, end] {
        try {
          work(begin, end);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }
  return summarize(std::move(yields), conf);
}

SaaResult saa_solve(const Grid& grid, const NoiseSpec& spec, std::size_t n_train, int horizon,
                    std::uint64_t seed, const SaaOptions& options) {
  if (horizon < 2) throw ValidationError("horizon must be at least 2");
  if (n_train < 1) throw ValidationError("at least one training realization is required");
  const auto T = static_cast<std::size_t>(horizon);
  const NoiseEnsemble training = sample_ensemble(spec, grid.line_count(), T, n_train, seed, kTrainingStream);

  SaaResult r;
  r.optimum = optimal_yield(grid, training, horizon, options.yield);
  r.control = extract_control(r.optimum.policy, 1.0);
  r.in_sample_yield = r.optimum.eta_hat(1.0);
  r.in_sample = evaluate_control(grid, r.control, training, options.conf, options.threads);
  if (options.n_eval > 0) {
    const NoiseEnsemble eval = sample_ensemble(spec, grid.line_count(), T, options.n_eval, seed, kEvaluationStream);
    r.out_of_sample = evaluate_control(grid, r.control, eval, options.conf, options.threads);
  } else {
    r.out_of_sample = r.in_sample;
  }
  r.n_train = n_train;
  r.n_eval = options.n_eval;
  r.seed = seed;
  r.horizon = horizon;
  r.spec = spec;
  return r;
}

ControlVector non_robust_control(const Grid& grid, int horizon, const YieldOptions& options) {
  if (horizon < 2) throw ValidationError("horizon must be at least 2");
  const NoiseEnsemble zero =
      sample_ensemble(NoiseSpec::zero(), grid.line_count(), static_cast<std::size_t>(horizon), 1, 0);
  return extract_control(optimal_yield(grid, zero, horizon, options).policy, 1.0);
}

ComparisonTable compare(const Grid& grid, const NoiseSpec& spec, std::span<const int> horizons,
                        std::size_t n_train, std::uint64_t seed, const SaaOptions& options) {
  ComparisonTable table;
  for (int horizon : horizons) {
    const auto T = static_cast<std::size_t>(horizon);
    ComparisonRow row;
    row.horizon = horizon;
    const NoiseEnsemble zero = sample_ensemble(NoiseSpec::zero(), grid.line_count(), T, 1, 0);
    const OptimalYield deterministic = optimal_yield(grid, zero, horizon, options.yield);
    row.nonrobust_control = extract_control(deterministic.policy, 1.0);
    row.nonrobust_breakpoints = deterministic.eta_hat.breakpoint_count();
    row.nonrobust_under_nonrobust = run(grid, row.nonrobust_control, zero.realization(0), 0.0).yield;

    const SaaResult robust = saa_solve(grid, spec, n_train, horizon, seed, options);
    row.robust_control = robust.control;
    row.robust_in_sample = robust.in_sample;
    row.robust_breakpoints = robust.optimum.eta_hat.breakpoint_count();
    row.robust_under_robust = robust.in_sample.mean;
    row.robust_under_robust_eval = robust.out_of_sample.mean;

    const NoiseEnsemble training = sample_ensemble(spec, grid.line_count(), T, n_train, seed, kTrainingStream);
    row.nonrobust_under_robust =
        evaluate_control(grid, row.nonrobust_control, training, options.conf, options.threads).mean;
    if (options.n_eval > 0) {
      const NoiseEnsemble eval =
          sample_ensemble(spec, grid.line_count(), T, options.n_eval, seed, kEvaluationStream);
      row.nonrobust_under_robust_eval =
          evaluate_control(grid, row.nonrobust_control, eval, options.conf, options.threads).mean;
    } else {
      row.nonrobust_under_robust_eval = row.nonrobust_under_robust;
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

nlohmann::json to_json(const Evaluation& e) {
  nlohmann::json j = {{"mean", e.mean}, {"n", e.yields.size()}};
  if (e.ci) {
    j["ci"] = {e.ci->first, e.ci->second};
  } else {
    j["ci"] = nullptr;
  }
  return j;
}

nlohmann::json to_json(const SaaResult& r) {
  return {{"horizon", r.horizon},
          {"control", r.control.values()},
          {"in_sample_yield", r.in_sample_yield},
          {"in_sample", to_json(r.in_sample)},
          {"out_of_sample", to_json(r.out_of_sample)},
          {"n_train", r.n_train},
          {"n_eval", r.n_eval},
          {"seed", r.seed},
          {"noise", r.spec.to_json()},
          {"policy_nodes", r.optimum.node_count},
          {"eta_hat_breakpoints", r.optimum.eta_hat.breakpoint_count()}};
}

nlohmann::json to_json(const ComparisonTable& t) {
  nlohmann::json rows = nlohmann::json::array();
  for (const ComparisonRow& r : t.rows) {
    rows.push_back({{"T", r.horizon},
                    {"nonrobust_control", r.nonrobust_control.values()},
                    {"robust_control", r.robust_control.values()},
                    {"nonrobust_under_nonrobust", r.nonrobust_under_nonrobust},
                    {"nonrobust_under_robust", r.nonrobust_under_robust},
                    {"robust_under_robust", r.robust_under_robust},
                    {"nonrobust_under_robust_eval", r.nonrobust_under_robust_eval},
                    {"robust_under_robust_eval", r.robust_under_robust_eval},
                    {"robust_in_sample", to_json(r.robust_in_sample)}});
  }
  return {{"rows", std::move(rows)}};
}

std::string format_table(const ComparisonTable& t) {
  std::ostringstream os;
  auto line = [&](const char* label, auto field) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%-44s", label);
    os << buf;
    for (const ComparisonRow& r : t.rows) {
      std::snprintf(buf, sizeof buf, "%9.2f%%", 100.0 * field(r));
      os << buf;
    }
    os << '\n';
  };
  char buf[64];
  std::snprintf(buf, sizeof buf, "%-44s", "T");
  os << buf;
  for (const ComparisonRow& r : t.rows) {
    std::snprintf(buf, sizeof buf, "%10d", r.horizon);
    os << buf;
  }
  os << '\n';
  line("non-robust control, noiseless model", [](const ComparisonRow& r) { return r.nonrobust_under_nonrobust; });
  line("non-robust control, noisy model (training)", [](const ComparisonRow& r) { return r.nonrobust_under_robust; });
  line("robust control, noisy model (training)", [](const ComparisonRow& r) { return r.robust_under_robust; });
  line("non-robust control, noisy model (held out)",
       [](const ComparisonRow& r) { return r.nonrobust_under_robust_eval; });
  line("robust control, noisy model (held out)", [](const ComparisonRow& r) { return r.robust_under_robust_eval; });
  return os.str();
}

}  // namespace cascade
