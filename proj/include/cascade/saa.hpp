#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cascade/cascade.hpp"
#include "cascade/grid.hpp"
#include "cascade/noise.hpp"
#include "cascade/yield_function.hpp"

namespace cascade {

/// Noise stream ids; training and evaluation ensembles never share draws.
inline constexpr std::uint64_t kTrainingStream = 0;
inline constexpr std::uint64_t kEvaluationStream = 1;

struct SaaOptions {
  std::size_t n_eval = 1000;
  double conf = 0.95;
  unsigned threads = 1;
  YieldOptions yield;
};

struct Evaluation {
  double mean = 0.0;
  std::optional<std::pair<double, double>> ci;  // absent when fewer than 2 realizations
  std::vector<double> yields;

  double width() const { return ci ? ci->second - ci->first : 0.0; }
};

struct SaaResult {
  ControlVector control;
  double in_sample_yield = 0.0;  // optimal average over the training ensemble
  Evaluation in_sample;          // the control replayed on the training ensemble
  Evaluation out_of_sample;      // the control on an independent ensemble
  std::size_t n_train = 0;
  std::size_t n_eval = 0;
  std::uint64_t seed = 0;
  int horizon = 2;
  NoiseSpec spec;
  OptimalYield optimum;
};

/// Student-t interval mean +- t_{(1+conf)/2, n-1} s / sqrt(n).
Evaluation summarize(std::vector<double> yields, double conf);

/// Replays the control on every realization (in parallel when threads > 1)
/// and summarizes. Results do not depend on the thread count.
Evaluation evaluate_control(const Grid& grid, const ControlVector& control, const NoiseEnsemble& ensemble,
                            double conf, unsigned threads = 1);

SaaResult saa_solve(const Grid& grid, const NoiseSpec& spec, std::size_t n_train, int horizon,
                    std::uint64_t seed, const SaaOptions& options = {});

/// Deterministic optimum: one noiseless realization, one factor per step.
ControlVector non_robust_control(const Grid& grid, int horizon, const YieldOptions& options = {});

struct ComparisonRow {
  int horizon = 2;
  ControlVector nonrobust_control;
  ControlVector robust_control;
  double nonrobust_under_nonrobust = 0.0;
  double nonrobust_under_robust = 0.0;  // training ensemble
  double robust_under_robust = 0.0;     // training ensemble
  double nonrobust_under_robust_eval = 0.0;  // evaluation ensemble
  double robust_under_robust_eval = 0.0;     // evaluation ensemble
  Evaluation robust_in_sample;
  std::size_t nonrobust_breakpoints = 0;  // of the noiseless optimal yield
  std::size_t robust_breakpoints = 0;     // of the training-ensemble optimal yield
};

struct ComparisonTable {
  std::vector<ComparisonRow> rows;
};

ComparisonTable compare(const Grid& grid, const NoiseSpec& spec, std::span<const int> horizons,
                        std::size_t n_train, std::uint64_t seed, const SaaOptions& options = {});

nlohmann::json to_json(const Evaluation& e);
nlohmann::json to_json(const SaaResult& r);
nlohmann::json to_json(const ComparisonTable& t);
std::string format_table(const ComparisonTable& t);

}  // namespace cascade
