#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace cascade {

/// Distribution of the multiplicative flow error applied by the tripping
/// rule. Every sample satisfies |eps| <= bound() < 1.
class NoiseSpec {
 public:
  enum class Kind { zero, two_point, uniform, table };

  static NoiseSpec zero();
  /// eps = margin / (1 - margin) with probability `prob`, else 0.
  static NoiseSpec two_point(double margin, double prob);
  /// eps ~ U[-bound, bound].
  static NoiseSpec uniform(double bound);
  /// Discrete distribution over (value, probability) pairs.
  static NoiseSpec table(std::vector<std::pair<double, double>> values);

  static NoiseSpec from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;

  Kind kind() const { return kind_; }
  double bound() const { return bound_; }
  double margin() const { return margin_; }
  double prob() const { return prob_; }
  const std::vector<std::pair<double, double>>& values() const { return table_; }

  /// Maps a uniform draw in [0, 1) to a noise value.
  double quantile(double u) const;

 private:
  Kind kind_ = Kind::zero;
  double bound_ = 0.0;
  double margin_ = 0.0;
  double prob_ = 0.0;
  std::vector<std::pair<double, double>> table_;
};

/// One realization: an m x T matrix of eps, stored column by column so
/// each time step's values are contiguous.
class Realization {
 public:
  Realization(std::span<const double> values, std::size_t lines, std::size_t steps)
      : values_(values), lines_(lines), steps_(steps) {}

  std::size_t lines() const { return lines_; }
  std::size_t steps() const { return steps_; }
  /// Noise for every line at 0-based step t.
  std::span<const double> column(std::size_t t) const { return values_.subspan(t * lines_, lines_); }
  double at(std::size_t line, std::size_t t) const { return values_[t * lines_ + line]; }

 private:
  std::span<const double> values_;
  std::size_t lines_;
  std::size_t steps_;
};

/// N realizations sampled from one spec. Realization k depends only on
/// (spec, seed, stream, k, m, T), so smaller ensembles are prefixes of
/// larger ones.
class NoiseEnsemble {
 public:
  NoiseEnsemble(NoiseSpec spec, std::size_t lines, std::size_t steps, std::vector<double> values,
                std::uint64_t seed);

  const NoiseSpec& spec() const { return spec_; }
  std::size_t lines() const { return lines_; }
  std::size_t steps() const { return steps_; }
  std::size_t size() const { return values_.size() / (lines_ * steps_); }
  std::uint64_t seed() const { return seed_; }

  Realization realization(std::size_t k) const;
  std::span<const double> values() const { return values_; }

 private:
  NoiseSpec spec_;
  std::size_t lines_;
  std::size_t steps_;
  std::vector<double> values_;
  std::uint64_t seed_;
};

/// `stream` separates independent uses of one seed (training vs evaluation).
NoiseEnsemble sample_ensemble(const NoiseSpec& spec, std::size_t lines, std::size_t steps,
                              std::size_t count, std::uint64_t seed, std::uint64_t stream = 0);

/// Builds an ensemble from explicit realizations (each lines*steps values).
NoiseEnsemble make_ensemble(const NoiseSpec& spec, std::size_t lines, std::size_t steps,
                            std::vector<std::vector<double>> realizations);

inline double noisy_flow(double flow, double eps) { return (1.0 + eps) * (flow < 0.0 ? -flow : flow); }

/// ceil(12 sigma^2 / delta^2 * ln(1/alpha)).
std::size_t sample_size(double sigma, double delta, double alpha);

}  // namespace cascade
