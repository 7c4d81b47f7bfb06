#include "cascade/noise.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "cascade/errors.hpp"

namespace cascade {

NoiseSpec NoiseSpec::zero() { return NoiseSpec{}; }

NoiseSpec NoiseSpec::two_point(double margin, double prob) {
  if (!(margin >= 0.0) || !(margin < 0.5)) {
    throw ValidationError("two-point margin must lie in [0, 0.5) so that the bound stays below 1");
  }
  if (!(prob >= 0.0) || !(prob <= 1.0)) throw ValidationError("two-point probability must lie in [0, 1]");
  NoiseSpec s;
  s.kind_ = Kind::two_point;
  s.margin_ = margin;
  s.prob_ = prob;
  s.bound_ = margin / (1.0 - margin);
  return s;
}

NoiseSpec NoiseSpec::uniform(double bound) {
  if (!(bound >= 0.0) || !(bound < 1.0)) throw ValidationError("uniform noise bound must lie in [0, 1)");
  NoiseSpec s;
  s.kind_ = Kind::uniform;
  s.bound_ = bound;
  return s;
}

NoiseSpec NoiseSpec::table(std::vector<std::pair<double, double>> values) {
  if (values.empty()) throw ValidationError("noise table is empty");
  double total = 0.0, bound = 0.0;
  for (const auto& [v, p] : values) {
    if (!std::isfinite(v) || !(p >= 0.0)) throw ValidationError("noise table entry is invalid");
    total += p;
    bound = std::max(bound, std::abs(v));
  }
  if (std::abs(total - 1.0) > 1e-9) throw ValidationError("noise table probabilities must sum to 1");
  if (!(bound < 1.0)) throw ValidationError("noise table values must satisfy |eps| < 1");
  NoiseSpec s;
  s.kind_ = Kind::table;
  s.bound_ = bound;
  s.table_ = std::move(values);
  return s;
}

NoiseSpec NoiseSpec::from_json(const nlohmann::json& j) {
  const std::string kind = j.value("kind", std::string("zero"));
  if (kind == "zero") return zero();
  if (kind == "two_point") return two_point(j.value("margin", 0.05), j.value("prob", 0.5));
  if (kind == "uniform") {
    if (!j.contains("bound")) throw ValidationError("uniform noise needs 'bound'");
    return uniform(j.at("bound").get<double>());
  }
  if (kind == "table") {
    std::vector<std::pair<double, double>> values;
    for (const auto& entry : j.at("values")) {
      values.emplace_back(entry.at("value").get<double>(), entry.at("prob").get<double>());
    }
    return table(std::move(values));
  }
  throw ValidationError("unknown noise kind '" + kind + "'");
}

nlohmann::json NoiseSpec::to_json() const {
  switch (kind_) {
    case Kind::zero:
      return {{"kind", "zero"}};
    case Kind::two_point:
      return {{"kind", "two_point"}, {"margin", margin_}, {"prob", prob_}};
    case Kind::uniform:
      return {{"kind", "uniform"}, {"bound", bound_}};
    case Kind::table: {
      nlohmann::json values = nlohmann::json::array();
      for (const auto& [v, p] : table_) values.push_back({{"value", v}, {"prob", p}});
      return {{"kind", "table"}, {"values", values}};
    }
  }
  return {};
}

double NoiseSpec::quantile(double u) const {
  switch (kind_) {
    case Kind::zero:
      return 0.0;
    case Kind::two_point:
      return u < prob_ ? bound_ : 0.0;
    case Kind::uniform:
      return std::clamp(bound_ * (2.0 * u - 1.0), -bound_, bound_);
    case Kind::table: {
      double acc = 0.0;
      for (const auto& [v, p] : table_) {
        acc += p;
        if (u < acc) return v;
      }
      return table_.back().first;
    }
  }
  return 0.0;
}

NoiseEnsemble::NoiseEnsemble(NoiseSpec spec, std::size_t lines, std::size_t steps,
                             std::vector<double> values, std::uint64_t seed)
    : spec_(std::move(spec)), lines_(lines), steps_(steps), values_(std::move(values)), seed_(seed) {
  if (lines_ == 0 || steps_ == 0) throw ValidationError("ensemble needs at least one line and one step");
  if (values_.size() % (lines_ * steps_) != 0) throw ValidationError("ensemble data has an inconsistent shape");
}

Realization NoiseEnsemble::realization(std::size_t k) const {
  const std::size_t block = lines_ * steps_;
  return Realization(std::span<const double>(values_).subspan(k * block, block), lines_, steps_);
}

NoiseEnsemble sample_ensemble(const NoiseSpec& spec, std::size_t lines, std::size_t steps,
                              std::size_t count, std::uint64_t seed, std::uint64_t stream) {
  if (lines == 0 || steps == 0 || count == 0) throw ValidationError("ensemble shape must be positive");
  if (!(spec.bound() < 1.0)) throw ValidationError("noise bound must be below 1");
  const std::size_t block = lines * steps;
  std::vector<double> values(block * count, 0.0);
  if (spec.kind() != NoiseSpec::Kind::zero) {
    for (std::size_t k = 0; k < count; ++k) {
      std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                        static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(k),
                        static_cast<std::uint32_t>(k >> 32)};
      std::mt19937_64 rng(seq);
      for (std::size_t i = 0; i < block; ++i) {
        // 53-bit uniform in [0, 1), independent of the standard library's distributions.
        const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
        values[k * block + i] = spec.quantile(u);
      }
    }
  }
  return NoiseEnsemble(spec, lines, steps, std::move(values), seed);
}

NoiseEnsemble make_ensemble(const NoiseSpec& spec, std::size_t lines, std::size_t steps,
                            std::vector<std::vector<double>> realizations) {
  std::vector<double> values;
  for (const auto& r : realizations) {
    if (r.size() != lines * steps) throw ValidationError("realization has the wrong shape");
    for (double v : r) {
      if (std::abs(v) > spec.bound() + 1e-15) throw ValidationError("realization value exceeds the noise bound");
    }
    values.insert(values.end(), r.begin(), r.end());
  }
  return NoiseEnsemble(spec, lines, steps, std::move(values), 0);
}

std::size_t sample_size(double sigma, double delta, double alpha) {
  if (!(sigma > 0.0) || !(delta > 0.0) || !(alpha > 0.0) || !(alpha <= 1.0)) {
    throw ValidationError("sample_size needs sigma > 0, delta > 0, 0 < alpha <= 1");
  }
  const double n = 12.0 * sigma * sigma / (delta * delta) * std::log(1.0 / alpha);
  // Guard against ln/division rounding pushing an exact integer up by one ulp.
  const double rounded = std::round(n);
  if (std::abs(n - rounded) <= 1e-9 * std::max(1.0, rounded)) return static_cast<std::size_t>(rounded);
  return static_cast<std::size_t>(std::ceil(n));
}

}  // namespace cascade
