#pragma once

#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace cascade {

/// slope * z + intercept on the half-open interval (lo, hi].
struct Segment {
  double lo = 0.0;
  double hi = 0.0;
  double slope = 0.0;
  double intercept = 0.0;

  double at(double z) const { return slope * z + intercept; }
};

/// Piecewise-linear function on (z_min, z_max] built from contiguous
/// segments (lo, hi]; z_min is normally 0. Jumps are allowed at segment
/// boundaries and the value at a boundary belongs to the segment on its
/// left.
class PiecewiseLinear {
 public:
  PiecewiseLinear() = default;
  explicit PiecewiseLinear(std::vector<Segment> segments);

  static PiecewiseLinear constant(double value, double z_max);
  static PiecewiseLinear linear(double slope, double z_max);

  /// Values left of the domain use the first segment, right of it the last.
  double operator()(double z) const;

  bool empty() const { return segments_.empty(); }
  double domain_min() const { return segments_.empty() ? 0.0 : segments_.front().lo; }
  double domain_max() const { return segments_.empty() ? 0.0 : segments_.back().hi; }
  std::span<const Segment> segments() const { return segments_; }
  std::size_t segment_count() const { return segments_.size(); }
  /// Interior segment boundaries.
  std::vector<double> breakpoints() const;
  std::size_t breakpoint_count() const { return segments_.empty() ? 0 : segments_.size() - 1; }

  /// Checks each segment's slope and every boundary jump against -tol.
  bool is_nondecreasing(double tol = 1e-12) const;

  PiecewiseLinear restricted(double z_max) const { return window(domain_min(), z_max); }
  /// The part of the function on (lo, hi].
  PiecewiseLinear window(double lo, double hi) const;
  /// Merges adjacent segments that describe the same line without a jump.
  PiecewiseLinear simplified(double tol = 1e-12) const;

  /// Header `z,value`, then one row per segment endpoint; a jump produces
  /// two rows at the same z.
  std::string to_csv() const;
  nlohmann::json to_json() const;

 private:
  std::vector<Segment> segments_;
};

/// Pointwise mean over the common domain (the smallest domain_max).
PiecewiseLinear pwl_average(std::span<const PiecewiseLinear> fs);

/// Pointwise max(f, c) on f's domain.
PiecewiseLinear pwl_max(const PiecewiseLinear& f, double c);

}  // namespace cascade
