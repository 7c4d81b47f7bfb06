#include "cascade/piecewise_linear.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

#include "cascade/errors.hpp"

namespace cascade {

namespace {

bool close(double a, double b, double tol) {
  return std::abs(a - b) <= tol * std::max({1.0, std::abs(a), std::abs(b)});
}

}  // namespace

PiecewiseLinear::PiecewiseLinear(std::vector<Segment> segments) : segments_(std::move(segments)) {
  for (std::size_t i = 0; i < segments_.size(); ++i) {
    const Segment& s = segments_[i];
    if (!(s.hi > s.lo)) throw ValidationError("piecewise-linear segment has an empty interval");
    if (i > 0 && segments_[i - 1].hi != s.lo) throw ValidationError("piecewise-linear segments are not contiguous");
  }
}

PiecewiseLinear PiecewiseLinear::constant(double value, double z_max) {
  return PiecewiseLinear({Segment{0.0, z_max, 0.0, value}});
}

PiecewiseLinear PiecewiseLinear::linear(double slope, double z_max) {
  return PiecewiseLinear({Segment{0.0, z_max, slope, 0.0}});
}

double PiecewiseLinear::operator()(double z) const {
  if (segments_.empty()) return 0.0;
  // First segment whose hi >= z.
  auto it = std::lower_bound(segments_.begin(), segments_.end(), z,
                             [](const Segment& s, double v) { return s.hi < v; });
  if (it == segments_.end()) --it;
  return it->at(z);
}

std::vector<double> PiecewiseLinear::breakpoints() const {
  std::vector<double> out;
  for (std::size_t i = 1; i < segments_.size(); ++i) out.push_back(segments_[i].lo);
  return out;
}

bool PiecewiseLinear::is_nondecreasing(double tol) const {
  for (std::size_t i = 0; i < segments_.size(); ++i) {
    const Segment& s = segments_[i];
    if (s.at(s.hi) < s.at(s.lo) - tol) return false;
    if (i > 0) {
      const Segment& prev = segments_[i - 1];
      if (s.at(s.lo) < prev.at(prev.hi) - tol) return false;
    }
  }
  return true;
}

PiecewiseLinear PiecewiseLinear::window(double lo, double hi) const {
  std::vector<Segment> out;
  for (const Segment& s : segments_) {
    const double a = std::max(s.lo, lo), b = std::min(s.hi, hi);
    if (b > a) out.push_back(Segment{a, b, s.slope, s.intercept});
  }
  if (!out.empty()) {
    // Extend the end segments when the window reaches past the domain.
    if (lo < out.front().lo) out.front().lo = lo;
    if (hi > out.back().hi) out.back().hi = hi;
  } else if (!segments_.empty() && hi > lo) {
    const Segment& edge = hi <= segments_.front().lo ? segments_.front() : segments_.back();
    out.push_back(Segment{lo, hi, edge.slope, edge.intercept});
  }
  return PiecewiseLinear(std::move(out));
}

PiecewiseLinear PiecewiseLinear::simplified(double tol) const {
  std::vector<Segment> out;
  for (const Segment& s : segments_) {
    if (!out.empty()) {
      Segment& last = out.back();
      if (close(last.slope, s.slope, tol) && close(last.at(s.lo), s.at(s.lo), tol)) {
        last.hi = s.hi;
        continue;
      }
    }
    out.push_back(s);
  }
  return PiecewiseLinear(std::move(out));
}

std::string PiecewiseLinear::to_csv() const {
  std::ostringstream os;
  os << std::setprecision(17) << "z,value\n";
  for (std::size_t i = 0; i < segments_.size(); ++i) {
    const Segment& s = segments_[i];
    const bool jump = i == 0 || segments_[i - 1].at(s.lo) != s.at(s.lo);
    if (jump) os << s.lo << ',' << s.at(s.lo) << '\n';
    os << s.hi << ',' << s.at(s.hi) << '\n';
  }
  return os.str();
}

nlohmann::json PiecewiseLinear::to_json() const {
  nlohmann::json segs = nlohmann::json::array();
  for (const Segment& s : segments_) {
    segs.push_back({{"lo", s.lo}, {"hi", s.hi}, {"slope", s.slope}, {"intercept", s.intercept}});
  }
  return {{"domain", {domain_min(), domain_max()}}, {"segments", std::move(segs)}};
}

PiecewiseLinear pwl_average(std::span<const PiecewiseLinear> fs) {
  if (fs.empty()) return {};
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  std::vector<double> cuts;
  for (const auto& f : fs) {
    if (f.empty()) throw ValidationError("cannot average an empty piecewise-linear function");
    lo = std::max(lo, f.domain_min());
    hi = std::min(hi, f.domain_max());
    for (const Segment& s : f.segments()) cuts.push_back(s.hi);
  }
  cuts.push_back(hi);
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

  const double inv = 1.0 / static_cast<double>(fs.size());
  std::vector<std::size_t> cursor(fs.size(), 0);
  std::vector<Segment> out;
  double left = lo;
  for (double right : cuts) {
    if (right <= left) continue;
    if (right > hi) break;
    Segment seg{left, right, 0.0, 0.0};
    for (std::size_t k = 0; k < fs.size(); ++k) {
      auto segs = fs[k].segments();
      while (cursor[k] + 1 < segs.size() && segs[cursor[k]].hi < right) ++cursor[k];
      seg.slope += segs[cursor[k]].slope;
      seg.intercept += segs[cursor[k]].intercept;
    }
    seg.slope *= inv;
    seg.intercept *= inv;
    out.push_back(seg);
    left = right;
  }
  return PiecewiseLinear(std::move(out));
}

PiecewiseLinear pwl_max(const PiecewiseLinear& f, double c) {
  std::vector<Segment> out;
  for (const Segment& s : f.segments()) {
    const double va = s.at(s.lo), vb = s.at(s.hi);
    if (va >= c && vb >= c) {
      out.push_back(s);
    } else if (va <= c && vb <= c) {
      out.push_back(Segment{s.lo, s.hi, 0.0, c});
    } else {
      double cross = (c - s.intercept) / s.slope;
      cross = std::clamp(cross, s.lo, s.hi);
      const Segment flat{0.0, 0.0, 0.0, c};
      const Segment& first = va < c ? flat : s;
      const Segment& second = va < c ? s : flat;
      if (cross > s.lo) out.push_back(Segment{s.lo, cross, first.slope, first.intercept});
      if (s.hi > cross) out.push_back(Segment{cross, s.hi, second.slope, second.intercept});
    }
  }
  return PiecewiseLinear(std::move(out));
}

}  // namespace cascade
