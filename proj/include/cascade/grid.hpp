#pragma once

#include <filesystem>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace cascade {

/// A bus. Its index in Grid::buses() is the internal id; `label` is the
/// number used by the source file.
struct Bus {
  int label = 0;
  double pd_mw = 0.0;
  double pg_mw = 0.0;

  /// Net injection: > 0 generator, < 0 load.
  double injection() const { return pg_mw - pd_mw; }
};

/// A transmission line between two internal bus ids. An infinite limit
/// means the line is unrated (MATPOWER rateA = 0).
struct Line {
  int label = 0;
  int from_bus = 0;
  int to_bus = 0;
  double reactance = 0.0;  // per unit
  double limit_mw = std::numeric_limits<double>::infinity();
};

/// Immutable grid: buses, lines, and which lines are in service.
///
/// Static data lives behind a shared pointer so copies that only differ in
/// their active-line mask (the common case during a cascade) stay cheap.
/// Parallel lines are allowed.
class Grid {
 public:
  Grid() = default;
  Grid(std::vector<Bus> buses, std::vector<Line> lines, double base_mva = 100.0);

  std::span<const Bus> buses() const { return data_->buses; }
  std::span<const Line> lines() const { return data_->lines; }
  const Bus& bus(std::size_t i) const { return data_->buses[i]; }
  const Line& line(std::size_t j) const { return data_->lines[j]; }
  std::size_t bus_count() const { return data_->buses.size(); }
  std::size_t line_count() const { return data_->lines.size(); }
  double base_mva() const { return data_->base_mva; }

  bool active(std::size_t j) const { return active_[j] != 0; }
  std::span<const char> active_mask() const { return active_; }
  std::size_t active_line_count() const;

  /// Original demand per bus, fixed when the grid was built from buses.
  std::span<const double> demand_reference() const { return data_->demand_reference; }
  double total_demand_reference() const { return data_->total_demand; }

  std::vector<double> injections() const;

  std::optional<std::size_t> find_bus(int label) const;
  std::optional<std::size_t> find_line(int label) const;
  /// First active line joining the two labelled buses, in either orientation.
  std::optional<std::size_t> find_line_between(int from_label, int to_label) const;

  /// Same topology and data with a different in-service mask.
  Grid with_active(std::vector<char> mask) const;
  /// Same topology and mask with replaced limits.
  Grid with_limits(std::span<const double> limits_mw) const;

  friend bool operator==(const Grid& a, const Grid& b);

 private:
  struct Data {
    std::vector<Bus> buses;
    std::vector<Line> lines;
    double base_mva = 100.0;
    std::vector<double> demand_reference;
    double total_demand = 0.0;
  };

  std::shared_ptr<const Data> data_ = std::make_shared<Data>();
  std::vector<char> active_;
};

enum class CaseFormat { native_json, matpower };

CaseFormat case_format_from_string(std::string_view name);
/// Guess from the file extension: `.m` is MATPOWER, anything else native.
CaseFormat case_format_from_path(const std::filesystem::path& path);

Grid parse_case(const std::filesystem::path& path, CaseFormat format);
Grid parse_native_json(std::string_view text);
Grid parse_matpower(std::string_view text);

/// Native JSON case. Lines out of service carry `"active": false`; unrated
/// lines carry `"rate_mw": null`.
std::string to_native_json(const Grid& grid);

/// Sets u_j = max((1 + headroom) |f0_j|, floor) from the base-case flows.
/// Requires every island to be balanced.
Grid calibrate_limits(const Grid& grid, double headroom, double floor_mw);

/// Marks the given internal line ids out of service.
Grid apply_outage(const Grid& grid, std::span<const std::size_t> line_ids);

/// Scales generation or demand of each island so it balances, using the
/// same rule the cascade applies after a trip. The result's demand
/// reference is its (possibly scaled) demand.
Grid balance_grid(const Grid& grid);

}  // namespace cascade
