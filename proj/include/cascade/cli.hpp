#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cascade/grid.hpp"
#include "cascade/noise.hpp"
#include "cascade/saa.hpp"

namespace cascade::cli {

enum ExitCode : int { kOk = 0, kInternal = 1, kConfig = 2, kResource = 3 };

/// A line named either by its case id or by its endpoint bus ids.
struct LineSpec {
  std::optional<int> id;
  std::optional<std::pair<int, int>> endpoints;

  static LineSpec from_json(const nlohmann::json& j);
  /// "7" selects line id 7, "4-5" selects the line between buses 4 and 5.
  static LineSpec parse(std::string_view text);
  nlohmann::json to_json() const;
  std::size_t resolve(const Grid& grid) const;
};

struct ExperimentConfig {
  std::filesystem::path case_path;
  CaseFormat format = CaseFormat::native_json;
  double headroom = 0.2;
  double limit_floor = 5.0;  // MW
  std::vector<LineSpec> seed_outage;
  int T = 3;
  std::vector<int> horizons{2, 3, 4, 5};
  std::size_t N = 120;
  std::size_t n_eval = 1000;
  NoiseSpec spec = NoiseSpec::two_point(0.05, 0.5);
  std::uint64_t seed = 1;
  double conf = 0.95;
  std::filesystem::path output_dir = "out";
  unsigned threads = 1;
  std::size_t interval_guard = 100000;
  std::size_t node_guard = 2000000;

  /// Relative paths inside the document resolve against `base_dir`.
  static ExperimentConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
  static ExperimentConfig load(const std::filesystem::path& path);
  nlohmann::json to_json() const;
  void validate() const;
  SaaOptions saa_options() const;
};

/// Loads the case, balances it, calibrates limits on the intact grid and
/// removes the seed outage.
Grid prepare_grid(const ExperimentConfig& config);

/// Writes through a sibling temporary file and renames it into place.
void write_atomic(const std::filesystem::path& path, std::string_view contents);

/// Runs `body` and maps exceptions onto exit codes, reporting to stderr.
int guarded(const std::function<int()>& body);

int cmd_convert(const std::filesystem::path& input, const std::filesystem::path& output,
                std::optional<CaseFormat> format = std::nullopt);

/// `realization` < 0 runs the noiseless cascade; otherwise realization k of
/// the evaluation stream is replayed. Empty controls mean no shedding.
int cmd_simulate(const ExperimentConfig& config, const std::vector<double>& controls, long realization = -1);

int cmd_optimize(const ExperimentConfig& config);

int cmd_compare(const ExperimentConfig& config);

}  // namespace cascade::cli
