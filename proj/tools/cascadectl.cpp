#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cascade/cli.hpp"
#include "cascade/errors.hpp"

namespace {

using cascade::NoiseSpec;
using cascade::cli::ExperimentConfig;

// Flags left unset keep the value from the config file.
struct Overrides {
  std::string config;
  std::optional<std::string> case_path, format, noise, output_dir;
  std::optional<double> headroom, floor_mw, conf;
  std::optional<int> T;
  std::optional<std::vector<int>> horizons;
  std::optional<std::vector<std::string>> outage;
  std::optional<std::size_t> N, n_eval, interval_guard;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;

  void attach(CLI::App* cmd) {
    cmd->add_option("-c,--config", config, "Experiment config (JSON)");
    cmd->add_option("--case", case_path, "Case file");
    cmd->add_option("--format", format, "Case format: native_json or matpower");
    cmd->add_option("--headroom", headroom, "Limit headroom over base flows");
    cmd->add_option("--floor", floor_mw, "Minimum line limit in MW");
    cmd->add_option("--outage", outage, "Seed outage lines: id or from-to");
    cmd->add_option("-T,--horizon", T, "Horizon, termination step included");
    cmd->add_option("--horizons", horizons, "Horizons for compare");
    cmd->add_option("-N,--samples", N, "Training realizations");
    cmd->add_option("--n-eval", n_eval, "Held-out realizations");
    cmd->add_option("--noise", noise, "zero | two_point:MARGIN:PROB | uniform:BOUND");
    cmd->add_option("--seed", seed, "Random seed");
    cmd->add_option("--conf", conf, "Confidence level");
    cmd->add_option("-o,--out", output_dir, "Output directory");
    cmd->add_option("--threads", threads, "Worker threads");
    cmd->add_option("--interval-guard", interval_guard, "Critical points allowed per node");
  }

  static NoiseSpec parse_noise(const std::string& text) {
    std::vector<std::string> parts;
    std::size_t start = 0;
    for (std::size_t pos; (pos = text.find(':', start)) != std::string::npos; start = pos + 1) {
      parts.push_back(text.substr(start, pos - start));
    }
    parts.push_back(text.substr(start));
    try {
      if (parts[0] == "zero" && parts.size() == 1) return NoiseSpec::zero();
      if (parts[0] == "two_point" && parts.size() == 3) {
        return NoiseSpec::two_point(std::stod(parts[1]), std::stod(parts[2]));
      }
      if (parts[0] == "uniform" && parts.size() == 2) return NoiseSpec::uniform(std::stod(parts[1]));
    } catch (const std::logic_error&) {
    }
    throw cascade::ValidationError("cannot parse noise '" + text + "'");
  }

  ExperimentConfig build() const {
    ExperimentConfig c;
    if (!config.empty()) {
      c = ExperimentConfig::load(config);
    } else if (!case_path) {
      throw cascade::ValidationError("either --config or --case is required");
    }
    if (case_path) {
      c.case_path = *case_path;
      if (!format) c.format = cascade::case_format_from_path(c.case_path);
    }
    if (format) c.format = cascade::case_format_from_string(*format);
    if (headroom) c.headroom = *headroom;
    if (floor_mw) c.limit_floor = *floor_mw;
    if (outage) {
      c.seed_outage.clear();
      for (const std::string& s : *outage) c.seed_outage.push_back(cascade::cli::LineSpec::parse(s));
    }
    if (T) c.T = *T;
    if (horizons) c.horizons = *horizons;
    if (N) c.N = *N;
    if (n_eval) c.n_eval = *n_eval;
    if (noise) c.spec = parse_noise(*noise);
    if (seed) c.seed = *seed;
    if (conf) c.conf = *conf;
    if (output_dir) c.output_dir = *output_dir;
    if (threads) c.threads = *threads;
    if (interval_guard) c.interval_guard = *interval_guard;
    c.validate();
    return c;
  }
};

}  // namespace

int main(int argc, char** argv) {
  namespace cli = cascade::cli;
  CLI::App app{"Cascading-failure simulation and robust load-shedding optimization"};
  app.require_subcommand(1);

  std::string convert_in, convert_out;
  std::optional<std::string> convert_format;
  CLI::App* convert = app.add_subcommand("convert", "Convert a case file to native JSON");
  convert->add_option("input", convert_in, "Input case")->required();
  convert->add_option("output", convert_out, "Output JSON")->required();
  convert->add_option("--from", convert_format, "Input format: native_json or matpower");

  Overrides sim_flags, opt_flags, cmp_flags;
  std::vector<double> controls;
  long realization = -1;
  CLI::App* simulate = app.add_subcommand("simulate", "Run one cascade and write its trace");
  sim_flags.attach(simulate);
  simulate->add_option("--controls", controls, "Shedding factors for steps 1..T-1")->delimiter(',');
  simulate->add_option("--realization", realization, "Held-out noise realization index (default: noiseless)");

  CLI::App* optimize = app.add_subcommand("optimize", "Compute the robust control by sample average approximation");
  opt_flags.attach(optimize);
  CLI::App* compare = app.add_subcommand("compare", "Robust versus non-robust comparison table");
  cmp_flags.attach(compare);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? cli::kOk : cli::kConfig;
  }

  return cli::guarded([&] {
    if (convert->parsed()) {
      std::optional<cascade::CaseFormat> format;
      if (convert_format) format = cascade::case_format_from_string(*convert_format);
      return cli::cmd_convert(convert_in, convert_out, format);
    }
    if (simulate->parsed()) return cli::cmd_simulate(sim_flags.build(), controls, realization);
    if (optimize->parsed()) return cli::cmd_optimize(opt_flags.build());
    return cli::cmd_compare(cmp_flags.build());
  });
}
