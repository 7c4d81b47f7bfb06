// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
// criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <fcntl.h>
#include <unistd.h>

#include "cascade/cascade.hpp"
#include "cascade/cli.hpp"
#include "cascade/dc_flow.hpp"
#include "cascade/saa.hpp"
#include "cascade/yield_function.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace cascade;

namespace {

struct BoundLedger {
  std::size_t calls = 0;
  std::size_t violations = 0;
  double worst_ratio = 0.0;

  void record(std::size_t breakpoints, std::size_t n, std::size_t m, int horizon) {
    const double bound = breakpoint_bound(n, m, horizon);
    ++calls;
    worst_ratio = std::max(worst_ratio, static_cast<double>(breakpoints) / bound);
    if (static_cast<double>(breakpoints) > bound) ++violations;
  }
};

BoundLedger bounds;

OptimalYield solve(const Grid& g, const NoiseEnsemble& e, int horizon, const YieldOptions& opt = {}) {
  OptimalYield y = optimal_yield(g, e, horizon, opt);
  bounds.record(y.eta_hat.breakpoint_count(), e.size(), g.line_count(), horizon);
  return y;
}

SaaResult saa(const Grid& g, const NoiseSpec& spec, std::size_t n, int horizon, const SaaOptions& opt) {
  SaaResult r = saa_solve(g, spec, n, horizon, 1, opt);
  bounds.record(r.optimum.eta_hat.breakpoint_count(), n, g.line_count(), horizon);
  return r;
}

int failures = 0;

void report(int id, bool pass, const std::string& detail, double seconds) {
  std::printf("%s criterion %d: %s (%.1fs)\n", pass ? "PASS" : "FAIL", id, detail.c_str(), seconds);
  std::fflush(stdout);
  failures += !pass;
}

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string format(const char* fmt, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, fmt, args...);
  return buf;
}

cli::ExperimentConfig ieee118_config() {
  cli::ExperimentConfig c;
  c.case_path = fs::path(CASCADE_DATA_DIR) / "case118.m";
  c.format = CaseFormat::matpower;
  c.seed_outage = {cli::LineSpec::parse("4-5")};
  c.N = 120;
  c.n_eval = 1000;
  c.spec = NoiseSpec::two_point(0.05, 0.5);
  c.seed = 1;
  return c;
}

unsigned worker_count() { return std::max(1u, std::min(8u, std::thread::hardware_concurrency())); }

void criterion1() {
  Stopwatch clock;
  std::mt19937_64 rng(1001);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 29);
    const int m = n - 1 + static_cast<int>(rng() % static_cast<unsigned>(n + 1));
    const Grid g = oracle::random_balanced_grid(rng, n, m);
    const std::vector<double> beta = g.injections();
    const std::vector<double> fast = solve_flows(g, beta).flows;
    const std::vector<double> dense = oracle::dense_flows(g, beta);
    for (std::size_t j = 0; j < fast.size(); ++j) worst = std::max(worst, std::abs(fast[j] - dense[j]));
  }
  report(1, worst <= 1e-8, format("200 grids, max |f - f_dense| = %.3g <= 1e-8", worst), clock.seconds());
}

void criterion2() {
  Stopwatch clock;
  std::mt19937_64 rng(1002);
  std::uniform_real_distribution<double> zdist(0.0, 1.0);
  const NoiseSpec spec = NoiseSpec::two_point(0.05, 0.5);
  bool shape = true;
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const Grid g = oracle::random_cascade_grid(rng, 3 + trial % 14, 4 + trial % 19);
    const NoiseEnsemble e = sample_ensemble(spec, g.line_count(), 1, 1, 2000 + trial);
    YieldOptions opt;
    opt.z_max = 2.0;
    const PiecewiseLinear theta = solve(g, e, 1, opt).eta_hat;
    shape = shape && theta.segment_count() <= 2 && theta.is_nondecreasing();
    if (theta.segment_count() == 2) shape = shape && theta.segments()[1].slope == 0.0;
    for (int s = 0; s < 50; ++s) {
      const double z = 2.0 * (1e-3 + (1.0 - 1e-3) * zdist(rng));
      const double direct = run(g, ControlVector(), e.realization(0), spec.bound(), z).yield;
      worst = std::max(worst, std::abs(theta(z) - direct));
    }
  }
  const bool pass = shape && worst <= 1e-12;
  report(2, pass,
         format("100 instances, shape %s, max |theta - simulated| = %.3g over 5000 z", shape ? "ok" : "violated",
                worst),
         clock.seconds());
}

void criterion3() {
  Stopwatch clock;
  std::mt19937_64 rng(1003);
  std::uniform_real_distribution<double> zdist(0.05, 1.0);
  const NoiseSpec spec = NoiseSpec::two_point(0.05, 0.5);
  double worst_gap = 0.0, worst_excess = 0.0;
  int points = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 4 + static_cast<int>(rng() % 9);
    const int m = std::min(20, n + static_cast<int>(rng() % 8));
    const Grid g = oracle::random_cascade_grid(rng, n, m);
    const int horizon = trial % 2 ? 3 : 2;
    const std::size_t N = 1 + static_cast<std::size_t>(rng() % 4);
    const NoiseEnsemble e = sample_ensemble(spec, g.line_count(), static_cast<std::size_t>(horizon), N, 3000 + trial);
    const OptimalYield y = solve(g, e, horizon);
    oracle::CascadeOracle o(g, e);
    for (int s = 0; s < 20; ++s) {
      const double z = zdist(rng);
      const double brute = o.grid_search(horizon, z, 1000);
      const double eta = y.eta_hat(z);
      worst_gap = std::max(worst_gap, std::abs(eta - brute));
      worst_excess = std::max(worst_excess, brute - eta);
      ++points;
    }
  }
  const bool pass = worst_gap <= 1e-3 && worst_excess <= 1e-9;
  report(3, pass,
         format("%d points on 50 grids, max |eta - grid max| = %.3g <= 1e-3, grid never above eta (%.3g)", points,
                worst_gap, worst_excess),
         clock.seconds());
}

void criterion4() {
  Stopwatch clock;
  const std::size_t trials = 10000;
  const Grid g({Bus{1, 0, 3}, Bus{2, 1, 0}, Bus{3, 1, 0}, Bus{4, 1, 0}},
               {Line{1, 0, 1, 1.0, 1.0}, Line{2, 0, 2, 1.0, 1.0}, Line{3, 0, 3, 1.0, 1.0}});
  const FlowSolution flows{{1.01, 0.97, 0.90}, {0, 0, 0, 0}};
  const NoiseEnsemble e = sample_ensemble(NoiseSpec::two_point(0.05, 0.5), 3, 1, trials, 4004);
  std::vector<double> count(3, 0.0);
  for (std::size_t k = 0; k < trials; ++k) {
    for (std::size_t j : trip_set(flows, g, e.realization(k).column(0))) count[j] += 1.0;
  }
  const double expected[3] = {1.0, 0.5, 0.0};
  bool pass = true;
  std::string detail;
  for (int j = 0; j < 3; ++j) {
    const double rate = count[j] / static_cast<double>(trials);
    const double sigma = std::sqrt(expected[j] * (1.0 - expected[j]) / static_cast<double>(trials));
    pass = pass && std::abs(rate - expected[j]) <= 3.0 * sigma;
    detail += format("%s%.0f%%: %.4f (expect %.1f +- %.4f)", j ? ", " : "", 100.0 * flows.flows[static_cast<std::size_t>(j)],
                     rate, expected[j], 3.0 * sigma);
  }
  report(4, pass, "trip rates " + detail, clock.seconds());
}

struct Table118 {
  ComparisonTable table;
  double seconds = 0.0;
};

Table118 criterion6(const Grid& grid, const cli::ExperimentConfig& config) {
  Stopwatch clock;
  SaaOptions opt = config.saa_options();
  opt.threads = worker_count();
  Table118 out;
  out.table = compare(grid, config.spec, config.horizons, config.N, config.seed, opt);
  for (const ComparisonRow& r : out.table.rows) {
    bounds.record(r.nonrobust_breakpoints, 1, grid.line_count(), r.horizon);
    bounds.record(r.robust_breakpoints, config.N, grid.line_count(), r.horizon);
  }
  const auto& rows = out.table.rows;
  const ComparisonRow& t5 = rows.back();
  const double gap = t5.robust_under_robust - t5.nonrobust_under_robust;
  bool monotone = true;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    // Equal trajectories evaluated through different step counts can differ in the last ulp.
    monotone = monotone && rows[i].nonrobust_under_nonrobust >= rows[i - 1].nonrobust_under_nonrobust - kFlowTolerance;
  }
  const double t3 = rows[1].robust_under_robust;
  const bool pass = gap >= 0.15 && monotone && t3 >= 0.50 && t3 <= 0.75;
  std::string row1;
  for (const ComparisonRow& r : rows) row1 += format("%s%.2f", row1.empty() ? "" : " ", 100.0 * r.nonrobust_under_nonrobust);
  out.seconds = clock.seconds();
  report(6, pass,
         format("T=5 robust %.2f%% vs non-robust %.2f%% under noise (gap %.2f >= 15 pts; held out %.2f%% vs %.2f%%); "
                "noiseless row %s non-decreasing: %s; T=3 robust %.4f in [0.50, 0.75]",
                100.0 * t5.robust_under_robust, 100.0 * t5.nonrobust_under_robust, 100.0 * gap,
                100.0 * t5.robust_under_robust_eval, 100.0 * t5.nonrobust_under_robust_eval, row1.c_str(),
                monotone ? "yes" : "no", t3),
         out.seconds);
  return out;
}

void criterion7(const Grid& grid, const cli::ExperimentConfig& config, const Table118& t118) {
  Stopwatch clock;
  SaaOptions opt = config.saa_options();
  opt.threads = worker_count();
  opt.n_eval = 0;
  bool pass = true;
  std::string detail;
  double mean2 = 0.0, mean5 = 0.0;
  for (int horizon : {2, 5}) {
    std::vector<double> widths;
    for (std::size_t n : {5u, 60u}) widths.push_back(saa(grid, config.spec, n, horizon, opt).in_sample.width());
    const ComparisonRow& row = *std::find_if(t118.table.rows.begin(), t118.table.rows.end(),
                                             [&](const ComparisonRow& r) { return r.horizon == horizon; });
    widths.push_back(row.robust_in_sample.width());
    (horizon == 2 ? mean2 : mean5) = row.robust_in_sample.mean;
    pass = pass && widths[1] <= widths[0] && widths[2] <= widths[1];
    detail += format("T=%d widths %.2f/%.2f/%.2f pts; ", horizon, 100.0 * widths[0], 100.0 * widths[1],
                     100.0 * widths[2]);
  }
  pass = pass && mean5 > mean2;
  detail += format("T=5 yield %.2f%% > T=2 yield %.2f%%", 100.0 * mean5, 100.0 * mean2);
  report(7, pass, "N = 5/60/120: " + detail, clock.seconds());
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void criterion8(const cli::ExperimentConfig& base) {
  Stopwatch clock;
  const fs::path root = fs::path(CASCADE_SCRATCH_DIR) / "acceptance_determinism";
  fs::remove_all(root);
  std::vector<fs::path> dirs;
  for (unsigned threads : {1u, 4u}) {
    cli::ExperimentConfig c = base;
    c.T = 3;
    c.threads = threads;
    c.output_dir = root / ("threads" + std::to_string(threads));
    dirs.push_back(c.output_dir);
    // The command reports to stdout; keep the suite's own output to PASS/FAIL lines.
    std::fflush(stdout);
    const int saved = ::dup(STDOUT_FILENO);
    const int null = ::open("/dev/null", O_WRONLY);
    ::dup2(null, STDOUT_FILENO);
    const int code = cli::cmd_optimize(c);
    std::fflush(stdout);
    ::dup2(saved, STDOUT_FILENO);
    ::close(null);
    ::close(saved);
    if (code != cli::kOk) {
      report(8, false, "cmd_optimize failed", clock.seconds());
      return;
    }
  }
  std::size_t files = 0, differing = 0;
  for (const auto& e : fs::directory_iterator(dirs[0])) {
    ++files;
    const fs::path other = dirs[1] / e.path().filename();
    if (!fs::exists(other) || slurp(e.path()) != slurp(other)) ++differing;
  }
  std::size_t other_files = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(dirs[1])) ++other_files;
  const bool pass = files > 0 && differing == 0 && files == other_files;
  report(8, pass, format("threads 1 vs 4: %zu files, %zu differ", files, differing), clock.seconds());
}

}  // namespace

int main() {
  criterion1();
  criterion2();
  criterion3();
  criterion4();

  const cli::ExperimentConfig config = ieee118_config();
  const Grid grid = cli::prepare_grid(config);
  const Table118 t118 = criterion6(grid, config);
  criterion7(grid, config, t118);
  criterion8(config);

  report(5, bounds.violations == 0 && bounds.calls > 0,
         format("%zu recursion calls, %zu bound violations, largest breakpoints/bound ratio %.3g", bounds.calls,
                bounds.violations, bounds.worst_ratio),
         0.0);
  std::printf("%s: %d criteria failed\n", failures ? "FAIL" : "PASS", failures);
  return failures ? 1 : 0;
}
