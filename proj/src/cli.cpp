#include "cascade/cli.hpp"

#include <unistd.h>

#include <atomic>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "cascade/cascade.hpp"
#include "cascade/errors.hpp"
#include "cascade/yield_function.hpp"

namespace cascade::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int parse_int(std::string_view text, std::string_view what) {
  int value = 0;
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || end != text.data() + text.size()) {
    throw ValidationError("invalid " + std::string(what) + " '" + std::string(text) + "'");
  }
  return value;
}

fs::path resolve_path(const fs::path& p, const fs::path& base_dir) {
  if (p.empty() || p.is_absolute() || base_dir.empty()) return p;
  return base_dir / p;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

std::string step_log(const CascadeTrace& trace, const Grid& grid) {
  std::ostringstream os;
  char buf[160];
  const double total = grid.total_demand_reference();
  for (std::size_t s = 0; s < trace.states.size(); ++s) {
    const CascadeState& st = trace.states[s];
    const bool terminal = s + 1 == trace.states.size();
    std::snprintf(buf, sizeof buf, "%-9s t=%d islands=%zu active_lines=%zu served=%.4f", terminal ? "terminal" : "step",
                  st.t, st.partition.size(), st.grid.active_line_count(),
                  total > 0.0 ? st.dispatch.total_demand() / total : 0.0);
    os << buf;
    if (s < trace.trips.size()) {
      std::snprintf(buf, sizeof buf, " lambda=%.6f tripped=", trace.lambdas[s]);
      os << buf;
      if (trace.trips[s].empty()) os << '-';
      for (std::size_t k = 0; k < trace.trips[s].size(); ++k) {
        os << (k ? "," : "") << grid.line(trace.trips[s][k]).label;
      }
    }
    os << '\n';
  }
  std::snprintf(buf, sizeof buf, "psi=%.6f yield=%.6f\n", trace.psi, trace.yield);
  os << buf;
  return os.str();
}

}  // namespace

LineSpec LineSpec::from_json(const json& j) {
  if (j.is_number_integer()) return LineSpec{j.get<int>(), std::nullopt};
  if (j.is_string()) return parse(j.get<std::string>());
  if (j.is_array() && j.size() == 2) return LineSpec{std::nullopt, std::make_pair(j[0].get<int>(), j[1].get<int>())};
  if (j.is_object()) {
    if (j.contains("id")) return LineSpec{j.at("id").get<int>(), std::nullopt};
    return LineSpec{std::nullopt, std::make_pair(j.at("from").get<int>(), j.at("to").get<int>())};
  }
  throw ValidationError("line must be an id, \"from-to\", [from, to] or {\"from\", \"to\"}");
}

LineSpec LineSpec::parse(std::string_view text) {
  const auto dash = text.find('-', 1);
  if (dash == std::string_view::npos) return LineSpec{parse_int(text, "line id"), std::nullopt};
  return LineSpec{std::nullopt, std::make_pair(parse_int(text.substr(0, dash), "bus id"),
                                               parse_int(text.substr(dash + 1), "bus id"))};
}

json LineSpec::to_json() const {
  if (id) return *id;
  return json{{"from", endpoints->first}, {"to", endpoints->second}};
}

std::size_t LineSpec::resolve(const Grid& grid) const {
  if (id) {
    if (auto j = grid.find_line(*id)) return *j;
    throw ValidationError("no line with id " + std::to_string(*id));
  }
  const auto [a, b] = *endpoints;
  if (auto j = grid.find_line_between(a, b)) return *j;
  if (auto j = grid.find_line_between(b, a)) return *j;
  throw ValidationError("no line between buses " + std::to_string(a) + " and " + std::to_string(b));
}

ExperimentConfig ExperimentConfig::from_json(const json& j, const fs::path& base_dir) {
  if (!j.is_object()) throw ValidationError("config must be a JSON object");
  static const std::set<std::string> known = {
      "case",  "format", "headroom", "limit_floor_mw", "seed_outage", "T",          "horizons",   "N",
      "n_eval", "noise", "seed",     "conf",           "output_dir",  "threads",    "interval_guard", "node_guard"};
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw ValidationError("unknown config key '" + key + "'");
  }
  if (!j.contains("case")) throw ValidationError("config needs 'case'");

  ExperimentConfig c;
  c.case_path = resolve_path(j.at("case").get<std::string>(), base_dir);
  c.format = j.contains("format") ? case_format_from_string(j.at("format").get<std::string>())
                                  : case_format_from_path(c.case_path);
  c.headroom = j.value("headroom", c.headroom);
  c.limit_floor = j.value("limit_floor_mw", c.limit_floor);
  if (j.contains("seed_outage")) {
    const json& s = j.at("seed_outage");
    const bool list = s.is_array() && !(s.size() == 2 && s[0].is_number_integer() && s[1].is_number_integer());
    if (list) {
      for (const json& e : s) c.seed_outage.push_back(LineSpec::from_json(e));
    } else if (!s.is_null()) {
      c.seed_outage.push_back(LineSpec::from_json(s));
    }
  }
  c.T = j.value("T", c.T);
  if (j.contains("horizons")) c.horizons = j.at("horizons").get<std::vector<int>>();
  c.N = j.value("N", c.N);
  c.n_eval = j.value("n_eval", c.n_eval);
  if (j.contains("noise")) c.spec = NoiseSpec::from_json(j.at("noise"));
  c.seed = j.value("seed", c.seed);
  c.conf = j.value("conf", c.conf);
  c.output_dir = resolve_path(j.value("output_dir", c.output_dir.string()), base_dir);
  c.threads = j.value("threads", c.threads);
  c.interval_guard = j.value("interval_guard", c.interval_guard);
  c.node_guard = j.value("node_guard", c.node_guard);
  return c;
}

ExperimentConfig ExperimentConfig::load(const fs::path& path) {
  const std::string text = read_file(path);
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("malformed config: ") + e.what());
  }
  return from_json(doc, path.parent_path());
}

json ExperimentConfig::to_json() const {
  json outage = json::array();
  for (const LineSpec& s : seed_outage) outage.push_back(s.to_json());
  return {{"case", case_path.filename().string()},
          {"format", format == CaseFormat::matpower ? "matpower" : "native_json"},
          {"headroom", headroom},
          {"limit_floor_mw", limit_floor},
          {"seed_outage", std::move(outage)},
          {"T", T},
          {"horizons", horizons},
          {"N", N},
          {"n_eval", n_eval},
          {"noise", spec.to_json()},
          {"seed", seed},
          {"conf", conf}};
}

void ExperimentConfig::validate() const {
  if (!fs::exists(case_path)) throw ValidationError("case file not found: " + case_path.string());
  if (T < 2) throw ValidationError("T must be at least 2");
  for (int h : horizons) {
    if (h < 2) throw ValidationError("every horizon must be at least 2");
  }
  if (N < 1) throw ValidationError("N must be at least 1");
  if (!(conf > 0.0 && conf < 1.0)) throw ValidationError("conf must lie in (0, 1)");
  if (!(headroom >= 0.0)) throw ValidationError("headroom must be nonnegative");
  if (!(limit_floor > 0.0)) throw ValidationError("limit floor must be positive");
  if (threads < 1) throw ValidationError("threads must be at least 1");
}

SaaOptions ExperimentConfig::saa_options() const {
  SaaOptions o;
  o.n_eval = n_eval;
  o.conf = conf;
  o.threads = threads;
  o.yield.interval_guard = interval_guard;
  o.yield.node_guard = node_guard;
  return o;
}

Grid prepare_grid(const ExperimentConfig& config) {
  config.validate();
  const Grid base = calibrate_limits(balance_grid(parse_case(config.case_path, config.format)), config.headroom,
                                     config.limit_floor);
  std::vector<std::size_t> outage;
  for (const LineSpec& s : config.seed_outage) outage.push_back(s.resolve(base));
  return apply_outage(base, outage);
}

void write_atomic(const fs::path& path, std::string_view contents) {
  static std::atomic<unsigned> counter{0};
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid()) + "." + std::to_string(counter++);
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    out.flush();
    if (!out) {
      out.close();
      fs::remove(tmp);
      throw std::runtime_error("short write to " + tmp.string());
    }
  }
  fs::rename(tmp, path);
}

int guarded(const std::function<int()>& body) {
  try {
    return body();
  } catch (const ResourceError& e) {
    std::cerr << "error: " << e.what() << " (intervals: " << e.intervals() << ")\n";
    return kResource;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what();
    if (e.line() > 0) std::cerr << " (line " << e.line() << ")";
    if (!e.field().empty()) std::cerr << " [" << e.field() << "]";
    std::cerr << '\n';
    return kConfig;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfig;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: bad config value: " << e.what() << '\n';
    return kConfig;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return kInternal;
  }
}

int cmd_convert(const fs::path& input, const fs::path& output, std::optional<CaseFormat> format) {
  const Grid grid = parse_case(input, format.value_or(case_format_from_path(input)));
  write_atomic(output, to_native_json(grid));
  std::cout << "wrote " << output.string() << " (" << grid.bus_count() << " buses, " << grid.line_count()
            << " lines)\n";
  return kOk;
}

int cmd_simulate(const ExperimentConfig& config, const std::vector<double>& controls, long realization) {
  const Grid grid = prepare_grid(config);
  const auto steps = static_cast<std::size_t>(config.T);
  const ControlVector lambdas = controls.empty() ? ControlVector::ones(steps - 1) : ControlVector(controls);
  if (lambdas.size() != steps - 1) {
    throw ValidationError("expected " + std::to_string(steps - 1) + " control factors for T = " +
                          std::to_string(config.T));
  }
  NoiseEnsemble ensemble = realization < 0
                               ? sample_ensemble(NoiseSpec::zero(), grid.line_count(), steps, 1, 0)
                               : sample_ensemble(config.spec, grid.line_count(), steps,
                                                 static_cast<std::size_t>(realization) + 1, config.seed,
                                                 kEvaluationStream);
  const std::size_t k = realization < 0 ? 0 : static_cast<std::size_t>(realization);
  const CascadeTrace trace = run(grid, lambdas, ensemble.realization(k), ensemble.spec().bound());

  json doc = trace_to_json(trace, grid);
  doc["realization"] = realization < 0 ? json(nullptr) : json(realization);
  doc["config"] = config.to_json();
  write_atomic(config.output_dir / "trace.json", dump(doc));
  const std::string log = step_log(trace, grid);
  write_atomic(config.output_dir / "trace.log", log);
  std::cout << log;
  return kOk;
}

int cmd_optimize(const ExperimentConfig& config) {
  const Grid grid = prepare_grid(config);
  const SaaResult result = saa_solve(grid, config.spec, config.N, config.T, config.seed, config.saa_options());

  json doc = to_json(result);
  doc["config"] = config.to_json();
  write_atomic(config.output_dir / "saa_result.json", dump(doc));

  json steps = json::array();
  for (const PolicyStep& s : policy_path(result.optimum.policy, 1.0)) {
    const std::string suffix = std::to_string(s.step + 1) + ".csv";
    write_atomic(config.output_dir / ("eta_step" + suffix), s.value.to_csv());
    write_atomic(config.output_dir / ("response_step" + suffix), s.response.to_csv());
    steps.push_back({{"step", s.step + 1},
                     {"scale", s.scale},
                     {"target", s.target},
                     {"lambda", s.lambda},
                     {"value", s.value(s.scale)},
                     {"value_breakpoints", s.value.breakpoint_count()},
                     {"response_breakpoints", s.response.breakpoint_count()}});
  }
  const json policy = {{"horizon", result.optimum.policy.horizon},
                       {"nodes", result.optimum.node_count},
                       {"states", result.optimum.state_count},
                       {"breakpoint_bound", breakpoint_bound(config.N, grid.line_count(), config.T)},
                       {"path", std::move(steps)}};
  write_atomic(config.output_dir / "policy.json", dump(policy));

  std::printf("T=%d N=%zu control:", config.T, config.N);
  for (double l : result.control.values()) std::printf(" %.4f", l);
  std::printf("\nin-sample yield %.4f, held-out yield %.4f", result.in_sample_yield, result.out_of_sample.mean);
  if (result.out_of_sample.ci) {
    std::printf(" [%.4f, %.4f]", result.out_of_sample.ci->first, result.out_of_sample.ci->second);
  }
  std::printf("\n");
  return kOk;
}

int cmd_compare(const ExperimentConfig& config) {
  const Grid grid = prepare_grid(config);
  const ComparisonTable table = compare(grid, config.spec, config.horizons, config.N, config.seed, config.saa_options());
  json doc = to_json(table);
  doc["config"] = config.to_json();
  write_atomic(config.output_dir / "comparison.json", dump(doc));
  const std::string text = format_table(table);
  write_atomic(config.output_dir / "comparison.txt", text);
  std::cout << text;
  return kOk;
}

}  // namespace cascade::cli
