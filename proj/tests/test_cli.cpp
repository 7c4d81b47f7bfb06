#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <sys/wait.h>

#include <doctest.h>
#include <json.hpp>

#include "cascade/cli.hpp"
#include "cascade/errors.hpp"
#include "support.hpp"

using namespace cascade;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void spit(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

/// Runs the command-line tool and returns its exit status.
int cascadectl(const std::string& args) {
  const std::string cmd = std::string(CASCADECTL_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

cli::ExperimentConfig base_config(const fs::path& out) {
  cli::ExperimentConfig c;
  c.case_path = testing::case118();
  c.format = CaseFormat::matpower;
  c.seed_outage = {cli::LineSpec::parse("4-5")};
  c.output_dir = out;
  return c;
}

std::vector<std::pair<double, double>> csv_rows(const std::string& csv) {
  std::istringstream in(csv);
  std::string row;
  std::getline(in, row);
  std::vector<std::pair<double, double>> out;
  while (std::getline(in, row)) {
    const auto comma = row.find(',');
    out.emplace_back(std::stod(row.substr(0, comma)), std::stod(row.substr(comma + 1)));
  }
  return out;
}

/// Largest z attaining the maximum; the policy breaks ties towards less shedding.
double csv_argmax(const std::string& csv) {
  const auto rows = csv_rows(csv);
  double best = -1.0;
  for (const auto& [z, v] : rows) best = std::max(best, v);
  double arg = 0.0;
  for (const auto& [z, v] : rows) {
    if (v >= best - 1e-12) arg = z;
  }
  return arg;
}

std::vector<fs::path> stray_temporaries(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().filename().string().find(".tmp.") != std::string::npos) out.push_back(e.path());
  }
  return out;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("convert the 118-bus case") {
  const fs::path dir = testing::scratch("convert");
  REQUIRE(cli::cmd_convert(testing::case118(), dir / "a.json") == cli::kOk);
  const Grid g = parse_case(dir / "a.json", CaseFormat::native_json);
  CHECK(g.bus_count() == 118);
  REQUIRE(cli::cmd_convert(dir / "a.json", dir / "b.json") == cli::kOk);
  CHECK(slurp(dir / "a.json") == slurp(dir / "b.json"));
  CHECK(stray_temporaries(dir).empty());
}

TEST_CASE("convert rejects an empty file") {
  const fs::path dir = testing::scratch("convert_empty");
  spit(dir / "empty.m", "");
  spit(dir / "empty.json", "");
  CHECK(cli::guarded([&] { return cli::cmd_convert(dir / "empty.m", dir / "x.json"); }) == cli::kConfig);
  CHECK(cli::guarded([&] { return cli::cmd_convert(dir / "empty.json", dir / "x.json"); }) == cli::kConfig);
  CHECK(!fs::exists(dir / "x.json"));
  CHECK(cascadectl("convert " + (dir / "empty.m").string() + " " + (dir / "y.json").string()) == cli::kConfig);
}

TEST_CASE("simulate") {
  SUBCASE("healthy grid serves everything") {
    const fs::path dir = testing::scratch("simulate_healthy");
    cli::ExperimentConfig c = base_config(dir);
    c.seed_outage.clear();
    REQUIRE(cli::cmd_simulate(c, {}) == cli::kOk);
    const json trace = json::parse(slurp(dir / "trace.json"));
    CHECK(trace["yield"].get<double>() == doctest::Approx(1.0));
    CHECK(fs::exists(dir / "trace.log"));
  }
  SUBCASE("seed outage loses load") {
    const fs::path dir = testing::scratch("simulate_outage");
    REQUIRE(cli::cmd_simulate(base_config(dir), {}) == cli::kOk);
    CHECK(json::parse(slurp(dir / "trace.json"))["yield"].get<double>() < 1.0);
  }
  SUBCASE("noisy realization and explicit controls") {
    const fs::path dir = testing::scratch("simulate_noisy");
    cli::ExperimentConfig c = base_config(dir);
    REQUIRE(cli::cmd_simulate(c, {0.7, 0.9}, 3) == cli::kOk);
    const json trace = json::parse(slurp(dir / "trace.json"));
    CHECK(trace["realization"] == 3);
    CHECK(trace["controls"].size() == 2);
    CHECK(cli::guarded([&] { return cli::cmd_simulate(c, {0.7}); }) == cli::kConfig);
  }
}

TEST_CASE("malformed configs exit with 2") {
  const fs::path dir = testing::scratch("bad_config");
  spit(dir / "broken.json", "{\"case\": ");
  spit(dir / "unknown.json", R"({"case": ")" + testing::case118().string() + R"(", "colour": 1})");
  spit(dir / "short.json", R"({"case": ")" + testing::case118().string() + R"(", "T": 1})");
  spit(dir / "missing.json", R"({"case": "nowhere.m"})");
  spit(dir / "type.json", R"({"case": ")" + testing::case118().string() + R"(", "N": "many"})");
  for (const char* name : {"broken.json", "unknown.json", "short.json", "missing.json", "type.json"}) {
    CAPTURE(name);
    CHECK(cascadectl("simulate -c " + (dir / name).string() + " -o " + (dir / "out").string()) == cli::kConfig);
  }
  CHECK(cascadectl("simulate --bogus") == cli::kConfig);
  CHECK(cascadectl("") == cli::kConfig);
  CHECK(cascadectl("optimize --case " + testing::case118().string() + " --noise gauss:1") == cli::kConfig);
  CHECK(cascadectl("simulate --case " + testing::case118().string() + " --outage 4-99") == cli::kConfig);
  CHECK(cascadectl("--help") == cli::kOk);
}

TEST_CASE("guard violations exit with 3") {
  const fs::path dir = testing::scratch("guard");
  cli::ExperimentConfig c = base_config(dir);
  c.N = 5;
  c.n_eval = 10;
  c.interval_guard = 3;
  CHECK(cli::guarded([&] { return cli::cmd_optimize(c); }) == cli::kResource);
  CHECK(cascadectl("optimize --case " + testing::case118().string() + " --outage 4-5 -N 5 --n-eval 10 " +
                   "--interval-guard 3 -o " + dir.string()) == cli::kResource);
}

TEST_CASE("other failures exit with 1") {
  CHECK(cli::guarded([] () -> int { throw std::runtime_error("boom"); }) == cli::kInternal);
}

TEST_CASE("optimize on the 118-bus setup") {
  const fs::path dir = testing::scratch("optimize118");
  cli::ExperimentConfig c = base_config(dir);
  c.n_eval = 100;
  REQUIRE(cli::cmd_optimize(c) == cli::kOk);
  for (const char* f : {"saa_result.json", "policy.json", "eta_step1.csv", "eta_step2.csv", "response_step1.csv"}) {
    CHECK(fs::exists(dir / f));
  }
  CHECK(stray_temporaries(dir).empty());
  const double argmax = csv_argmax(slurp(dir / "response_step1.csv"));
  CHECK(std::abs(argmax - 0.72) <= 0.05);
  const json r3 = json::parse(slurp(dir / "saa_result.json"));
  CHECK(r3["control"][0].get<double>() == doctest::Approx(argmax).epsilon(1e-9));

  const fs::path dir2 = testing::scratch("optimize118_T2");
  c.T = 2;
  c.output_dir = dir2;
  REQUIRE(cli::cmd_optimize(c) == cli::kOk);
  const json r2 = json::parse(slurp(dir2 / "saa_result.json"));
  CHECK(std::abs(r2["in_sample_yield"].get<double>() - r3["in_sample_yield"].get<double>()) <= 0.01);
}

TEST_CASE("zero noise: any N matches N = 1") {
  const fs::path a = testing::scratch("zero_n1"), b = testing::scratch("zero_n7");
  cli::ExperimentConfig c = base_config(a);
  c.spec = NoiseSpec::zero();
  c.N = 1;
  c.n_eval = 5;
  REQUIRE(cli::cmd_optimize(c) == cli::kOk);
  c.N = 7;
  c.output_dir = b;
  REQUIRE(cli::cmd_optimize(c) == cli::kOk);
  for (const char* f : {"eta_step1.csv", "eta_step2.csv", "response_step1.csv", "response_step2.csv"}) {
    CAPTURE(f);
    const auto ra = csv_rows(slurp(a / f)), rb = csv_rows(slurp(b / f));
    REQUIRE(ra.size() == rb.size());
    for (std::size_t i = 0; i < ra.size(); ++i) {
      CHECK(ra[i].first == rb[i].first);
      CHECK(ra[i].second == doctest::Approx(rb[i].second).epsilon(1e-14));
    }
  }
  CHECK(json::parse(slurp(a / "saa_result.json"))["control"] == json::parse(slurp(b / "saa_result.json"))["control"]);
}

TEST_CASE("compare writes one column per horizon") {
  const fs::path dir = testing::scratch("compare_zero");
  cli::ExperimentConfig c = base_config(dir);
  c.spec = NoiseSpec::zero();
  c.N = 1;
  c.n_eval = 2;
  c.horizons = {2, 3, 4, 5};
  REQUIRE(cli::cmd_compare(c) == cli::kOk);
  const json t = json::parse(slurp(dir / "comparison.json"));
  REQUIRE(t["rows"].size() == 4);
  for (const json& row : t["rows"]) {
    CHECK(row["nonrobust_under_robust"] == row["nonrobust_under_nonrobust"]);
  }
  std::istringstream text(slurp(dir / "comparison.txt"));
  std::string header;
  std::getline(text, header);
  std::istringstream cols(header);
  std::vector<std::string> words{std::istream_iterator<std::string>(cols), {}};
  CHECK(words == std::vector<std::string>{"T", "2", "3", "4", "5"});
}

TEST_CASE("runs are bit-reproducible and thread-count independent") {
  const fs::path a = testing::scratch("repro_a"), b = testing::scratch("repro_b");
  cli::ExperimentConfig c = base_config(a);
  c.N = 20;
  c.n_eval = 200;
  c.seed = 4;
  REQUIRE(cli::cmd_optimize(c) == cli::kOk);
  c.output_dir = b;
  c.threads = 3;
  REQUIRE(cli::cmd_optimize(c) == cli::kOk);
  for (const char* f : {"saa_result.json", "policy.json", "eta_step1.csv", "response_step2.csv"}) {
    CHECK(slurp(a / f) == slurp(b / f));
  }
}

TEST_CASE("config file and flag overrides") {
  const fs::path dir = testing::scratch("config");
  fs::copy_file(testing::case118(), dir / "grid.m");
  spit(dir / "cfg.json", R"({"case": "grid.m", "seed_outage": [[4, 5]], "T": 4, "N": 9,
    "noise": {"kind": "uniform", "bound": 0.1}, "output_dir": "results"})");
  const cli::ExperimentConfig c = cli::ExperimentConfig::load(dir / "cfg.json");
  CHECK(c.case_path == dir / "grid.m");
  CHECK(c.format == CaseFormat::matpower);
  CHECK(c.T == 4);
  CHECK(c.N == 9);
  CHECK(c.spec.kind() == NoiseSpec::Kind::uniform);
  CHECK(c.output_dir == dir / "results");
  REQUIRE(c.seed_outage.size() == 1);
  CHECK(c.seed_outage[0].endpoints == std::pair{4, 5});

  CHECK(cascadectl("simulate -c " + (dir / "cfg.json").string() + " -T 2 -o " + (dir / "flag").string()) == 0);
  const json trace = json::parse(slurp(dir / "flag" / "trace.json"));
  CHECK(trace["config"]["T"] == 2);
  CHECK(trace["config"]["N"] == 9);
}

TEST_CASE("line specs") {
  CHECK(cli::LineSpec::parse("7").id == 7);
  CHECK(cli::LineSpec::parse("4-5").endpoints == std::pair{4, 5});
  CHECK_THROWS_AS(cli::LineSpec::parse("4-"), ValidationError);
  CHECK_THROWS_AS(cli::LineSpec::parse("x"), ValidationError);
  const Grid g = parse_case(testing::case118(), CaseFormat::matpower);
  CHECK(cli::LineSpec::parse("5-4").resolve(g) == cli::LineSpec::parse("4-5").resolve(g));
  CHECK(cli::LineSpec::parse("1").resolve(g) == 0);
}

TEST_CASE("atomic writes replace whole files") {
  const fs::path dir = testing::scratch("atomic");
  cli::write_atomic(dir / "sub" / "f.txt", "first");
  cli::write_atomic(dir / "sub" / "f.txt", "second");
  CHECK(slurp(dir / "sub" / "f.txt") == "second");
  CHECK(stray_temporaries(dir / "sub").empty());
}

}  // TEST_SUITE
