#include "cascade/grid.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "cascade/dc_flow.hpp"
#include "cascade/errors.hpp"

namespace cascade {

using nlohmann::json;

Grid::Grid(std::vector<Bus> buses, std::vector<Line> lines, double base_mva) {
  if (!(base_mva > 0.0) || !std::isfinite(base_mva)) {
    throw ValidationError("base MVA must be positive and finite");
  }
  std::set<int> labels;
  for (const Bus& b : buses) {
    if (!labels.insert(b.label).second) {
      throw ValidationError("duplicate bus id " + std::to_string(b.label));
    }
    if (!std::isfinite(b.pd_mw) || !std::isfinite(b.pg_mw)) {
      throw ValidationError("bus " + std::to_string(b.label) + " has a non-finite injection");
    }
    if (b.pd_mw < 0.0 || b.pg_mw < 0.0) {
      throw ValidationError("bus " + std::to_string(b.label) + " has negative demand or generation");
    }
  }
  const int n = static_cast<int>(buses.size());
  for (const Line& l : lines) {
    const std::string name = "line " + std::to_string(l.label);
    if (l.from_bus < 0 || l.from_bus >= n || l.to_bus < 0 || l.to_bus >= n) {
      throw ValidationError(name + " references an unknown bus");
    }
    if (l.from_bus == l.to_bus) throw ValidationError(name + " is a self-loop");
    if (!(l.reactance > 0.0) || !std::isfinite(l.reactance)) {
      throw ValidationError(name + " has nonpositive reactance");
    }
    if (!(l.limit_mw > 0.0)) throw ValidationError(name + " has nonpositive limit");
  }

  auto data = std::make_shared<Data>();
  data->base_mva = base_mva;
  data->demand_reference.reserve(buses.size());
  for (const Bus& b : buses) {
    data->demand_reference.push_back(b.pd_mw);
    data->total_demand += b.pd_mw;
  }
  data->buses = std::move(buses);
  data->lines = std::move(lines);
  active_.assign(data->lines.size(), 1);
  data_ = std::move(data);
}

std::size_t Grid::active_line_count() const {
  return static_cast<std::size_t>(std::count(active_.begin(), active_.end(), char{1}));
}

std::vector<double> Grid::injections() const {
  std::vector<double> beta;
  beta.reserve(bus_count());
  for (const Bus& b : buses()) beta.push_back(b.injection());
  return beta;
}

std::optional<std::size_t> Grid::find_bus(int label) const {
  for (std::size_t i = 0; i < bus_count(); ++i) {
    if (bus(i).label == label) return i;
  }
  return std::nullopt;
}

std::optional<std::size_t> Grid::find_line(int label) const {
  for (std::size_t j = 0; j < line_count(); ++j) {
    if (line(j).label == label) return j;
  }
  return std::nullopt;
}

std::optional<std::size_t> Grid::find_line_between(int from_label, int to_label) const {
  for (std::size_t j = 0; j < line_count(); ++j) {
    if (!active(j)) continue;
    const int a = bus(line(j).from_bus).label;
    const int b = bus(line(j).to_bus).label;
    if ((a == from_label && b == to_label) || (a == to_label && b == from_label)) return j;
  }
  return std::nullopt;
}

Grid Grid::with_active(std::vector<char> mask) const {
  if (mask.size() != line_count()) throw ValidationError("active mask has the wrong length");
  Grid g = *this;
  g.active_ = std::move(mask);
  return g;
}

Grid Grid::with_limits(std::span<const double> limits_mw) const {
  if (limits_mw.size() != line_count()) throw ValidationError("limit vector has the wrong length");
  std::vector<Line> lines = data_->lines;
  for (std::size_t j = 0; j < lines.size(); ++j) lines[j].limit_mw = limits_mw[j];
  Grid g(data_->buses, std::move(lines), data_->base_mva);
  g.active_ = active_;
  return g;
}

bool operator==(const Grid& a, const Grid& b) {
  if (a.bus_count() != b.bus_count() || a.line_count() != b.line_count()) return false;
  if (a.base_mva() != b.base_mva() || a.active_ != b.active_) return false;
  for (std::size_t i = 0; i < a.bus_count(); ++i) {
    const Bus &x = a.bus(i), &y = b.bus(i);
    if (x.label != y.label || x.pd_mw != y.pd_mw || x.pg_mw != y.pg_mw) return false;
  }
  for (std::size_t j = 0; j < a.line_count(); ++j) {
    const Line &x = a.line(j), &y = b.line(j);
    if (x.label != y.label || x.from_bus != y.from_bus || x.to_bus != y.to_bus ||
        x.reactance != y.reactance || x.limit_mw != y.limit_mw) {
      return false;
    }
  }
  return std::equal(a.demand_reference().begin(), a.demand_reference().end(),
                    b.demand_reference().begin());
}

CaseFormat case_format_from_string(std::string_view name) {
  if (name == "native" || name == "native_json" || name == "native-json" || name == "json") return CaseFormat::native_json;
  if (name == "matpower" || name == "matpower-subset" || name == "m") return CaseFormat::matpower;
  throw ValidationError("unknown case format '" + std::string(name) + "'");
}

CaseFormat case_format_from_path(const std::filesystem::path& path) {
  return path.extension() == ".m" ? CaseFormat::matpower : CaseFormat::native_json;
}

Grid parse_case(const std::filesystem::path& path, CaseFormat format) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open case file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  return format == CaseFormat::matpower ? parse_matpower(text) : parse_native_json(text);
}

namespace {

int line_of_offset(std::string_view text, std::size_t offset) {
  offset = std::min(offset, text.size());
  return 1 + static_cast<int>(std::count(text.begin(), text.begin() + offset, '\n'));
}

double finite_number(const json& obj, const char* key, const std::string& where) {
  if (!obj.contains(key) || !obj.at(key).is_number()) {
    throw ParseError("missing or non-numeric value in " + where, 0, key);
  }
  const double v = obj.at(key).get<double>();
  if (!std::isfinite(v)) throw ParseError("non-finite value in " + where, 0, key);
  return v;
}

int integer(const json& obj, const char* key, const std::string& where) {
  if (!obj.contains(key) || !obj.at(key).is_number_integer()) {
    throw ParseError("missing or non-integer value in " + where, 0, key);
  }
  return obj.at(key).get<int>();
}

Grid assemble(std::vector<Bus> buses, const std::vector<std::array<double, 4>>& raw_lines,
              const std::vector<int>& line_labels, const std::vector<char>& active, double base_mva) {
  std::map<int, int> index;
  for (std::size_t i = 0; i < buses.size(); ++i) {
    if (!index.emplace(buses[i].label, static_cast<int>(i)).second) {
      throw ValidationError("duplicate bus id " + std::to_string(buses[i].label));
    }
  }
  std::vector<Line> lines;
  lines.reserve(raw_lines.size());
  for (std::size_t j = 0; j < raw_lines.size(); ++j) {
    const auto& [from, to, x, rate] = raw_lines[j];
    const auto f = index.find(static_cast<int>(from));
    const auto t = index.find(static_cast<int>(to));
    if (f == index.end() || t == index.end()) {
      throw ValidationError("line " + std::to_string(line_labels[j]) + " references an unknown bus");
    }
    lines.push_back(Line{line_labels[j], f->second, t->second, x, rate});
  }
  Grid grid(std::move(buses), std::move(lines), base_mva);
  if (std::find(active.begin(), active.end(), char{0}) != active.end()) {
    return grid.with_active(active);
  }
  return grid;
}

}  // namespace

Grid parse_native_json(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("malformed JSON: ") + e.what(), line_of_offset(text, e.byte));
  }
  if (!doc.is_object() || !doc.contains("buses") || !doc.at("buses").is_array()) {
    throw ParseError("case must be an object with a 'buses' array", 0, "buses");
  }
  if (!doc.contains("lines") || !doc.at("lines").is_array()) {
    throw ParseError("case must have a 'lines' array", 0, "lines");
  }
  double base_mva = 100.0;
  if (doc.contains("base_mva")) base_mva = finite_number(doc, "base_mva", "case");

  std::vector<Bus> buses;
  for (std::size_t i = 0; i < doc["buses"].size(); ++i) {
    const json& b = doc["buses"][i];
    const std::string where = "buses[" + std::to_string(i) + "]";
    if (!b.is_object()) throw ParseError(where + " is not an object");
    buses.push_back(Bus{integer(b, "id", where), finite_number(b, "pd_mw", where),
                        finite_number(b, "pg_mw", where)});
  }
  std::vector<std::array<double, 4>> raw;
  std::vector<int> labels;
  std::vector<char> active;
  for (std::size_t j = 0; j < doc["lines"].size(); ++j) {
    const json& l = doc["lines"][j];
    const std::string where = "lines[" + std::to_string(j) + "]";
    if (!l.is_object()) throw ParseError(where + " is not an object");
    double rate = std::numeric_limits<double>::infinity();
    if (l.contains("rate_mw") && !l.at("rate_mw").is_null()) rate = finite_number(l, "rate_mw", where);
    raw.push_back({static_cast<double>(integer(l, "from", where)),
                   static_cast<double>(integer(l, "to", where)), finite_number(l, "x", where), rate});
    labels.push_back(integer(l, "id", where));
    bool on = true;
    if (l.contains("active")) {
      if (!l.at("active").is_boolean()) throw ParseError("non-boolean value in " + where, 0, "active");
      on = l.at("active").get<bool>();
    }
    active.push_back(on ? 1 : 0);
  }
  return assemble(std::move(buses), raw, labels, active, base_mva);
}

namespace {

struct MatrixBlock {
  std::vector<std::vector<double>> rows;
  std::vector<int> row_lines;
};

std::vector<double> parse_row(std::string_view content, int line_no, const char* matrix) {
  std::vector<double> values;
  std::string token;
  auto flush = [&] {
    if (token.empty()) return;
    char* end = nullptr;
    const double v = std::strtod(token.c_str(), &end);
    if (end == token.c_str() || *end != '\0') {
      throw ParseError("bad number '" + token + "' in mpc." + matrix, line_no, matrix);
    }
    values.push_back(v);
    token.clear();
  };
  for (char c : content) {
    if (c == ' ' || c == '\t' || c == ',' || c == '\r') {
      flush();
    } else {
      token.push_back(c);
    }
  }
  flush();
  return values;
}

}  // namespace

Grid parse_matpower(std::string_view text) {
  std::map<std::string, MatrixBlock> blocks;
  double base_mva = 100.0;
  std::string current;
  std::vector<double> pending;
  int pending_line = 0;

  std::istringstream in{std::string(text)};
  std::string text_line;
  int line_no = 0;
  while (std::getline(in, text_line)) {
    ++line_no;
    std::string_view line = text_line;
    if (auto pct = line.find('%'); pct != std::string_view::npos) line = line.substr(0, pct);

    if (current.empty()) {
      const auto pos = line.find("mpc.");
      if (pos == std::string_view::npos) continue;
      const auto eq = line.find('=', pos);
      if (eq == std::string_view::npos) continue;
      std::string name(line.substr(pos + 4, eq - pos - 4));
      name.erase(std::remove_if(name.begin(), name.end(), ::isspace), name.end());
      std::string_view rhs = line.substr(eq + 1);
      if (name == "baseMVA") {
        std::string v(rhs);
        v.erase(std::remove(v.begin(), v.end(), ';'), v.end());
        char* end = nullptr;
        base_mva = std::strtod(v.c_str(), &end);
        if (end == v.c_str()) throw ParseError("bad baseMVA", line_no, "baseMVA");
        continue;
      }
      if (name != "bus" && name != "gen" && name != "branch") continue;
      const auto open = rhs.find('[');
      if (open == std::string_view::npos) throw ParseError("expected '[' after mpc." + name, line_no, name);
      current = name;
      blocks[current];
      line = rhs.substr(open + 1);
    }

    bool closes = false;
    if (auto close = line.find(']'); close != std::string_view::npos) {
      line = line.substr(0, close);
      closes = true;
    }
    // Rows end at ';' or at end of line.
    std::size_t start = 0;
    while (start <= line.size()) {
      const auto semi = line.find(';', start);
      const std::string_view piece =
          line.substr(start, semi == std::string_view::npos ? std::string_view::npos : semi - start);
      auto values = parse_row(piece, line_no, current.c_str());
      if (!values.empty()) {
        if (pending.empty()) pending_line = line_no;
        pending.insert(pending.end(), values.begin(), values.end());
      }
      if (!pending.empty()) {
        blocks[current].rows.push_back(std::move(pending));
        blocks[current].row_lines.push_back(pending_line);
        pending.clear();
      }
      if (semi == std::string_view::npos) break;
      start = semi + 1;
    }
    if (closes) current.clear();
  }
  if (!current.empty()) throw ParseError("unterminated mpc." + current + " matrix", line_no, current);
  if (!blocks.contains("bus") || blocks["bus"].rows.empty()) throw ParseError("no mpc.bus matrix found", 0, "bus");
  if (!blocks.contains("branch")) throw ParseError("no mpc.branch matrix found", 0, "branch");

  std::vector<Bus> buses;
  std::map<int, std::size_t> index;
  const MatrixBlock& bus_block = blocks["bus"];
  for (std::size_t r = 0; r < bus_block.rows.size(); ++r) {
    const auto& row = bus_block.rows[r];
    if (row.size() < 3) throw ParseError("mpc.bus row needs at least 3 columns", bus_block.row_lines[r], "bus");
    const int label = static_cast<int>(row[0]);
    if (!index.emplace(label, buses.size()).second) {
      throw ValidationError("duplicate bus id " + std::to_string(label));
    }
    buses.push_back(Bus{label, row[2], 0.0});
  }
  if (blocks.contains("gen")) {
    const MatrixBlock& gen_block = blocks["gen"];
    for (std::size_t r = 0; r < gen_block.rows.size(); ++r) {
      const auto& row = gen_block.rows[r];
      if (row.size() < 2) throw ParseError("mpc.gen row needs at least 2 columns", gen_block.row_lines[r], "gen");
      if (row.size() >= 8 && row[7] <= 0.0) continue;  // out of service
      const auto it = index.find(static_cast<int>(row[0]));
      if (it == index.end()) {
        throw ValidationError("generator at unknown bus " + std::to_string(static_cast<int>(row[0])));
      }
      buses[it->second].pg_mw += row[1];
    }
  }

  std::vector<std::array<double, 4>> raw;
  std::vector<int> labels;
  std::vector<char> active;
  const MatrixBlock& br = blocks["branch"];
  for (std::size_t r = 0; r < br.rows.size(); ++r) {
    const auto& row = br.rows[r];
    if (row.size() < 6) throw ParseError("mpc.branch row needs at least 6 columns", br.row_lines[r], "branch");
    if (!(row[3] > 0.0)) {
      throw ValidationError("branch on line " + std::to_string(br.row_lines[r]) + " has nonpositive reactance");
    }
    const double rate = row[5] > 0.0 ? row[5] : std::numeric_limits<double>::infinity();
    raw.push_back({row[0], row[1], row[3], rate});
    labels.push_back(static_cast<int>(r) + 1);
    active.push_back(row.size() >= 11 && row[10] <= 0.0 ? 0 : 1);
  }
  return assemble(std::move(buses), raw, labels, active, base_mva);
}

std::string to_native_json(const Grid& grid) {
  json doc;
  doc["base_mva"] = grid.base_mva();
  json buses = json::array();
  for (const Bus& b : grid.buses()) buses.push_back({{"id", b.label}, {"pd_mw", b.pd_mw}, {"pg_mw", b.pg_mw}});
  json lines = json::array();
  for (std::size_t j = 0; j < grid.line_count(); ++j) {
    const Line& l = grid.line(j);
    json obj = {{"id", l.label},
                {"from", grid.bus(l.from_bus).label},
                {"to", grid.bus(l.to_bus).label},
                {"x", l.reactance}};
    obj["rate_mw"] = std::isfinite(l.limit_mw) ? json(l.limit_mw) : json(nullptr);
    if (!grid.active(j)) obj["active"] = false;
    lines.push_back(std::move(obj));
  }
  doc["buses"] = std::move(buses);
  doc["lines"] = std::move(lines);
  return doc.dump(2) + "\n";
}

Grid calibrate_limits(const Grid& grid, double headroom, double floor_mw) {
  if (!(headroom > 0.0)) throw ValidationError("headroom must be positive");
  if (!(floor_mw >= 0.0)) throw ValidationError("limit floor must be nonnegative");
  const FlowSolution base = solve_flows(grid, grid.injections());
  std::vector<double> limits(grid.line_count());
  for (std::size_t j = 0; j < grid.line_count(); ++j) {
    limits[j] = std::max((1.0 + headroom) * std::abs(base.flows[j]), floor_mw);
    if (!(limits[j] > 0.0)) {
      throw ValidationError("line " + std::to_string(grid.line(j).label) +
                            " carries no base flow; a positive floor is required");
    }
  }
  return grid.with_limits(limits);
}

Grid apply_outage(const Grid& grid, std::span<const std::size_t> line_ids) {
  std::vector<char> mask(grid.active_mask().begin(), grid.active_mask().end());
  for (std::size_t j : line_ids) {
    if (j >= grid.line_count()) throw ValidationError("unknown line id " + std::to_string(j));
    mask[j] = 0;
  }
  return grid.with_active(std::move(mask));
}

Grid balance_grid(const Grid& grid) {
  const IslandPartition partition = find_islands(grid);
  Dispatch dispatch = initial_dispatch(grid);
  balance_islands(dispatch, partition);
  std::vector<Bus> buses(grid.buses().begin(), grid.buses().end());
  for (std::size_t i = 0; i < buses.size(); ++i) {
    buses[i].pg_mw = dispatch.generation[i];
    buses[i].pd_mw = dispatch.demand[i];
  }
  Grid balanced(std::move(buses), std::vector<Line>(grid.lines().begin(), grid.lines().end()),
                grid.base_mva());
  return balanced.with_active(std::vector<char>(grid.active_mask().begin(), grid.active_mask().end()));
}

}  // namespace cascade
