#include "hydrosddp/io.hpp"

#include "hydrosddp/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

namespace hydro {

using nlohmann::ordered_json;
using Json = nlohmann::json;

namespace {

constexpr int kCaseVersion = 1;
constexpr int kPolicyVersion = 1;
constexpr int kReportVersion = 1;

std::string num(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

[[noreturn]] void parse_fail(const std::string& source, const std::string& what) {
  throw Error(ErrorKind::ParseError, source + ": " + what);
}

Json parse_json_text(const std::string& text, const std::string& source) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    // turn the byte offset into line:column
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i < std::min<std::size_t>(e.byte == 0 ? 0 : e.byte - 1, text.size()); ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    parse_fail(source, "line " + std::to_string(line) + ", column " + std::to_string(col) + ": " + e.what());
  }
}

// field access with element-level diagnostics
struct Obj {
  const Json& j;
  std::string where;  // e.g. "hydro 3"
  const std::string& source;

  bool has(const char* key) const { return j.contains(key) && !j.at(key).is_null(); }

  double number(const char* key) const {
    if (!j.contains(key)) parse_fail(source, where + ": missing field '" + key + "'");
    const Json& v = j.at(key);
    if (!v.is_number()) parse_fail(source, where + ": field '" + key + "' must be a number");
    return v.get<double>();
  }
  double number(const char* key, double fallback) const { return j.contains(key) ? number(key) : fallback; }

  int integer(const char* key) const {
    if (!j.contains(key)) parse_fail(source, where + ": missing field '" + key + "'");
    const Json& v = j.at(key);
    if (!v.is_number_integer()) parse_fail(source, where + ": field '" + key + "' must be an integer");
    return v.get<int>();
  }

  bool boolean(const char* key, bool fallback) const {
    if (!j.contains(key)) return fallback;
    if (!j.at(key).is_boolean()) parse_fail(source, where + ": field '" + key + "' must be true or false");
    return j.at(key).get<bool>();
  }

  std::vector<double> numbers(const char* key) const {
    std::vector<double> out;
    if (!j.contains(key)) return out;
    const Json& v = j.at(key);
    if (!v.is_array()) parse_fail(source, where + ": field '" + key + "' must be an array");
    for (const auto& x : v) {
      if (!x.is_number()) parse_fail(source, where + ": field '" + key + "' must hold numbers");
      out.push_back(x.get<double>());
    }
    return out;
  }
};

const Json& array_field(const Json& root, const char* key, const std::string& source, bool required) {
  static const Json empty = Json::array();
  if (!root.contains(key)) {
    if (required) parse_fail(source, std::string("missing array '") + key + "'");
    return empty;
  }
  if (!root.at(key).is_array()) parse_fail(source, std::string("'") + key + "' must be an array");
  return root.at(key);
}

void check_header(const Json& root, const std::string& expected, int version, const std::string& source) {
  if (!root.is_object()) parse_fail(source, "top level must be an object");
  if (root.contains("format")) {
    if (!root.at("format").is_string() || root.at("format").get<std::string>() != expected) {
      parse_fail(source, "format must be '" + expected + "'");
    }
  }
  if (root.contains("version")) {
    if (!root.at("version").is_number_integer() || root.at("version").get<int>() > version) {
      parse_fail(source, "unsupported version (this build reads up to " + std::to_string(version) + ")");
    }
  }
}

RawHydro hydro_of(const Json& h, std::size_t k, const std::string& source) {
  Obj o{h, "hydro #" + std::to_string(k + 1), source};
  if (!h.is_object()) parse_fail(source, o.where + ": must be an object");
  RawHydro r;
  r.id = o.integer("id");
  o.where = "hydro " + std::to_string(r.id);
  r.bus = o.integer("bus");
  r.v_max = o.number("v_max");
  r.v_initial = o.number("v_initial");
  r.u_max = o.number("u_max");
  r.rho_mw = o.number("rho");
  if (o.has("downstream_turbine")) r.downstream_turbine = o.integer("downstream_turbine");
  if (h.contains("downstream_spill")) {
    r.spill_specified = true;
    if (o.has("downstream_spill")) r.downstream_spill = o.integer("downstream_spill");
  }
  r.q_min_mvar = o.number("q_min_mvar", 0.0);
  r.q_max_mvar = o.number("q_max_mvar", 0.0);
  return r;
}

std::vector<RawHydro> hydros_of(const Json& root, const std::string& source) {
  std::vector<RawHydro> out;
  const Json& arr = array_field(root, "hydros", source, false);
  for (std::size_t k = 0; k < arr.size(); ++k) out.push_back(hydro_of(arr[k], k, source));
  return out;
}

ordered_json hydro_json(const RawHydro& h) {
  ordered_json j;
  j["id"] = h.id;
  j["bus"] = h.bus;
  j["v_max"] = h.v_max;
  j["v_initial"] = h.v_initial;
  j["u_max"] = h.u_max;
  j["rho"] = h.rho_mw;
  j["downstream_turbine"] = h.downstream_turbine ? ordered_json(*h.downstream_turbine) : ordered_json(nullptr);
  if (h.spill_specified) {
    j["downstream_spill"] = h.downstream_spill ? ordered_json(*h.downstream_spill) : ordered_json(nullptr);
  }
  j["q_min_mvar"] = h.q_min_mvar;
  j["q_max_mvar"] = h.q_max_mvar;
  return j;
}

// --- tiny CSV helpers ---------------------------------------------------------

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  for (auto& s : out) {
    const auto a = s.find_first_not_of(" \t");
    const auto b = s.find_last_not_of(" \t");
    s = a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
  }
  return out;
}

bool to_double(const std::string& s, double& v) {
  if (s.empty()) return false;
  const char* first = s.data();
  if (*first == '+') ++first;
  auto res = std::from_chars(first, s.data() + s.size(), v);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

bool to_int(const std::string& s, int& v) {
  if (s.empty()) return false;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

}  // namespace

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::ParseError, path + ": cannot open file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------
// case files
// ---------------------------------------------------------------------------

RawCase parse_case_json(const std::string& text, const std::string& source) {
  const Json root = parse_json_text(text, source);
  check_header(root, "hydrosddp-case", kCaseVersion, source);
  RawCase rc;
  Obj top{root, "case", source};
  if (root.contains("name")) {
    if (!root.at("name").is_string()) parse_fail(source, "case: field 'name' must be a string");
    rc.name = root.at("name").get<std::string>();
  }
  rc.base_mva = top.number("base_mva", 100.0);
  rc.hours_per_stage = top.number("hours_per_stage", 730.0);

  const Json& buses = array_field(root, "buses", source, true);
  for (std::size_t k = 0; k < buses.size(); ++k) {
    Obj o{buses[k], "bus #" + std::to_string(k + 1), source};
    if (!buses[k].is_object()) parse_fail(source, o.where + ": must be an object");
    RawBus b;
    b.id = o.integer("id");
    o.where = "bus " + std::to_string(b.id);
    b.is_reference = o.boolean("reference", false);
    b.v_min = o.number("v_min", 0.9);
    b.v_max = o.number("v_max", 1.1);
    b.shunt_g_mw = o.number("shunt_g_mw", 0.0);
    b.shunt_b_mvar = o.number("shunt_b_mvar", 0.0);
    b.load_mw = o.number("load_mw", 0.0);
    b.load_mw_by_stage = o.numbers("load_mw_by_stage");
    b.deficit_cost = o.number("deficit_cost");
    rc.buses.push_back(std::move(b));
  }
  const Json& branches = array_field(root, "branches", source, false);
  for (std::size_t k = 0; k < branches.size(); ++k) {
    Obj o{branches[k], "branch #" + std::to_string(k + 1), source};
    if (!branches[k].is_object()) parse_fail(source, o.where + ": must be an object");
    RawBranch l;
    l.from = o.integer("from");
    l.to = o.integer("to");
    o.where = "branch " + std::to_string(l.from) + "-" + std::to_string(l.to);
    l.r = o.number("r", 0.0);
    l.x = o.number("x");
    l.g_c = o.number("g_c", 0.0);
    l.b_c = o.number("b_c", 0.0);
    l.rate_mva = o.number("rate_mva");
    rc.branches.push_back(l);
  }
  const Json& thermals = array_field(root, "thermals", source, false);
  for (std::size_t k = 0; k < thermals.size(); ++k) {
    Obj o{thermals[k], "thermal #" + std::to_string(k + 1), source};
    if (!thermals[k].is_object()) parse_fail(source, o.where + ": must be an object");
    RawThermal g;
    g.id = o.integer("id");
    o.where = "thermal " + std::to_string(g.id);
    g.bus = o.integer("bus");
    g.p_max_mw = o.number("p_max_mw");
    g.q_min_mvar = o.number("q_min_mvar", 0.0);
    g.q_max_mvar = o.number("q_max_mvar", 0.0);
    g.cost = o.number("cost");
    g.cost_by_stage = o.numbers("cost_by_stage");
    rc.thermals.push_back(std::move(g));
  }
  rc.hydros = hydros_of(root, source);
  return rc;
}

void write_case_json(std::ostream& os, const RawCase& rc) {
  ordered_json j;
  j["format"] = "hydrosddp-case";
  j["version"] = kCaseVersion;
  j["name"] = rc.name;
  j["base_mva"] = rc.base_mva;
  j["hours_per_stage"] = rc.hours_per_stage;
  j["buses"] = ordered_json::array();
  for (const auto& b : rc.buses) {
    ordered_json o;
    o["id"] = b.id;
    o["reference"] = b.is_reference;
    o["v_min"] = b.v_min;
    o["v_max"] = b.v_max;
    o["shunt_g_mw"] = b.shunt_g_mw;
    o["shunt_b_mvar"] = b.shunt_b_mvar;
    o["load_mw"] = b.load_mw;
    if (!b.load_mw_by_stage.empty()) o["load_mw_by_stage"] = b.load_mw_by_stage;
    o["deficit_cost"] = b.deficit_cost;
    j["buses"].push_back(o);
  }
  j["branches"] = ordered_json::array();
  for (const auto& l : rc.branches) {
    ordered_json o;
    o["from"] = l.from;
    o["to"] = l.to;
    o["r"] = l.r;
    o["x"] = l.x;
    o["g_c"] = l.g_c;
    o["b_c"] = l.b_c;
    o["rate_mva"] = l.rate_mva;
    j["branches"].push_back(o);
  }
  j["thermals"] = ordered_json::array();
  for (const auto& g : rc.thermals) {
    ordered_json o;
    o["id"] = g.id;
    o["bus"] = g.bus;
    o["p_max_mw"] = g.p_max_mw;
    o["q_min_mvar"] = g.q_min_mvar;
    o["q_max_mvar"] = g.q_max_mvar;
    o["cost"] = g.cost;
    if (!g.cost_by_stage.empty()) o["cost_by_stage"] = g.cost_by_stage;
    j["thermals"].push_back(o);
  }
  j["hydros"] = ordered_json::array();
  for (const auto& h : rc.hydros) j["hydros"].push_back(hydro_json(h));
  os << j.dump(2) << '\n';
}

namespace {

// mpc.<name> = [ ... ]; blocks and scalar assignments, comments stripped
struct MatFile {
  std::map<std::string, std::vector<std::vector<double>>> matrices;
  std::map<std::string, double> scalars;
};

MatFile read_mat(const std::string& text, const std::string& source) {
  std::string clean;
  clean.reserve(text.size());
  bool comment = false;
  for (char c : text) {
    if (c == '%') comment = true;
    if (c == '\n') comment = false;
    if (!comment) clean.push_back(c);
  }
  MatFile mf;
  std::size_t pos = 0;
  while ((pos = clean.find("mpc.", pos)) != std::string::npos) {
    std::size_t p = pos + 4;
    std::size_t q = p;
    while (q < clean.size() && (std::isalnum(static_cast<unsigned char>(clean[q])) || clean[q] == '_')) ++q;
    const std::string name = clean.substr(p, q - p);
    std::size_t eq = clean.find('=', q);
    if (eq == std::string::npos) break;
    std::size_t v = clean.find_first_not_of(" \t\r\n", eq + 1);
    if (v == std::string::npos) break;
    if (clean[v] == '[') {
      const std::size_t end = clean.find(']', v);
      if (end == std::string::npos) parse_fail(source, "unterminated matrix mpc." + name);
      const std::string body = clean.substr(v + 1, end - v - 1);
      std::vector<std::vector<double>> rows;
      std::vector<double> row;
      std::string tok;
      auto flush_tok = [&] {
        if (tok.empty()) return;
        double d = 0.0;
        if (!to_double(tok, d)) {
          const auto line = 1 + std::count(clean.begin(), clean.begin() + static_cast<std::ptrdiff_t>(v), '\n');
          parse_fail(source, "mpc." + name + " near line " + std::to_string(line) + ": bad number '" + tok + "'");
        }
        row.push_back(d);
        tok.clear();
      };
      auto flush_row = [&] {
        flush_tok();
        if (!row.empty()) rows.push_back(row);
        row.clear();
      };
      for (char c : body) {
        if (c == ';' || c == '\n') flush_row();
        else if (c == ' ' || c == '\t' || c == ',' || c == '\r') flush_tok();
        else tok.push_back(c);
      }
      flush_row();
      mf.matrices[name] = std::move(rows);
      pos = end;
    } else {
      const std::size_t end = clean.find_first_of(";\n", v);
      std::string tok = clean.substr(v, end == std::string::npos ? std::string::npos : end - v);
      tok = split(tok, ';').front();
      double d = 0.0;
      if (to_double(tok, d)) mf.scalars[name] = d;
      pos = v;
    }
  }
  return mf;
}

const std::vector<std::vector<double>>& mat(const MatFile& mf, const std::string& name, std::size_t min_cols,
                                            const std::string& source) {
  auto it = mf.matrices.find(name);
  if (it == mf.matrices.end()) parse_fail(source, "missing matrix mpc." + name);
  for (std::size_t r = 0; r < it->second.size(); ++r) {
    if (it->second[r].size() < min_cols) {
      parse_fail(source, "mpc." + name + " row " + std::to_string(r + 1) + ": expected at least " +
                             std::to_string(min_cols) + " columns");
    }
  }
  return it->second;
}

}  // namespace

RawCase parse_matpower(const std::string& text, const std::string& sidecar_text, const std::string& source) {
  const MatFile mf = read_mat(text, source);
  RawCase rc;
  rc.name = std::filesystem::path(source).stem().string();
  if (auto it = mf.scalars.find("baseMVA"); it != mf.scalars.end()) rc.base_mva = it->second;
  const auto& bus = mat(mf, "bus", 13, source);
  const auto& gen = mat(mf, "gen", 10, source);
  const auto& branch = mat(mf, "branch", 11, source);
  std::vector<std::vector<double>> gencost;
  if (mf.matrices.count("gencost")) gencost = mat(mf, "gencost", 5, source);

  const std::string side_src = source + " (hydro sidecar)";
  Json side = sidecar_text.empty() ? Json::object() : parse_json_text(sidecar_text, side_src);
  check_header(side, "hydrosddp-hydro", kCaseVersion, side_src);
  Obj so{side, "sidecar", side_src};
  rc.hours_per_stage = so.number("hours_per_stage", 730.0);

  for (std::size_t k = 0; k < gen.size(); ++k) {
    const auto& g = gen[k];
    if (g[7] <= 0.0) continue;  // out of service
    RawThermal t;
    t.id = static_cast<int>(k) + 1;
    t.bus = static_cast<int>(g[0]);
    t.p_max_mw = g[8];
    t.q_max_mvar = g[3];
    t.q_min_mvar = g[4];
    if (k < gencost.size()) {
      const auto& c = gencost[k];
      const int n = static_cast<int>(c[3]);
      if (c[0] == 2.0 && n >= 2 && c.size() >= static_cast<std::size_t>(4 + n)) {
        // polynomial: keep the linear coefficient
        t.cost = c[static_cast<std::size_t>(4 + n - 2)];
      } else if (c[0] == 1.0 && n >= 2 && c.size() >= 8) {
        // piecewise linear: slope of the first segment
        const double dp = c[6] - c[4];
        t.cost = dp != 0.0 ? (c[7] - c[5]) / dp : 0.0;
      }
    }
    rc.thermals.push_back(t);
  }
  double max_cost = 0.0;
  for (const auto& t : rc.thermals) max_cost = std::max(max_cost, t.cost);
  const double deficit = so.number("deficit_cost", std::max(1000.0, 10.0 * max_cost));
  for (const auto& b : bus) {
    RawBus rb;
    rb.id = static_cast<int>(b[0]);
    rb.is_reference = static_cast<int>(b[1]) == 3;
    rb.load_mw = b[2];
    rb.shunt_g_mw = b[4];
    rb.shunt_b_mvar = b[5];
    rb.v_max = b[11];
    rb.v_min = b[12];
    rb.deficit_cost = deficit;
    rc.buses.push_back(rb);
  }
  const double unlimited = so.number("unlimited_rate_mva", 100.0 * rc.base_mva);
  for (const auto& l : branch) {
    if (l[10] <= 0.0) continue;
    RawBranch rb;
    rb.from = static_cast<int>(l[0]);
    rb.to = static_cast<int>(l[1]);
    rb.r = l[2];
    rb.x = l[3];
    rb.b_c = l[4];
    rb.rate_mva = l[5] > 0.0 ? l[5] : unlimited;
    rc.branches.push_back(rb);
  }
  rc.hydros = hydros_of(side, side_src);
  // hydro generators may also sit in the gen matrix; the sidecar lists them
  // by 1-based row so they are not double counted as thermals
  if (side.contains("hydro_gen_rows")) {
    Obj o{side, "sidecar", side_src};
    std::vector<double> rows = o.numbers("hydro_gen_rows");
    std::erase_if(rc.thermals, [&](const RawThermal& t) {
      return std::find(rows.begin(), rows.end(), static_cast<double>(t.id)) != rows.end();
    });
  }
  return rc;
}

RawCase parse_case(const std::string& path) {
  const std::string text = read_file(path);
  const std::filesystem::path p(path);
  if (p.extension() == ".m") {
    std::filesystem::path side = p;
    side.replace_extension(".hydro.json");
    std::string side_text;
    if (std::filesystem::exists(side)) side_text = read_file(side.string());
    return parse_matpower(text, side_text, path);
  }
  return parse_case_json(text, path);
}

// ---------------------------------------------------------------------------
// inflows
// ---------------------------------------------------------------------------

ScenarioLattice parse_inflows_csv(const std::string& text, const NetworkCase& net, std::vector<std::string>* warnings,
                                  const std::string& source) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    header = split(line, ',');
    break;
  }
  if (header.size() < 3 || header[0] != "stage" || header[1] != "outcome" || header[2] != "probability") {
    parse_fail(source, "line " + std::to_string(lineno) + ": header must start with stage,outcome,probability");
  }
  // column -> plant index
  std::vector<int> plant_of_col(header.size(), -1);
  std::vector<char> seen(net.hydros.size(), 0);
  for (std::size_t c = 3; c < header.size(); ++c) {
    const std::string& h = header[c];
    int id = 0;
    if (h.rfind("inflow_", 0) != 0 || !to_int(h.substr(7), id)) {
      parse_fail(source, "line " + std::to_string(lineno) + ": column '" + h + "' is not inflow_<plant id>");
    }
    for (std::size_t j = 0; j < net.hydros.size(); ++j) {
      if (net.hydros[j].id == id) plant_of_col[c] = static_cast<int>(j);
    }
    if (plant_of_col[c] < 0) parse_fail(source, "column '" + h + "' names an unknown plant");
    if (seen[static_cast<std::size_t>(plant_of_col[c])]++) parse_fail(source, "column '" + h + "' is repeated");
  }
  for (std::size_t j = 0; j < net.hydros.size(); ++j) {
    if (!seen[j]) parse_fail(source, "no inflow column for plant " + std::to_string(net.hydros[j].id));
  }
  std::map<int, std::map<int, Outcome>> rows;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto f = split(line, ',');
    const std::string at = "line " + std::to_string(lineno) + ": ";
    if (f.size() != header.size()) parse_fail(source, at + "expected " + std::to_string(header.size()) + " fields");
    int stage = 0, outcome = 0;
    Outcome o;
    if (!to_int(f[0], stage) || stage < 1) parse_fail(source, at + "bad stage '" + f[0] + "'");
    if (!to_int(f[1], outcome) || outcome < 0) parse_fail(source, at + "bad outcome '" + f[1] + "'");
    if (!to_double(f[2], o.probability) || !(o.probability >= 0.0)) {
      parse_fail(source, at + "bad probability '" + f[2] + "'");
    }
    o.inflow = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(net.hydros.size()));
    for (std::size_t c = 3; c < f.size(); ++c) {
      double v = 0.0;
      if (!to_double(f[c], v) || !std::isfinite(v)) parse_fail(source, at + "bad inflow '" + f[c] + "'");
      if (v < 0.0) {
        throw Error(ErrorKind::NegativeInflow, source + ": " + at + "negative inflow for plant " +
                                                   std::to_string(net.hydros[static_cast<std::size_t>(plant_of_col[c])].id));
      }
      o.inflow[plant_of_col[c]] = v;
    }
    if (rows[stage].count(outcome)) parse_fail(source, at + "duplicate (stage, outcome)");
    rows[stage][outcome] = std::move(o);
  }
  if (rows.empty()) parse_fail(source, "no data rows");
  ScenarioLattice lat;
  int expect = 1;
  for (auto& [stage, outs] : rows) {
    if (stage != expect) parse_fail(source, "stage " + std::to_string(expect) + " is missing");
    ++expect;
    std::vector<Outcome> v;
    double sum = 0.0;
    for (auto& [k, o] : outs) {
      sum += o.probability;
      v.push_back(std::move(o));
    }
    const double err = std::abs(sum - 1.0);
    if (err > 1e-6) {
      throw Error(ErrorKind::ProbabilitySumError,
                  source + ": stage " + std::to_string(stage) + " probabilities sum to " + num(sum));
    }
    if (err > 1e-9) {
      for (auto& o : v) o.probability /= sum;
      if (warnings) warnings->push_back("stage " + std::to_string(stage) + " probabilities renormalized from " + num(sum));
    }
    lat.stages.push_back(std::move(v));
  }
  lat.validate(static_cast<int>(net.hydros.size()));
  return lat;
}

ScenarioLattice parse_inflows(const std::string& path, const NetworkCase& net, std::vector<std::string>* warnings) {
  return parse_inflows_csv(read_file(path), net, warnings, path);
}

void write_inflows_csv(std::ostream& os, const ScenarioLattice& lat, const NetworkCase& net) {
  os << "stage,outcome,probability";
  for (const auto& h : net.hydros) os << ",inflow_" << h.id;
  os << '\n';
  for (int t = 1; t <= lat.n_stages(); ++t) {
    for (int k = 0; k < lat.n_outcomes(t); ++k) {
      const Outcome& o = lat.outcome(t, k);
      os << t << ',' << k << ',' << num(o.probability);
      for (Eigen::Index j = 0; j < o.inflow.size(); ++j) os << ',' << num(o.inflow[j]);
      os << '\n';
    }
  }
}

// ---------------------------------------------------------------------------
// policy
// ---------------------------------------------------------------------------

void save_policy(std::ostream& os, const Policy& p) {
  std::string name;
  for (char c : ordered_json(p.case_name).dump()) name.push_back(c);  // escaped string literal
  int plants = 0;
  for (const auto& st : p.cost_to_go.stages)
    if (!st.empty()) plants = static_cast<int>(st.front().slope.size());
  os << "{\n";
  os << "  \"format\": \"hydrosddp-policy\",\n";
  os << "  \"version\": " << kPolicyVersion << ",\n";
  os << "  \"kind\": \"" << to_string(p.kind) << "\",\n";
  os << "  \"case\": " << name << ",\n";
  os << "  \"n_stages\": " << p.cost_to_go.n_stages() << ",\n";
  os << "  \"n_plants\": " << plants << ",\n";
  os << "  \"training_iterations\": " << p.log.size() << ",\n";
  os << "  \"refinement_iterations\": " << p.refinement_log.size() << ",\n";
  os << "  \"lower_bound\": " << num(p.log.empty() ? 0.0 : p.log.back().lower_bound) << ",\n";
  os << "  \"refined_lower_bound\": "
     << (p.refinement_log.empty() ? std::string("null") : num(p.refinement_log.back().lower_bound)) << ",\n";
  os << "  \"stages\": [";
  for (int t = 1; t <= p.cost_to_go.n_stages(); ++t) {
    os << (t > 1 ? ",\n" : "\n") << "    {\"stage\": " << t << ", \"cuts\": [";
    const auto& cuts = p.cost_to_go.at(t);
    for (std::size_t k = 0; k < cuts.size(); ++k) {
      os << (k ? ",\n" : "\n") << "      {\"intercept\": " << num(cuts[k].intercept) << ", \"slope\": [";
      for (Eigen::Index j = 0; j < cuts[k].slope.size(); ++j) os << (j ? ", " : "") << num(cuts[k].slope[j]);
      os << "]}";
    }
    os << (cuts.empty() ? "]}" : "\n    ]}");
  }
  os << (p.cost_to_go.n_stages() ? "\n  ]\n" : "]\n");
  os << "}\n";
}

Policy load_policy_json(const std::string& text, const std::string& source) {
  const Json root = parse_json_text(text, source);
  check_header(root, "hydrosddp-policy", kPolicyVersion, source);
  Policy p;
  Obj top{root, "policy", source};
  if (!root.contains("kind") || !root.at("kind").is_string()) parse_fail(source, "policy: missing field 'kind'");
  try {
    p.kind = parse_kind(root.at("kind").get<std::string>());
  } catch (const Error& e) {
    parse_fail(source, e.what());
  }
  if (root.contains("case") && root.at("case").is_string()) p.case_name = root.at("case").get<std::string>();
  const Json& stages = array_field(root, "stages", source, true);
  const int plants = root.contains("n_plants") ? top.integer("n_plants") : -1;
  p.cost_to_go = CostToGo(static_cast<int>(stages.size()));
  for (std::size_t t = 0; t < stages.size(); ++t) {
    Obj so{stages[t], "stage #" + std::to_string(t + 1), source};
    if (so.integer("stage") != static_cast<int>(t) + 1) parse_fail(source, so.where + ": stages must be in order");
    const Json& cuts = array_field(stages[t], "cuts", source, true);
    for (std::size_t k = 0; k < cuts.size(); ++k) {
      Obj co{cuts[k], so.where + " cut " + std::to_string(k + 1), source};
      BendersCut c;
      c.intercept = co.number("intercept");
      const auto s = co.numbers("slope");
      if (plants >= 0 && static_cast<int>(s.size()) != plants) parse_fail(source, co.where + ": slope length");
      c.slope = Eigen::Map<const Eigen::VectorXd>(s.data(), static_cast<Eigen::Index>(s.size()));
      p.cost_to_go.add(static_cast<int>(t) + 1, std::move(c));
    }
  }
  // iteration counts survive as placeholder log entries holding the bound
  const int ti = root.contains("training_iterations") ? top.integer("training_iterations") : 0;
  const int ri = root.contains("refinement_iterations") ? top.integer("refinement_iterations") : 0;
  for (int i = 1; i <= ti; ++i) {
    TrainingLogEntry e;
    e.iteration = i;
    if (i == ti) e.lower_bound = top.number("lower_bound", 0.0);
    p.log.push_back(e);
  }
  for (int i = 1; i <= ri; ++i) {
    TrainingLogEntry e;
    e.iteration = i;
    if (i == ri && top.has("refined_lower_bound")) e.lower_bound = top.number("refined_lower_bound");
    p.refinement_log.push_back(e);
  }
  return p;
}

Policy load_policy(const std::string& path) { return load_policy_json(read_file(path), path); }

// ---------------------------------------------------------------------------
// reports
// ---------------------------------------------------------------------------

void write_report_json(std::ostream& os, const EvaluationReport& r) {
  ordered_json j;
  j["format"] = "hydrosddp-report";
  j["version"] = kReportVersion;
  j["plan_kind"] = to_string(r.plan_kind);
  j["simulation_kind"] = to_string(r.sim_kind);
  j["seed"] = r.seed;
  j["scenarios"] = r.n_scenarios();
  j["failures"] = r.failures;
  j["valid"] = r.valid();
  j["expected_cost"] = r.expected_cost;
  j["standard_error"] = r.standard_error;
  if (r.sim_kind == FormulationKind::AC) j["max_audit_residual"] = r.max_audit_residual;
  ordered_json totals = ordered_json::array();
  for (const auto& s : r.scenarios) totals.push_back(s.ok ? ordered_json(s.total_cost) : ordered_json(nullptr));
  j["scenario_costs"] = totals;
  ordered_json fails = ordered_json::array();
  for (const auto& s : r.scenarios)
    if (!s.ok) fails.push_back(s.failure);
  j["failure_messages"] = fails;
  os << j.dump(2) << '\n';
}

void write_report_csv(std::ostream& os, const EvaluationReport& r, const NetworkCase& net) {
  os << "scenario,stage,outcome,ok,stage_cost,thermal_mw,hydro_mw,deficit_mw";
  for (const auto& h : net.hydros) os << ",volume_" << h.id;
  for (const auto& b : net.buses) os << ",spot_" << b.id;
  os << '\n';
  for (std::size_t i = 0; i < r.scenarios.size(); ++i) {
    const auto& s = r.scenarios[i];
    if (!s.ok) continue;
    for (std::size_t t = 0; t < s.stages.size(); ++t) {
      const auto& st = s.stages[t];
      os << i << ',' << t + 1 << ',' << r.paths[i][t] << ",1," << num(st.cost) << ',' << num(st.thermal_mw) << ','
         << num(st.hydro_mw) << ',' << num(st.deficit_mw);
      for (Eigen::Index j = 0; j < st.volume.size(); ++j) os << ',' << num(st.volume[j]);
      for (Eigen::Index n = 0; n < st.spot_price.size(); ++n) os << ',' << num(st.spot_price[n]);
      os << '\n';
    }
  }
}

void write_trajectory_csv(std::ostream& os, const EvaluationReport& r, const NetworkCase& net) {
  const StageSeries s = expected_series(r);
  os << "stage";
  for (const auto& h : net.hydros) os << ",volume_" << h.id;
  os << ",thermal_mw,hydro_mw,deficit_mw,stage_cost";
  for (const auto& b : net.buses) os << ",spot_" << b.id;
  os << '\n';
  for (std::size_t t = 0; t < s.cost.size(); ++t) {
    os << t + 1;
    for (Eigen::Index j = 0; j < s.volume[t].size(); ++j) os << ',' << num(s.volume[t][j]);
    os << ',' << num(s.thermal_mw[t]) << ',' << num(s.hydro_mw[t]) << ',' << num(s.deficit_mw[t]) << ','
       << num(s.cost[t]);
    for (Eigen::Index n = 0; n < s.spot_price[t].size(); ++n) os << ',' << num(s.spot_price[t][n]);
    os << '\n';
  }
}

void write_comparison_csv(std::ostream& os, const Comparison& c) {
  os << "Policy,Planning,Implementation,GAP%,Time,GAP_SE,Planning_SE,Implementation_SE,RefineTime,Failures,Status\n";
  for (const auto& row : c.rows) {
    const std::string label = std::string(to_string(row.kind)) + "-AC";
    if (!row.ok) {
      os << label << ",,,,,,,,,," << "failed\n";
      continue;
    }
    os << label << ',' << num(row.gap.planning_cost) << ',' << num(row.gap.implementation_cost) << ','
       << num(row.gap.gap_percent) << ',' << num(row.gap.train_seconds) << ',' << num(row.gap.gap_standard_error)
       << ',' << num(row.plan.standard_error) << ',' << num(row.impl.standard_error) << ','
       << num(row.gap.refine_seconds) << ',' << row.plan.failures + row.impl.failures << ','
       << (row.impl.valid() && row.plan.valid() ? "ok" : "invalid") << '\n';
  }
}

void write_comparison_json(std::ostream& os, const Comparison& c) {
  ordered_json j;
  j["format"] = "hydrosddp-comparison";
  j["version"] = kReportVersion;
  j["simulation_seed"] = c.scenarios.seed;
  j["scenarios"] = c.scenarios.size();
  j["rows"] = ordered_json::array();
  for (const auto& row : c.rows) {
    ordered_json o;
    o["Policy"] = std::string(to_string(row.kind)) + "-AC";
    o["ok"] = row.ok;
    if (!row.ok) {
      o["error"] = row.error;
    } else {
      o["Planning"] = row.gap.planning_cost;
      o["Implementation"] = row.gap.implementation_cost;
      o["GAP%"] = row.gap.gap_percent;
      o["Time"] = row.gap.train_seconds;
      o["GAP_SE"] = row.gap.gap_standard_error;
      o["Planning_SE"] = row.plan.standard_error;
      o["Implementation_SE"] = row.impl.standard_error;
      o["RefineTime"] = row.gap.refine_seconds;
      o["step1_lower_bound"] = row.step1_lower_bound;
      o["refined_lower_bound"] =
          row.policy.refinement_log.empty() ? row.step1_lower_bound : row.policy.refinement_log.back().lower_bound;
      o["failures"] = row.plan.failures + row.impl.failures;
      o["valid"] = row.plan.valid() && row.impl.valid();
    }
    j["rows"].push_back(o);
  }
  os << j.dump(2) << '\n';
}

}  // namespace hydro
