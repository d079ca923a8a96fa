#include "sflow/cli.hpp"

#include "json_out.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <random>
#include <set>
#include <sstream>

namespace sflow {

using ordered_json = nlohmann::ordered_json;
namespace fs = std::filesystem;

// ------------------------------------------------------------------ Config

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    if (ch == sep) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += ch;
    }
  }
  out.push_back(trim(cur));
  return out;
}

[[noreturn]] void bad_key(const std::string& key, const std::string& what) {
  throw Error(ErrorCode::invalid_argument, "config key '" + key + "': " + what);
}

double to_double(const std::string& key, const std::string& v) {
  char* end = nullptr;
  const double x = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size() || !std::isfinite(x)) bad_key(key, "expected a number, got '" + v + "'");
  return x;
}

long to_long(const std::string& key, const std::string& v) {
  char* end = nullptr;
  const long x = std::strtol(v.c_str(), &end, 10);
  if (v.empty() || end != v.c_str() + v.size()) bad_key(key, "expected an integer, got '" + v + "'");
  return x;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  bad_key(key, "expected true or false, got '" + v + "'");
}

Matrix to_matrix(const std::string& key, const std::string& v) {
  const auto rows = split(v, ';');
  const auto first = split(rows.front(), ',');
  Matrix m(static_cast<Index>(rows.size()), static_cast<Index>(first.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto entries = split(rows[i], ',');
    if (entries.size() != first.size()) bad_key(key, "matrix rows have different lengths");
    for (std::size_t j = 0; j < entries.size(); ++j) {
      m(static_cast<Index>(i), static_cast<Index>(j)) = to_double(key, entries[j]);
    }
  }
  if (m.rows() != m.cols()) bad_key(key, "matrix must be square");
  return m;
}

std::vector<Matrix> to_matrices(const std::string& key, const std::string& v) {
  std::vector<Matrix> out;
  for (const auto& part : split(v, '|')) out.push_back(to_matrix(key, part));
  return out;
}

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "problem",       "n",           "c",           "cubic",          "A",
      "S",             "x",           "mesh.N",      "interval.a",     "interval.b",
      "scan.grid",     "scan.bracket", "scan.max_depth", "scan.eigencurves", "scan.route",
      "tol.rank",      "tol.zero_band", "tol.angle", "tol.projection", "tol.selfadjoint",
      "verify.steps",  "verify.delta0", "gap.pairs", "gap.dump",       "output.dir",
      "seed"};
  return keys;
}

const std::map<std::string, std::set<std::string>>& problem_keys() {
  static const std::map<std::string, std::set<std::string>> keys = {
      {"identity", {}},
      {"shifted_laplacian", {"c"}},
      {"cubic", {"c"}},
      {"polynomial", {"A", "S", "cubic"}},
      {"tabulated", {"A", "S", "x", "cubic"}},
  };
  return keys;
}

}  // namespace

RunConfig parse_config(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::invalid_argument,
                  "config line " + std::to_string(number) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!known_keys().count(key)) bad_key(key, "unknown key (line " + std::to_string(number) + ")");
    if (kv.count(key)) bad_key(key, "given twice");
    kv[key] = value;
  }

  RunConfig c;
  if (kv.count("problem")) c.problem = kv["problem"];
  const auto pk = problem_keys().find(c.problem);
  if (pk == problem_keys().end()) bad_key("problem", "unknown problem '" + c.problem + "'");
  for (const char* k : {"c", "cubic", "A", "S", "x"}) {
    if (kv.count(k) && !pk->second.count(k)) {
      bad_key(k, "not used by problem '" + c.problem + "'");
    }
  }

  auto get = [&](const char* key, auto& field, auto convert) {
    auto it = kv.find(key);
    if (it != kv.end()) field = convert(key, it->second);
  };
  auto as_int = [](const std::string& k, const std::string& v) { return static_cast<int>(to_long(k, v)); };
  get("n", c.n, as_int);
  get("c", c.c, to_double);
  get("cubic", c.cubic, to_double);
  get("A", c.A, to_matrices);
  get("S", c.S, to_matrices);
  if (kv.count("x")) {
    for (const auto& p : split(kv["x"], ',')) c.x.push_back(to_double("x", p));
  }
  get("mesh.N", c.mesh_elements, as_int);
  get("interval.a", c.interval.a, to_double);
  get("interval.b", c.interval.b, to_double);
  get("scan.grid", c.grid, as_int);
  get("scan.bracket", c.bracket, to_double);
  get("scan.max_depth", c.max_depth, as_int);
  get("scan.eigencurves", c.eigencurves, as_int);
  if (kv.count("scan.route")) {
    const std::string r = kv["scan.route"];
    if (r == "complement") c.route = ProjectionRoute::complement;
    else if (r == "direct") c.route = ProjectionRoute::direct;
    else if (r == "chi") c.route = ProjectionRoute::chi;
    else if (r == "kernel") c.route = ProjectionRoute::kernel;
    else bad_key("scan.route", "expected complement, direct, chi or kernel");
  }
  get("tol.rank", c.tol.rank, to_double);
  get("tol.zero_band", c.tol.zero_band, to_double);
  get("tol.angle", c.tol.angle, to_double);
  get("tol.projection", c.tol.projection, to_double);
  get("tol.selfadjoint", c.tol.selfadjoint, to_double);
  get("verify.steps", c.verify_steps, as_int);
  get("verify.delta0", c.verify_delta0, to_double);
  get("gap.pairs", c.gap_pairs, as_int);
  get("gap.dump", c.gap_dump, to_bool);
  if (kv.count("output.dir")) c.output_dir = kv["output.dir"];
  if (kv.count("seed")) {
    const long s = to_long("seed", kv["seed"]);
    if (s < 0) bad_key("seed", "must be non-negative");
    c.seed = static_cast<std::uint64_t>(s);
  }

  if (c.n < 1) bad_key("n", "must be positive");
  if (c.mesh_elements < 16) bad_key("mesh.N", "must be at least 16");
  if (!(c.interval.a > 0.0 && c.interval.a < c.interval.b && c.interval.b < 1.0)) {
    bad_key(kv.count("interval.b") && !kv.count("interval.a") ? "interval.b" : "interval.a",
            "need 0 < a < b < 1");
  }
  if (c.grid < 1) bad_key("scan.grid", "must be positive");
  if (!(c.bracket > 0.0)) bad_key("scan.bracket", "must be positive");
  if (c.max_depth < 1) bad_key("scan.max_depth", "must be positive");
  if (c.eigencurves < 1) bad_key("scan.eigencurves", "must be positive");
  for (auto [name, v] : {std::pair{"tol.rank", c.tol.rank}, {"tol.zero_band", c.tol.zero_band},
                         {"tol.angle", c.tol.angle}, {"tol.projection", c.tol.projection},
                         {"tol.selfadjoint", c.tol.selfadjoint}}) {
    if (!(v > 0.0)) bad_key(name, "tolerances must be positive");
  }
  if (c.verify_steps < 1) bad_key("verify.steps", "must be positive");
  if (!(c.verify_delta0 > 0.0)) bad_key("verify.delta0", "must be positive");
  if (c.gap_pairs < 1) bad_key("gap.pairs", "must be positive");

  if (c.problem == "polynomial" || c.problem == "tabulated") {
    if (c.A.empty()) bad_key("A", "required by problem '" + c.problem + "'");
    for (const auto* list : {&c.A, &c.S}) {
      for (const Matrix& m : *list) {
        if (m.rows() != c.n) bad_key(list == &c.A ? "A" : "S", "matrices must be n x n");
      }
    }
  }
  if (c.problem == "tabulated") {
    if (c.x.size() < 2) bad_key("x", "need at least two sample points");
    if (c.A.size() != c.x.size()) bad_key("A", "need one sample per x");
    if (c.S.size() != c.x.size()) bad_key("S", "need one sample per x");
  }
  return c;
}

ProblemData make_problem(const RunConfig& c) {
  if (c.problem == "identity") return presets::identity(c.n);
  if (c.problem == "shifted_laplacian") return presets::shifted_laplacian(c.c, c.n);
  if (c.problem == "cubic") return presets::cubic(c.c, c.n);
  if (c.problem == "polynomial") return presets::polynomial(c.A, c.S, c.cubic);
  if (c.problem == "tabulated") return presets::tabulated(c.x, c.A, c.S, c.cubic);
  throw Error(ErrorCode::invalid_argument, "config key 'problem': unknown problem '" + c.problem + "'");
}

// ----------------------------------------------------------------- Schemas

namespace {

enum class T { number, integer, boolean, string, object, array };

bool has_type(const ordered_json& v, T t) {
  switch (t) {
    case T::number: return v.is_number() || v.is_null();
    case T::integer: return v.is_number_integer();
    case T::boolean: return v.is_boolean();
    case T::string: return v.is_string();
    case T::object: return v.is_object();
    case T::array: return v.is_array();
  }
  return false;
}

using Schema = std::vector<std::pair<std::string, T>>;

void require(const ordered_json& j, const Schema& schema, const std::string& where) {
  for (const auto& [key, type] : schema) {
    if (!j.contains(key) || !has_type(j.at(key), type)) {
      throw Error(ErrorCode::internal, "schema check failed: " + where + "." + key);
    }
  }
}

void require_items(const ordered_json& j, const std::string& key, const Schema& schema) {
  for (const auto& item : j.at(key)) require(item, schema, key + "[]");
}

const Schema interval_schema = {{"a", T::number}, {"b", T::number}};

void check_flow(const ordered_json& j) {
  require(j, {{"kind", T::string}, {"version", T::integer}, {"problem", T::string}, {"n", T::integer},
              {"mesh_elements", T::integer}, {"interval", T::object}, {"sfl", T::integer},
              {"morse_a", T::integer}, {"morse_b", T::integer}, {"evaluations", T::integer},
              {"crossings", T::array}},
          "flow");
  require(j.at("interval"), interval_schema, "flow.interval");
  require_items(j, "crossings",
                {{"t", T::number}, {"lo", T::number}, {"hi", T::number}, {"sign", T::integer},
                 {"kernel_dim", T::integer}, {"index", T::integer}, {"slope", T::number}});
  long sum = 0;
  for (const auto& c : j.at("crossings")) sum += c.at("sign").get<long>();
  if (sum != j.at("sfl").get<long>() ||
      j.at("sfl").get<long>() != j.at("morse_a").get<long>() - j.at("morse_b").get<long>()) {
    throw Error(ErrorCode::internal, "schema check failed: flow counts are inconsistent");
  }
}

void check_report_json(const ordered_json& j) {
  require(j, {{"kind", T::string}, {"version", T::integer}, {"problem", T::string}, {"n", T::integer},
              {"mesh_elements", T::integer}, {"interval", T::object}, {"sfl", T::integer},
              {"morse_a", T::integer}, {"morse_b", T::integer}, {"admissible", T::boolean},
              {"margins", T::object}, {"candidates", T::array}, {"count_lower_bound", T::integer},
              {"count_caveat", T::boolean}, {"hypotheses", T::object}, {"notes", T::array},
              {"curves", T::array}},
          "report");
  require(j.at("interval"), interval_schema, "report.interval");
  require(j.at("margins"), interval_schema, "report.margins");
  require_items(j, "candidates",
                {{"t", T::number}, {"t_path", T::number}, {"lo", T::number}, {"hi", T::number},
                 {"bracket_width", T::number}, {"sign", T::integer}, {"kernel_dim", T::integer},
                 {"index", T::integer}, {"slope", T::number}, {"refined", T::boolean},
                 {"aligned_left_elements", T::integer}});
  require_items(j, "curves", {{"t", T::number}, {"morse", T::integer}, {"lowest", T::array}});
}

const Schema side_schema = {{"critical_t", T::number}, {"left_elements", T::integer},
                            {"supported_left", T::boolean}, {"verified", T::boolean},
                            {"all_trivial", T::boolean}, {"exponent", T::number},
                            {"points", T::array}};

void check_verify(const ordered_json& j) {
  require(j, {{"kind", T::string}, {"version", T::integer}, {"problem", T::string},
              {"all_trivial", T::boolean}, {"candidates", T::array}},
          "verify");
  for (const auto& c : j.at("candidates")) {
    require(c, {{"t", T::number}, {"sign", T::integer}, {"status", T::string},
                {"message", T::string}, {"plus", T::object}, {"minus", T::object}},
            "verify.candidates[]");
    for (const char* side : {"plus", "minus"}) {
      require(c.at(side), side_schema, std::string("verify.candidates[].") + side);
      require_items(c.at(side), "points",
                    {{"t", T::number}, {"delta", T::number}, {"amplitude", T::number},
                     {"residual", T::number}, {"ft_residual", T::number},
                     {"global_jump", T::number}, {"global", T::boolean}, {"status", T::string}});
    }
  }
}

void check_gap(const ordered_json& j) {
  require(j, {{"kind", T::string}, {"version", T::integer}, {"mesh_elements", T::integer},
              {"n", T::integer}, {"interval", T::object}, {"continuity", T::array},
              {"fitted_exponent", T::number}, {"bound_holds", T::boolean},
              {"equivalence", T::array}, {"max_equivalence_gap", T::number},
              {"kernel_path", T::object}},
          "gap");
  require_items(j, "continuity",
                {{"t", T::number}, {"s", T::number}, {"gap", T::number},
                 {"dual_norm", T::number}, {"bound", T::number}});
  require_items(j, "equivalence",
                {{"t", T::number}, {"gap", T::number}, {"idempotency", T::number},
                 {"selfadjoint", T::number}});
  require(j.at("kernel_path"), {{"samples", T::array}, {"consecutive_gaps", T::array}},
          "gap.kernel_path");
}

void check_csv(const std::string& text, std::size_t min_columns) {
  std::istringstream in(text);
  std::string line;
  std::size_t columns = 0;
  bool header = true;
  while (std::getline(in, line)) {
    const std::size_t count = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1;
    if (header) {
      columns = count;
      header = false;
      if (columns < min_columns) throw Error(ErrorCode::internal, "schema check failed: CSV header");
    } else if (count != columns) {
      throw Error(ErrorCode::internal, "schema check failed: CSV row width");
    }
  }
  if (header) throw Error(ErrorCode::internal, "schema check failed: empty CSV");
}

std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::invalid_argument, "cannot write " + path.string());
  f << text;
}

// ---------------------------------------------------------------- Commands

struct Context {
  RunConfig config;
  fs::path out_dir;
  std::string report_path;
  std::ostream* out;
};

DetectControl detect_control(const RunConfig& c) {
  DetectControl d;
  d.scan.grid = c.grid;
  d.scan.bracket = c.bracket;
  d.scan.max_depth = c.max_depth;
  d.scan.curve_count = c.eigencurves;
  d.scan.tol = c.tol;
  d.route = c.route;
  return d;
}

DiscreteSpace make_space(const RunConfig& c) { return DiscreteSpace(Mesh::uniform(c.mesh_elements), c.n); }

void cmd_flow(const Context& ctx) {
  const RunConfig& c = ctx.config;
  const DiscreteSpace space = make_space(c);
  const ProblemData problem = make_problem(c);
  validate(problem, space);
  const SymmetricOperator t_op = riesz_operator(space, assemble_hessian(space, problem));
  const DetectControl dc = detect_control(c);
  ProjectionFamily projector;
  switch (c.route) {
    case ProjectionRoute::direct: projector = direct_projector(space, c.tol); break;
    case ProjectionRoute::kernel: projector = kernel_projector(space, c.tol); break;
    case ProjectionRoute::chi: {
      const double h = space.mesh().max_width();
      const double lo = c.interval.a - 2 * h > 0 ? c.interval.a - 2 * h : 0.5 * c.interval.a;
      const double hi = c.interval.b + 2 * h < 1 ? c.interval.b + 2 * h : 0.5 * (1 + c.interval.b);
      projector = chi_projector(space, smoothstep_cutoff(lo, hi), c.tol);
      break;
    }
    default: projector = complement_projector(space, c.tol);
  }
  const OperatorPath path = build_L_path(space, t_op, projector, c.interval);
  const SpectralFlowResult r = spectral_flow(path, dc.scan);

  ordered_json j;
  j["kind"] = "flow";
  j["version"] = 1;
  j["problem"] = problem.label;
  j["n"] = c.n;
  j["mesh_elements"] = c.mesh_elements;
  j["interval"] = {{"a", c.interval.a}, {"b", c.interval.b}};
  j["sfl"] = r.value;
  j["morse_a"] = r.morse_a;
  j["morse_b"] = r.morse_b;
  j["evaluations"] = r.evaluations;
  ordered_json xs = ordered_json::array();
  for (const Crossing& x : r.crossings) {
    xs.push_back({{"t", x.t}, {"lo", x.lo}, {"hi", x.hi}, {"sign", x.sign},
                  {"kernel_dim", x.kernel_dim}, {"index", x.index},
                  {"slope", x.eigenvalue_slope_estimate}});
  }
  j["crossings"] = xs;
  check_flow(j);
  write_file(ctx.out_dir / "flow.json", detail::dump17(j));
  *ctx.out << "sfl = " << r.value << " (morse " << r.morse_a << " -> " << r.morse_b << "), "
           << r.crossings.size() << " crossing(s)\n";
}

void cmd_scan(const Context& ctx) {
  const RunConfig& c = ctx.config;
  const DiscreteSpace space = make_space(c);
  const ProblemData problem = make_problem(c);
  validate(problem, space);
  const BifurcationReport report = detect(space, problem, c.interval, detect_control(c));
  const std::string text = report_to_json(report);
  check_report_json(ordered_json::parse(text));
  report_from_json(text);
  const std::string csv = eigencurves_csv(report);
  check_csv(csv, 2);
  write_file(ctx.out_dir / "report.json", text);
  write_file(ctx.out_dir / "eigencurves.csv", csv);
  *ctx.out << "sfl = " << report.sfl << ", " << report.candidates.size() << " candidate(s)";
  for (const Candidate& x : report.candidates) *ctx.out << " " << g17(x.t);
  *ctx.out << "\n";
}

ordered_json side_json(const BranchTrace& t) {
  ordered_json pts = ordered_json::array();
  for (const BranchPoint& p : t.points) {
    pts.push_back({{"t", p.t},
                   {"delta", p.delta},
                   {"amplitude", p.amplitude},
                   {"residual", p.residual},
                   {"ft_residual", p.ft_residual},
                   {"global_jump", p.global.jump},
                   {"global", p.global.global},
                   {"status", to_string(p.status)}});
  }
  return {{"critical_t", t.critical_t},     {"left_elements", t.left_elements},
          {"supported_left", t.supported_left}, {"verified", t.verified},
          {"all_trivial", t.all_trivial},   {"exponent", t.exponent},
          {"points", pts}};
}

std::string branch_csv(const BranchTrace& t) {
  std::string s = "t,amplitude,residual,global_jump,status\n";
  for (const BranchPoint& p : t.points) {
    s += g17(p.t) + "," + g17(p.amplitude) + "," + g17(p.residual) + "," + g17(p.global.jump) +
         "," + to_string(p.status) + "\n";
  }
  return s;
}

std::string profile_csv(const DiscreteFunction& u) {
  const Matrix v = u.nodal_values();
  std::string s = "x";
  for (Index c = 0; c < v.cols(); ++c) s += ",u_" + std::to_string(c + 1);
  s += "\n";
  for (Index i = 0; i < v.rows(); ++i) {
    s += g17(u.space.mesh().node(static_cast<int>(i)));
    for (Index c = 0; c < v.cols(); ++c) s += "," + g17(v(i, c));
    s += "\n";
  }
  return s;
}

void cmd_verify(const Context& ctx) {
  const RunConfig& c = ctx.config;
  const fs::path report_path =
      ctx.report_path.empty() ? ctx.out_dir / "report.json" : fs::path(ctx.report_path);
  std::ifstream f(report_path, std::ios::binary);
  if (!f) throw Error(ErrorCode::invalid_argument, "missing report: " + report_path.string());
  std::stringstream buf;
  buf << f.rdbuf();
  const BifurcationReport report = report_from_json(buf.str());
  const ProblemData problem = make_problem(c);
  if (report.mesh_elements != c.mesh_elements || report.n != c.n || report.problem != problem.label) {
    throw Error(ErrorCode::invalid_argument,
                "report does not match the config (problem, n or mesh.N differ)");
  }
  const DiscreteSpace space = make_space(c);
  validate(problem, space);
  BranchControl control;
  control.steps = c.verify_steps;
  control.delta0 = c.verify_delta0;
  control.tol = c.tol;
  const VerifyReport v = verify_candidates(space, problem, report, control);

  ordered_json j;
  j["kind"] = "verify";
  j["version"] = 1;
  j["problem"] = problem.label;
  j["all_trivial"] = v.all_trivial;
  ordered_json cands = ordered_json::array();
  for (std::size_t i = 0; i < v.candidates.size(); ++i) {
    const CandidateVerification& cv = v.candidates[i];
    const std::string id = std::to_string(i + 1);
    for (const BranchTrace* t : {&cv.plus, &cv.minus}) {
      const std::string csv = branch_csv(*t);
      check_csv(csv, 4);
      write_file(ctx.out_dir / ("branch_" + id + "_" + to_string(t->side) + ".csv"), csv);
    }
    for (const BranchTrace* t : {&cv.plus, &cv.minus}) {
      if (!t->verified) continue;
      const BranchPoint* last = nullptr;
      for (const BranchPoint& p : t->points) {
        if (p.status == PointStatus::converged) last = &p;
      }
      if (last && last->u) {
        const std::string csv = profile_csv(*last->u);
        check_csv(csv, 2);
        write_file(ctx.out_dir / ("profile_" + id + ".csv"), csv);
      }
      break;
    }
    cands.push_back({{"t", cv.candidate.t},
                     {"sign", cv.candidate.sign},
                     {"status", to_string(cv.status)},
                     {"message", cv.message},
                     {"plus", side_json(cv.plus)},
                     {"minus", side_json(cv.minus)}});
    *ctx.out << "candidate " << id << " at t = " << g17(cv.candidate.t) << ": "
             << to_string(cv.status) << " (" << cv.message << ")\n";
  }
  j["candidates"] = cands;
  check_verify(j);
  write_file(ctx.out_dir / "verify.json", detail::dump17(j));
  if (v.candidates.empty()) *ctx.out << "no candidates: all_trivial\n";
}

void cmd_gap(const Context& ctx) {
  const RunConfig& c = ctx.config;
  const DiscreteSpace space = make_space(c);
  const double h = space.mesh().max_width();
  const Interval iv = c.interval;

  ordered_json j;
  j["kind"] = "gap";
  j["version"] = 1;
  j["mesh_elements"] = c.mesh_elements;
  j["n"] = c.n;
  j["interval"] = {{"a", iv.a}, {"b", iv.b}};

  // Continuity: gap(H_t, H_s) against |t - s| on dyadic offsets.
  const double t0 = 0.5 * (iv.a + iv.b);
  const Projection p0 = orthogonal_projection(constrained_subspace(space, t0), c.tol);
  const Matrix e0 = evaluation_map(space, t0);
  ordered_json cont = ordered_json::array();
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int count = 0;
  bool bound_holds = true;
  for (int k = 1; k <= 10; ++k) {
    const double d = 0.5 * (iv.b - iv.a) * std::pow(0.5, k);
    const double s = t0 + d;
    const double g =
        gap_distance(p0, orthogonal_projection(constrained_subspace(space, s), c.tol));
    const double dn = dual_norm(space, evaluation_map(space, s) - e0);
    const double bound = std::sqrt(d) + 2.0 * h;
    bound_holds = bound_holds && dn <= bound;
    cont.push_back({{"t", t0}, {"s", s}, {"gap", g}, {"dual_norm", dn}, {"bound", bound}});
    if (d > 4.0 * h && g > 0.0) {
      sx += std::log(d);
      sy += std::log(g);
      sxx += std::log(d) * std::log(d);
      sxy += std::log(d) * std::log(g);
      ++count;
    }
  }
  const double exponent = count >= 2 ? (count * sxy - sx * sy) / (count * sxx - sx * sx) : 0.0;
  j["continuity"] = cont;
  j["fitted_exponent"] = exponent;
  j["bound_holds"] = bound_holds;

  // Equivalence of the cutoff construction and the direct projection.
  std::mt19937_64 rng(c.seed);
  std::uniform_real_distribution<double> unif(iv.a, iv.b);
  const double lo = iv.a - 2 * h > 0 ? iv.a - 2 * h : 0.5 * iv.a;
  const double hi = iv.b + 2 * h < 1 ? iv.b + 2 * h : 0.5 * (1 + iv.b);
  const Cutoff chi = smoothstep_cutoff(lo, hi);
  ordered_json eq = ordered_json::array();
  double worst = 0.0;
  for (int i = 0; i < c.gap_pairs; ++i) {
    const double t = unif(rng);
    const Projection pc = chi_projection(space, t, chi, c.tol);
    const Projection pd = orthogonal_projection(constrained_subspace(space, t), c.tol);
    const double g = gap_distance(pc, pd);
    worst = std::max(worst, g);
    eq.push_back({{"t", t},
                  {"gap", g},
                  {"idempotency", pc.idempotency_residual()},
                  {"selfadjoint", pc.selfadjoint_residual()}});
  }
  j["equivalence"] = eq;
  j["max_equivalence_gap"] = worst;

  std::vector<double> samples;
  for (int i = 0; i <= c.grid; ++i) samples.push_back(iv.a + (iv.b - iv.a) * i / c.grid);
  const KernelPath kp = kernel_path([&](double t) { return evaluation_map(space, t); },
                                    space.inner(), samples, c.tol);
  j["kernel_path"] = {{"samples", kp.samples}, {"consecutive_gaps", kp.consecutive_gaps}};
  check_gap(j);
  write_file(ctx.out_dir / "gap.json", detail::dump17(j));
  if (c.gap_dump) {
    for (const auto& [name, t] : {std::pair{"a", iv.a}, {"b", iv.b}}) {
      std::ostringstream csv;
      write_projection_csv(csv, orthogonal_projection(constrained_subspace(space, t), c.tol));
      write_file(ctx.out_dir / (std::string("projection_") + name + ".csv"), csv.str());
    }
  }
  *ctx.out << "gap exponent " << g17(exponent) << ", max equivalence gap " << g17(worst) << "\n";
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"spectral flow bifurcation toolkit"};
  app.require_subcommand(1);
  std::string config_path, out_dir, report_path;
  int grid = 0;
  double tol = 0.0;
  long long seed = -1;
  struct Cmd {
    const char* name;
    const char* help;
    void (*run)(const Context&);
  };
  const Cmd commands[] = {{"flow", "spectral flow and crossings", cmd_flow},
                          {"scan", "bifurcation report and eigenvalue curves", cmd_scan},
                          {"verify", "branch verification of reported candidates", cmd_verify},
                          {"gap", "subspace gap diagnostics", cmd_gap}};
  std::vector<CLI::App*> subs;
  for (const Cmd& cmd : commands) {
    CLI::App* sub = app.add_subcommand(cmd.name, cmd.help);
    sub->add_option("--config", config_path, "config file")->required();
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--grid", grid, "scan grid size");
    sub->add_option("--tol", tol, "zero-band tolerance");
    sub->add_option("--seed", seed, "random seed");
    if (std::string(cmd.name) == "verify") sub->add_option("--report", report_path, "report.json path");
    subs.push_back(sub);
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    return 1;
  }

  Context ctx;
  ctx.out = &out;
  ctx.report_path = report_path;
  try {
    std::ifstream f(config_path, std::ios::binary);
    if (!f) throw Error(ErrorCode::invalid_argument, "cannot read config " + config_path);
    std::stringstream buf;
    buf << f.rdbuf();
    ctx.config = parse_config(buf.str());
    if (grid != 0) {
      if (grid < 1) throw Error(ErrorCode::invalid_argument, "--grid must be positive");
      ctx.config.grid = grid;
    }
    if (tol != 0.0) {
      if (!(tol > 0.0)) throw Error(ErrorCode::invalid_argument, "--tol must be positive");
      ctx.config.tol.zero_band = tol;
    }
    if (seed >= 0) ctx.config.seed = static_cast<std::uint64_t>(seed);
    if (!out_dir.empty()) ctx.config.output_dir = out_dir;
    ctx.out_dir = ctx.config.output_dir;
    fs::create_directories(ctx.out_dir);
  } catch (const std::exception& e) {
    err << "config error: " << e.what() << "\n";
    return 1;
  }

  for (std::size_t i = 0; i < subs.size(); ++i) {
    if (!subs[i]->parsed()) continue;
    try {
      commands[i].run(ctx);
      return 0;
    } catch (const Error& e) {
      err << e.what() << "\n";
      if (e.code() == ErrorCode::degenerate_endpoint) return 2;
      if (e.code() == ErrorCode::invalid_argument) return 1;
      return 3;
    } catch (const std::exception& e) {
      err << "numerical failure: " << e.what() << "\n";
      return 3;
    }
  }
  return 1;
}

}  // namespace sflow
