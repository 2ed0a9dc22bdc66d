#include "bipfit/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>

#include "bipfit/structure_analysis.hpp"

namespace bipfit {

using nlohmann::json;

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

bool parse_plain(std::string_view s, double& out) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  if (s.empty()) return false;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && ptr == s.data() + s.size() && std::isfinite(out);
}

std::string fmt_real(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

std::string field_error(const std::string& ptr, const std::string& msg) {
  return "field " + (ptr.empty() ? std::string("/") : ptr) + ": " + msg;
}

double number_at(const json& j, const std::string& ptr) {
  if (j.is_number()) {
    const double v = j.get<double>();
    if (!std::isfinite(v)) throw ParseError(field_error(ptr, "not a finite number"));
    return v;
  }
  if (j.is_string()) {
    try {
      return parse_real(j.get<std::string>());
    } catch (const ParseError& e) {
      throw ParseError(field_error(ptr, e.what()));
    }
  }
  throw ParseError(field_error(ptr, "expected a number or a numeric string, got " +
                                        std::string(j.type_name())));
}

std::vector<double> vector_at(const json& doc, const std::string& key) {
  const std::string ptr = "/" + key;
  if (!doc.contains(key)) throw ParseError(field_error(ptr, "missing"));
  const json& arr = doc.at(key);
  if (!arr.is_array()) throw ParseError(field_error(ptr, "expected an array"));
  std::vector<double> out;
  for (Index k = 0; k < arr.size(); ++k)
    out.push_back(number_at(arr[k], ptr + "/" + std::to_string(k)));
  return out;
}

json parse_json_text(std::string_view text) {
  try {
    return json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    Index line = 1, col = 1;
    const Index stop = std::min<Index>(e.byte == 0 ? 0 : e.byte - 1, text.size());
    for (Index k = 0; k < stop; ++k) {
      if (text[k] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    std::string what = e.what();
    // Drop nlohmann's "[json.exception.parse_error.101] " prefix and its own
    // "parse error at line L, column C: " in favour of ours.
    if (auto pos = what.find("] "); pos != std::string::npos) what = what.substr(pos + 2);
    if (what.rfind("parse error", 0) == 0)
      if (auto pos = what.find(": "); pos != std::string::npos) what = what.substr(pos + 2);
    throw ParseError("line " + std::to_string(line) + ", column " + std::to_string(col) +
                     ": " + what);
  }
}

void check_marginal(const std::vector<double>& v, const std::string& key) {
  const std::string ptr = "/" + key;
  if (v.size() < 2) throw ParseError(field_error(ptr, "need at least 2 entries"));
  double sum = 0.0;
  for (Index k = 0; k < v.size(); ++k) {
    if (!(v[k] > 0.0))
      throw ParseError(field_error(ptr + "/" + std::to_string(k),
                                   "marginal entries must be positive, got " + fmt_real(v[k])));
    sum += v[k];
  }
  if (std::abs(sum - 1.0) > tol::kSum)
    throw ParseError(field_error(ptr, "entries sum to " + fmt_real(sum) + ", expected 1"));
}

json cause_to_json(const Cause& c, const Marginals& a, const Marginals& b) {
  IndexSet comp;
  for (Index j = 0, k = 0; j < b.size(); ++j) {
    if (k < c.cols.size() && c.cols[k] == j) {
      ++k;
      continue;
    }
    comp.push_back(j);
  }
  return json{{"rows", indices_to_json(c.rows)},
              {"cols", indices_to_json(c.cols)},
              {"kind", std::string(to_string(c.kind))},
              {"a_mass", a.mass(c.rows)},
              {"b_complement_mass", b.mass(comp)},
              {"ratio", c.ratio},
              {"margin", c.margin}};
}

IndexSet indices_from_json(const json& j, Index bound, const std::string& ptr) {
  if (!j.is_array()) throw ParseError(field_error(ptr, "expected an index array"));
  IndexSet out;
  for (Index k = 0; k < j.size(); ++k) {
    if (!j[k].is_number_integer() || j[k].get<long long>() < 1 ||
        static_cast<Index>(j[k].get<long long>()) > bound)
      throw ParseError(field_error(ptr + "/" + std::to_string(k), "index out of range"));
    out.push_back(static_cast<Index>(j[k].get<long long>()) - 1);
  }
  return out;
}

Cause cause_from_json(const json& j, Index p, Index q, const std::string& ptr) {
  if (!j.is_object()) throw ParseError(field_error(ptr, "expected a cause object"));
  Cause c;
  c.rows = indices_from_json(j.at("rows"), p, ptr + "/rows");
  c.cols = indices_from_json(j.at("cols"), q, ptr + "/cols");
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "Incompatibility") {
    c.kind = CauseKind::Incompatibility;
  } else if (kind == "Criticality") {
    c.kind = CauseKind::Criticality;
  } else {
    throw ParseError(field_error(ptr + "/kind", "unknown cause kind " + kind));
  }
  c.ratio = j.at("ratio").get<double>();
  c.margin = j.at("margin").get<double>();
  return c;
}

json blocks_to_json(const BlockStructure& bs) {
  json steps = json::array();
  for (const Cause& c : bs.step_causes)
    steps.push_back(json{{"rows", indices_to_json(c.rows)},
                         {"cols", indices_to_json(c.cols)},
                         {"local_ratio", c.ratio},
                         {"local_margin", c.margin}});
  json rows = json::array(), cols = json::array();
  for (const auto& r : bs.row_blocks) rows.push_back(indices_to_json(r));
  for (const auto& c : bs.col_blocks) cols.push_back(indices_to_json(c));
  return json{{"r", bs.r},
              {"row_blocks", rows},
              {"col_blocks", cols},
              {"lambdas", bs.lambdas},
              {"a_prime", std::vector<double>(bs.a_prime.values().begin(),
                                              bs.a_prime.values().end())},
              {"b_prime", std::vector<double>(bs.b_prime.values().begin(),
                                              bs.b_prime.values().end())},
              {"step_causes", steps}};
}

SupportPattern pattern_from_json(const json& j, Index p, Index q, const std::string& ptr) {
  const Matrix m = matrix_from_json(j, ptr);
  if (m.rows() != p || m.cols() != q) throw ParseError(field_error(ptr, "wrong shape"));
  std::vector<bool> mask(p * q);
  for (Index i = 0; i < p; ++i)
    for (Index k = 0; k < q; ++k) mask[i * q + k] = m(i, k) != 0.0;
  try {
    return SupportPattern(p, q, std::move(mask));
  } catch (const InvalidInput& e) {
    throw TheoremViolation(field_error(ptr, e.what()));
  }
}

void require(bool ok, const std::string& msg) {
  if (!ok) throw TheoremViolation("report check failed: " + msg);
}

void check_marginals_of(const Matrix& m, std::span<const double> rows,
                        std::span<const double> cols, double tol, const std::string& what) {
  const auto rs = m.row_sums();
  const auto cs = m.col_sums();
  require(l1_distance(rs, rows) <= tol, what + " row sums off by " + fmt_real(l1_distance(rs, rows)));
  require(l1_distance(cs, cols) <= tol, what + " column sums off by " + fmt_real(l1_distance(cs, cols)));
}

Index get_count(const json& spec, const char* key, Index fallback, Index max) {
  if (!spec.contains(key)) {
    if (fallback == 0) throw ParseError(field_error(std::string("/") + key, "missing"));
    return fallback;
  }
  const json& v = spec.at(key);
  if (!v.is_number_integer() || v.get<long long>() < 1 ||
      static_cast<Index>(v.get<long long>()) > max)
    throw ParseError(field_error(std::string("/") + key,
                                 "expected an integer in [1, " + std::to_string(max) + "]"));
  return static_cast<Index>(v.get<long long>());
}

double get_unit(const json& spec, const char* key, double fallback) {
  if (!spec.contains(key)) return fallback;
  const double v = number_at(spec.at(key), std::string("/") + key);
  if (v < 0.0 || v > 1.0)
    throw ParseError(field_error(std::string("/") + key, "expected a value in [0, 1]"));
  return v;
}

std::uint64_t get_seed(json& spec, std::uint64_t fallback) {
  if (!spec.contains("seed")) {
    spec["seed"] = fallback;
    return fallback;
  }
  const json& v = spec.at("seed");
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0))
    throw ParseError(field_error("/seed", "expected a non-negative integer"));
  return v.get<std::uint64_t>();
}

}  // namespace

double parse_real(std::string_view text) {
  const std::string_view s = trim(text);
  double num = 0.0;
  if (const auto slash = s.find('/'); slash != std::string_view::npos) {
    double den = 0.0;
    if (!parse_plain(s.substr(0, slash), num) || !parse_plain(s.substr(slash + 1), den))
      throw ParseError("'" + std::string(s) + "' is not a number or a ratio p/q");
    if (den == 0.0) throw ParseError("'" + std::string(s) + "' has a zero denominator");
    return num / den;
  }
  if (!parse_plain(s, num)) throw ParseError("'" + std::string(s) + "' is not a number");
  return num;
}

std::vector<double> parse_real_list(std::string_view text) {
  std::vector<double> out;
  std::string token;
  auto flush = [&] {
    if (!token.empty()) out.push_back(parse_real(token));
    token.clear();
  };
  for (char ch : text) {
    if (ch == ',' || std::isspace(static_cast<unsigned char>(ch))) {
      flush();
    } else {
      token.push_back(ch);
    }
  }
  flush();
  return out;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path.string() + ": cannot open file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

FittingProblem ProblemFile::to_problem() const {
  return FittingProblem(x0, Marginals(a), Marginals(b));
}

ProblemFile ProblemFile::from_problem(const FittingProblem& problem, std::string name,
                                      std::string description) {
  ProblemFile f;
  f.name = std::move(name);
  f.description = std::move(description);
  f.a.assign(problem.a().values().begin(), problem.a().values().end());
  f.b.assign(problem.b().values().begin(), problem.b().values().end());
  f.x0 = problem.x0().matrix();
  return f;
}

ProblemFile parse_problem(std::string_view json_text) {
  const json doc = parse_json_text(json_text);
  if (!doc.is_object()) throw ParseError(field_error("", "expected a JSON object"));
  for (const auto& [key, value] : doc.items())
    if (key != "a" && key != "b" && key != "X0" && key != "name" && key != "description")
      throw ParseError(field_error("/" + key, "unknown field"));

  ProblemFile f;
  for (const char* key : {"name", "description"}) {
    if (!doc.contains(key)) continue;
    if (!doc.at(key).is_string())
      throw ParseError(field_error(std::string("/") + key, "expected a string"));
    (std::string_view(key) == "name" ? f.name : f.description) = doc.at(key).get<std::string>();
  }
  f.a = vector_at(doc, "a");
  f.b = vector_at(doc, "b");
  check_marginal(f.a, "a");
  check_marginal(f.b, "b");

  if (!doc.contains("X0")) throw ParseError(field_error("/X0", "missing"));
  f.x0 = matrix_from_json(doc.at("X0"), "/X0");
  if (f.x0.rows() != f.a.size())
    throw ParseError(field_error("/X0", "has " + std::to_string(f.x0.rows()) +
                                            " rows but a has " + std::to_string(f.a.size()) +
                                            " entries"));
  if (f.x0.cols() != f.b.size())
    throw ParseError(field_error("/X0", "has " + std::to_string(f.x0.cols()) +
                                            " columns but b has " + std::to_string(f.b.size()) +
                                            " entries"));
  for (Index i = 0; i < f.x0.rows(); ++i)
    for (Index j = 0; j < f.x0.cols(); ++j)
      if (f.x0(i, j) < 0.0)
        throw ParseError(field_error("/X0/" + std::to_string(i) + "/" + std::to_string(j),
                                     "entries must be non-negative"));
  const auto rs = f.x0.row_sums();
  const auto cs = f.x0.col_sums();
  for (Index i = 0; i < rs.size(); ++i)
    if (!(rs[i] > 0.0))
      throw ParseError(field_error("/X0/" + std::to_string(i), "row has no positive entry"));
  for (Index j = 0; j < cs.size(); ++j)
    if (!(cs[j] > 0.0))
      throw ParseError(field_error("/X0/*/" + std::to_string(j), "column has no positive entry"));
  try {
    (void)f.to_problem();
  } catch (const InvalidInput& e) {
    throw ParseError(std::string("problem rejected: ") + e.what());
  }
  return f;
}

ProblemFile load_problem(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  try {
    return parse_problem(text);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

json to_json(const ProblemFile& file) {
  json j = json::object();
  if (!file.name.empty()) j["name"] = file.name;
  if (!file.description.empty()) j["description"] = file.description;
  j["a"] = file.a;
  j["b"] = file.b;
  j["X0"] = matrix_to_json(file.x0);
  return j;
}

std::string serialize_problem(const ProblemFile& file) { return to_json(file).dump(2) + "\n"; }

Matrix parse_csv_matrix(std::string_view text) {
  std::vector<std::vector<double>> rows;
  Index line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t end = std::min(text.find('\n', start), text.size());
    std::string_view line = text.substr(start, end - start);
    ++line_no;
    start = end + 1;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    const std::string_view body = trim(line);
    if (body.empty() || body.front() == '#') {
      if (end == text.size()) break;
      continue;
    }
    std::vector<double> row;
    Index col = 0;
    std::size_t pos = 0;
    while (true) {
      const std::size_t comma = body.find(',', pos);
      const std::string_view cell =
          body.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos);
      ++col;
      try {
        row.push_back(parse_real(cell));
      } catch (const ParseError& e) {
        throw ParseError("line " + std::to_string(line_no) + ", column " + std::to_string(col) +
                         ": " + e.what());
      }
      if (comma == std::string_view::npos) break;
      pos = comma + 1;
    }
    if (!rows.empty() && row.size() != rows.front().size())
      throw ParseError("line " + std::to_string(line_no) + ": expected " +
                       std::to_string(rows.front().size()) + " entries, got " +
                       std::to_string(row.size()));
    rows.push_back(std::move(row));
    if (end == text.size()) break;
  }
  if (rows.empty()) throw ParseError("CSV matrix is empty");
  return Matrix::from_rows(rows);
}

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    const auto r = m.row(i);
    rows.push_back(std::vector<double>(r.begin(), r.end()));
  }
  return rows;
}

Matrix matrix_from_json(const json& j, const std::string& where) {
  if (!j.is_array() || j.empty())
    throw ParseError(field_error(where, "expected a non-empty array of rows"));
  std::vector<std::vector<double>> rows;
  for (Index i = 0; i < j.size(); ++i) {
    const std::string rp = where + "/" + std::to_string(i);
    if (!j[i].is_array() || j[i].empty())
      throw ParseError(field_error(rp, "expected a non-empty array"));
    if (!rows.empty() && j[i].size() != rows.front().size())
      throw ParseError(field_error(rp, "row has " + std::to_string(j[i].size()) +
                                           " entries, expected " +
                                           std::to_string(rows.front().size())));
    std::vector<double> row;
    for (Index k = 0; k < j[i].size(); ++k)
      row.push_back(number_at(j[i][k], rp + "/" + std::to_string(k)));
    rows.push_back(std::move(row));
  }
  return Matrix::from_rows(rows);
}

json pattern_to_json(const SupportPattern& s) {
  json rows = json::array();
  for (Index i = 0; i < s.rows(); ++i) {
    std::vector<int> r(s.cols());
    for (Index j = 0; j < s.cols(); ++j) r[j] = s(i, j) ? 1 : 0;
    rows.push_back(r);
  }
  return rows;
}

json indices_to_json(const IndexSet& s) {
  json out = json::array();
  for (Index i : s) out.push_back(i + 1);
  return out;
}

MatrixSequence parse_sequence(std::string_view json_text, std::uint64_t default_seed) {
  MatrixSequence seq;
  seq.spec = parse_json_text(json_text);
  json& spec = seq.spec;

  auto wrap = [](const std::string& ptr, auto&& make) {
    try {
      return make();
    } catch (const ParseError&) {
      throw;
    } catch (const InvalidInput& e) {
      throw ParseError(field_error(ptr, e.what()));
    }
  };

  if (spec.is_array()) {
    if (spec.empty()) throw ParseError(field_error("", "empty matrix sequence"));
    for (Index k = 0; k < spec.size(); ++k) {
      const std::string ptr = "/" + std::to_string(k);
      Matrix m = matrix_from_json(spec[k], ptr);
      if (!seq.matrices.empty() && m.rows() != seq.matrices.front().dim())
        throw ParseError(field_error(ptr, "dimension differs from the first matrix"));
      seq.matrices.push_back(wrap(ptr, [&] { return StochasticMatrix(std::move(m)); }));
    }
    return seq;
  }
  if (!spec.is_object() || !spec.contains("family") || !spec.at("family").is_string())
    throw ParseError(field_error("/family", "expected an array of matrices or a generator "
                                            "object with a string 'family'"));
  const std::string family = spec.at("family").get<std::string>();
  constexpr Index kMaxCount = 10'000'000;
  if (family == "Mr") {
    std::vector<double> r;
    if (spec.contains("r")) {
      r = vector_at(spec, "r");
      if (r.empty()) throw ParseError(field_error("/r", "empty"));
    } else {
      r = mr_geometric_schedule(get_count(spec, "count", 0, kMaxCount));
    }
    for (Index k = 0; k < r.size(); ++k)
      seq.matrices.push_back(wrap("/r/" + std::to_string(k), [&] { return mr_matrix(r[k]); }));
  } else if (family == "T0T1") {
    seq.matrices = t0t1_alternating(get_count(spec, "count", 0, kMaxCount));
  } else if (family == "birkhoff" || family == "reversible") {
    const Index d = get_count(spec, "dim", 0, 1000);
    const Index count = get_count(spec, "count", 0, kMaxCount);
    const double gamma = get_unit(spec, "gamma", 0.2);
    std::mt19937_64 rng(get_seed(spec, default_seed));
    if (family == "birkhoff") {
      const Index perms = get_count(spec, "permutations", d, 100'000);
      for (Index k = 0; k < count; ++k) seq.matrices.push_back(random_birkhoff(d, perms, gamma, rng));
    } else {
      const double density = get_unit(spec, "density", 0.6);
      for (Index k = 0; k < count; ++k)
        seq.matrices.push_back(random_reversible(d, gamma, rng, density));
    }
  } else {
    throw ParseError(field_error("/family", "unknown family '" + family +
                                                "' (expected Mr, T0T1, birkhoff or reversible)"));
  }
  return seq;
}

MatrixSequence load_sequence(const std::filesystem::path& path, std::uint64_t default_seed) {
  const std::string text = read_text_file(path);
  try {
    return parse_sequence(text, default_seed);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

std::string serialize_sequence(const MatrixSequence& seq) { return seq.spec.dump(2) + "\n"; }

std::uint64_t resolve_seed(std::optional<std::uint64_t> flag) {
  if (flag) return *flag;
  if (const char* env = std::getenv("BIPFIT_SEED"); env && *env) {
    const std::string_view s = trim(env);
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size())
      throw ParseError("BIPFIT_SEED='" + std::string(env) + "' is not a non-negative integer");
    return v;
  }
  return kDefaultSeed;
}

std::string_view version() { return BIPFIT_VERSION; }

json config_to_json(const AnalysisConfig& config) {
  return json{{"tol_marginal", config.rule.tol_marginal},
              {"tol_even_odd", config.rule.tol_even_odd},
              {"max_iters", config.rule.max_iters},
              {"window", config.rule.window},
              {"storage_cap", config.rule.storage_cap},
              {"max_enumerated_rows", config.max_enumerated_rows}};
}

json classification_report(const ProblemFile& input) {
  const FittingProblem problem = input.to_problem();
  const Classification cls = classify(problem);
  json r;
  r["tool"] = "bipfit";
  r["version"] = std::string(version());
  r["input"] = to_json(input);
  r["classification"] = std::string(to_string(cls.behavior));
  r["ill_conditioned"] = cls.ill_conditioned;
  r["certificate"] = cls.cause ? cause_to_json(*cls.cause, problem.a(), problem.b()) : json();
  if (cls.feasible_matrix) r["feasible_matrix"] = matrix_to_json(*cls.feasible_matrix);
  if (cls.maximal_support) r["maximal_support"] = pattern_to_json(*cls.maximal_support);
  return r;
}

json analysis_report(const ProblemFile& input, const AnalysisConfig& config) {
  config.rule.validate();
  const FittingProblem problem = input.to_problem();
  json r = classification_report(input);
  r["config"] = config_to_json(config);

  const BlockStructure blocks = block_structure(problem);
  r["blocks"] = blocks_to_json(blocks);

  const LimitPair limits = limit_points(problem, blocks);
  r["sigma"] = pattern_to_json(limits.sigma);
  r["limits"] = json{{"even", matrix_to_json(limits.even_limit.matrix())},
                     {"odd", matrix_to_json(limits.odd_limit.matrix())},
                     {"restarted_iterations", limits.iterations}};

  const IterationTrace trace = run(problem, config.rule);
  json stats{{"iterations", trace.iterations()},
             {"stop_reason", std::string(to_string(trace.stop_reason))},
             {"final_error", trace.errors.back()},
             {"errors_non_increasing", errors_non_increasing(trace)},
             {"nested_intervals_hold", nested_intervals_hold(trace)}};
  if (trace.last_even)
    stats["even_distance_to_limit"] = l1_distance(trace.last_even->matrix(),
                                                  limits.even_limit.matrix());
  if (trace.last_odd)
    stats["odd_distance_to_limit"] = l1_distance(trace.last_odd->matrix(),
                                                 limits.odd_limit.matrix());
  try {
    const RateReport rate = rate_estimate(trace);
    stats["rate"] = json{{"dominant_slope", rate.dominant_slope},
                         {"dominant_r_squared", rate.dominant_r_squared},
                         {"dominant_cell", {rate.dominant_row + 1, rate.dominant_col + 1}},
                         {"all_converged", rate.all_converged}};
  } catch (const PreconditionViolation&) {
    stats["rate"] = json();
  }
  r["iteration"] = stats;

  json causes = json::array();
  if (problem.rows() <= config.max_enumerated_rows) {
    for (const Cause& c : incompatibility_causes(problem.a(), problem.b(), problem.support())) {
      json cj = cause_to_json(c, problem.a(), problem.b());
      const auto adjusted = make_cause(c.rows, c.cols, blocks.a_prime, problem.b(),
                                       problem.support());
      cj["critical_under_adjusted"] = adjusted && adjusted->kind == CauseKind::Criticality;
      causes.push_back(cj);
    }
    r["causes"] = causes;
  } else {
    r["causes"] = json();
  }

  json notes = json::array();
  if (blocks.r > 1)
    notes.push_back("block I_1 is reported as found; no finer splitting is attempted");
  if (r["causes"].is_null())
    notes.push_back("cause enumeration skipped: more than " +
                    std::to_string(config.max_enumerated_rows) + " rows");
  r["notes"] = notes;
  return r;
}

void verify_report(const json& report) {
  if (!report.is_object() || !report.contains("input") || !report.contains("classification"))
    throw ParseError("report lacks input or classification");
  const ProblemFile input = parse_problem(report.at("input").dump());
  const FittingProblem problem = input.to_problem();
  const Marginals& a = problem.a();
  const Marginals& b = problem.b();
  const SupportPattern& supp = problem.support();
  const Index p = problem.rows(), q = problem.cols();

  const std::string behavior = report.at("classification").get<std::string>();
  const json& cert = report.value("certificate", json());
  if (behavior == "Divergence") {
    require(cert.is_object(), "divergent instance without a certificate");
    const Cause c = cause_from_json(cert, p, q, "/certificate");
    require(c.kind == CauseKind::Incompatibility, "certificate is not an incompatibility cause");
    verify_cause(c, a, b, supp);
  } else {
    require(behavior == "FastConvergence" || behavior == "SlowConvergence",
            "unknown classification " + behavior);
    require(cert.is_null(), "convergent instance carries a certificate");
    require(report.contains("feasible_matrix"), "convergent instance without a feasible matrix");
    const Matrix w = matrix_from_json(report.at("feasible_matrix"), "/feasible_matrix");
    require(w.rows() == p && w.cols() == q, "feasible matrix has the wrong shape");
    require(w.min_entry() >= 0.0, "feasible matrix has a negative entry");
    check_marginals_of(w, a.values(), b.values(), 1e-9, "feasible matrix");
    for (Index i = 0; i < p; ++i)
      for (Index j = 0; j < q; ++j)
        require(w(i, j) == 0.0 || supp(i, j), "feasible matrix leaves the seed support");
    if (report.contains("maximal_support")) {
      const SupportPattern s0 = pattern_from_json(report.at("maximal_support"), p, q,
                                                  "/maximal_support");
      require(s0.is_subset_of(supp), "maximal support leaves the seed support");
      require((s0 == supp) == (behavior == "FastConvergence"),
              "classification disagrees with the maximal support");
    }
  }

  if (!report.contains("blocks")) return;  // classification-only report

  const json& bj = report.at("blocks");
  const Index r = bj.at("r").get<Index>();
  const auto lambdas = bj.at("lambdas").get<std::vector<double>>();
  const auto a_prime = bj.at("a_prime").get<std::vector<double>>();
  const auto b_prime = bj.at("b_prime").get<std::vector<double>>();
  require(lambdas.size() == r && bj.at("row_blocks").size() == r &&
              bj.at("col_blocks").size() == r,
          "block count mismatch");
  require(a_prime.size() == p && b_prime.size() == q, "adjusted marginals have wrong length");
  require((r == 1) == (behavior != "Divergence"), "block count disagrees with classification");
  std::vector<int> row_seen(p, 0), col_seen(q, 0);
  for (Index k = 0; k < r; ++k) {
    if (k > 0) require(lambdas[k] > lambdas[k - 1], "lambdas are not strictly increasing");
    const IndexSet rows = indices_from_json(bj.at("row_blocks")[k], p, "/blocks/row_blocks");
    const IndexSet cols = indices_from_json(bj.at("col_blocks")[k], q, "/blocks/col_blocks");
    require(!rows.empty() && !cols.empty(), "empty block");
    const double lam = b.mass(cols) / a.mass(rows);
    require(std::abs(lam - lambdas[k]) <= 1e-12 * std::max(1.0, lam),
            "lambda_" + std::to_string(k + 1) + " is not b(J)/a(I)");
    for (Index i : rows) {
      ++row_seen[i];
      require(std::abs(a_prime[i] - lam * a[i]) <= 1e-12, "a' is not lambda * a");
    }
    for (Index j : cols) {
      ++col_seen[j];
      require(std::abs(b_prime[j] - b[j] / lam) <= 1e-12, "b' is not b / lambda");
    }
  }
  require(std::all_of(row_seen.begin(), row_seen.end(), [](int c) { return c == 1; }),
          "row blocks do not partition the rows");
  require(std::all_of(col_seen.begin(), col_seen.end(), [](int c) { return c == 1; }),
          "column blocks do not partition the columns");

  const SupportPattern sigma = pattern_from_json(report.at("sigma"), p, q, "/sigma");
  require(sigma.is_subset_of(supp), "Sigma leaves the seed support");
  const Matrix even = matrix_from_json(report.at("limits").at("even"), "/limits/even");
  const Matrix odd = matrix_from_json(report.at("limits").at("odd"), "/limits/odd");
  require(even.rows() == p && even.cols() == q && odd.rows() == p && odd.cols() == q,
          "limit shapes");
  check_marginals_of(even, a_prime, b.values(), 1e-9, "even limit");
  check_marginals_of(odd, a.values(), b_prime, 1e-9, "odd limit");
  require(SupportPattern::of(even) == sigma, "even limit support differs from Sigma");
  require(SupportPattern::of(odd) == sigma, "odd limit support differs from Sigma");

  const json& causes = report.value("causes", json());
  if (causes.is_array()) {
    const Marginals ap(a_prime);
    for (Index k = 0; k < causes.size(); ++k) {
      const std::string ptr = "/causes/" + std::to_string(k);
      const Cause c = cause_from_json(causes[k], p, q, ptr);
      verify_cause(c, a, b, supp);
      const auto adjusted = make_cause(c.rows, c.cols, ap, b, supp);
      const bool critical = adjusted && adjusted->kind == CauseKind::Criticality;
      require(causes[k].value("critical_under_adjusted", false) == critical,
              ptr + " criticality flag under (a', b) is wrong");
    }
  }
}

std::string describe_classification(const json& report) {
  std::ostringstream os;
  os.precision(12);
  os << report.at("classification").get<std::string>() << "\n";
  const json& cert = report.value("certificate", json());
  auto list = [](const json& idx) {
    std::string s = "{";
    for (Index k = 0; k < idx.size(); ++k) s += (k ? "," : "") + std::to_string(idx[k].get<Index>());
    return s + "}";
  };
  if (cert.is_object()) {
    os << "certificate: A = " << list(cert.at("rows")) << ", B = " << list(cert.at("cols"))
       << ", a(A) = " << cert.at("a_mass").get<double>()
       << " > b(B^c) = " << cert.at("b_complement_mass").get<double>() << "\n";
  } else if (report.contains("maximal_support")) {
    os << "certificate: feasible matrix with marginals (a, b) inside the seed support\n";
    os << "maximal support:\n";
    for (const auto& row : report.at("maximal_support")) {
      os << "  ";
      for (const auto& v : row) os << (v.get<int>() ? '*' : '.');
      os << "\n";
    }
  }
  if (report.value("ill_conditioned", false))
    os << "warning: certificate margin is within the ill-conditioning band\n";
  return os.str();
}

}  // namespace bipfit
