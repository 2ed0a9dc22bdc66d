// bipfit: iterative proportional fitting with structural diagnosis.
//
// Exit codes: 0 ok, 1 usage, 2 malformed input or failed precondition,
// 3 theorem violation (a bug or an ill-conditioned instance).

#include <CLI11.hpp>

#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>

#include "bipfit/io.hpp"
#include "bipfit/structure_analysis.hpp"

namespace {

using namespace bipfit;
using nlohmann::json;

enum Exit { kOk = 0, kUsage = 1, kBadInput = 2, kViolation = 3 };

/// Option combinations CLI11 cannot express; reported like any usage error.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InputOptions {
  std::string path;
  std::string a_text;
  std::string b_text;
};

void add_input_options(CLI::App* cmd, InputOptions& in) {
  cmd->add_option("problem", in.path, "Problem file (.json, or .csv with --a/--b)")
      ->required();
  cmd->add_option("--a", in.a_text, "Row marginals for CSV input, e.g. \"1/2,1/2\"");
  cmd->add_option("--b", in.b_text, "Column marginals for CSV input");
}

ProblemFile load_input(const InputOptions& in) {
  const bool csv = in.path.size() >= 4 && in.path.substr(in.path.size() - 4) == ".csv";
  if (!csv) {
    if (!in.a_text.empty() || !in.b_text.empty())
      throw UsageError("--a/--b only apply to CSV input");
    return load_problem(in.path);
  }
  if (in.a_text.empty() || in.b_text.empty())
    throw UsageError(in.path + ": CSV input needs --a and --b");
  ProblemFile f;
  try {
    f.x0 = parse_csv_matrix(read_text_file(in.path));
  } catch (const ParseError& e) {
    throw ParseError(in.path + ": " + e.what());
  }
  f.a = parse_real_list(in.a_text);
  f.b = parse_real_list(in.b_text);
  // Route through the JSON validator so CSV gets the same diagnostics.
  return parse_problem(to_json(f).dump());
}

struct RuleOptions {
  double tol = StoppingRule{}.tol_marginal;
  double tol_even_odd = StoppingRule{}.tol_even_odd;
  Index max_iters = StoppingRule{}.max_iters;
};

void add_rule_options(CLI::App* cmd, RuleOptions& r) {
  cmd->add_option("--tol", r.tol, "Stop once e(X_n) falls below this")->capture_default_str();
  cmd->add_option("--tol-even-odd", r.tol_even_odd,
                  "Stop once ||X_{n+2} - X_n||_1 settles below this")
      ->capture_default_str();
  cmd->add_option("--max-iters", r.max_iters, "Iteration cap")->capture_default_str();
}

StoppingRule to_rule(const RuleOptions& r) {
  StoppingRule rule;
  rule.tol_marginal = r.tol;
  rule.tol_even_odd = r.tol_even_odd;
  rule.max_iters = r.max_iters;
  try {
    rule.validate();
  } catch (const std::exception& e) {
    throw ParseError(std::string("stopping rule: ") + e.what());
  }
  return rule;
}

void emit(const std::string& text, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(out_path);
  if (!out) throw ParseError(out_path + ": cannot write");
  out << text;
}

json real_or_inf(double v) {
  return std::isfinite(v) ? json(v) : json(v > 0 ? "Infinity" : "-Infinity");
}

int cmd_classify(const InputOptions& in, bool as_json) {
  const json report = classification_report(load_input(in));
  verify_report(report);
  std::cout << (as_json ? report.dump(2) + "\n" : describe_classification(report));
  return kOk;
}

int cmd_fit(const InputOptions& in, const RuleOptions& ro, const std::string& trace_out,
            const std::string& out) {
  const ProblemFile file = load_input(in);
  const FittingProblem problem = file.to_problem();
  const StoppingRule rule = to_rule(ro);
  const IterationTrace trace = run(problem, rule);

  AnalysisConfig cfg;
  cfg.rule = rule;
  json r{{"tool", "bipfit"},
         {"version", std::string(version())},
         {"config", config_to_json(cfg)},
         {"input", to_json(file)},
         {"iterations", trace.iterations()},
         {"stop_reason", std::string(to_string(trace.stop_reason))},
         {"final_error", trace.errors.back()}};
  if (trace.stop_reason == StopReason::Converged) {
    r["final"] = matrix_to_json(trace.final_iterate.matrix());
  } else {
    if (trace.last_even) r["even"] = matrix_to_json(trace.last_even->matrix());
    if (trace.last_odd) r["odd"] = matrix_to_json(trace.last_odd->matrix());
    r["even_index"] = trace.last_even_index;
    r["odd_index"] = trace.last_odd_index;
  }
  if (!trace_out.empty()) {
    json ratios = json::array();
    for (const auto& rv : trace.ratio_history) ratios.push_back(json{{"R", rv.r}, {"C", rv.c}});
    emit(json{{"errors", trace.errors}, {"ratios", ratios}}.dump() + "\n", trace_out);
    r["trace_file"] = trace_out;
  }
  emit(r.dump(2) + "\n", out);
  return kOk;
}

int cmd_analyze(const InputOptions& in, const RuleOptions& ro, const std::string& out) {
  AnalysisConfig cfg;
  cfg.rule = to_rule(ro);
  const json report = analysis_report(load_input(in), cfg);
  verify_report(report);
  emit(report.dump(2) + "\n", out);
  return kOk;
}

int cmd_reduce(const InputOptions& in, const std::string& out) {
  const ProblemFile file = load_input(in);
  const FittingProblem problem = file.to_problem();
  const BlockStructure blocks = block_structure(problem);
  const SupportPattern sigma = maximal_support(blocks.a_prime, problem.b(), problem.support());
  const FittingProblem reduced = reduced_problem(problem, blocks, sigma);
  const std::string name = file.name.empty() ? "reduced" : file.name + "-reduced";
  const ProblemFile result = ProblemFile::from_problem(
      reduced, name, "seed restricted to Sigma with marginals (a', b)");
  emit(serialize_problem(result), out);
  return kOk;
}

int cmd_products(const std::string& path, Index vectors, std::optional<std::uint64_t> seed_flag,
                 const std::string& out) {
  const std::uint64_t seed = resolve_seed(seed_flag);
  const MatrixSequence seq = load_sequence(path, seed);
  const Index d = seq.matrices.front().dim();

  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  std::vector<std::vector<double>> tracked(vectors, std::vector<double>(d));
  for (auto& v : tracked)
    for (double& x : v) x = unif(rng);

  const ProductTrace trace = product_run(seq.matrices, tracked);
  const AssumptionCheck& ac = trace.assumptions;

  // Contraction and dispersion bounds along the tracked orbits V_n = P_n V.
  double diam_min = std::numeric_limits<double>::infinity();
  double disp_min = std::numeric_limits<double>::infinity();
  double sorted_min = std::numeric_limits<double>::infinity();
  Index checks = 0;
  for (const auto& v0 : tracked) {
    std::vector<double> v = v0;
    for (const auto& m : seq.matrices) {
      const auto bounds = check_diameter_contraction(m.matrix(), v);
      diam_min = std::min({diam_min, bounds.min_slack, bounds.max_slack, bounds.diam_slack});
      if (ac.doubly_stochastic) {
        double g = 1.0;
        for (Index i = 0; i < d; ++i) g = std::min(g, m(i, i));
        disp_min = std::min(disp_min, check_dispersion_decrease(m, v, g));
        for (Index k = 1; k <= d; ++k)
          sorted_min = std::min(sorted_min, check_sorted_partial_sums(m, v, k));
      }
      v = m.matrix() * v;
      ++checks;
    }
  }

  json orbit_bounds{{"checks", checks},
              {"diameter_contraction_min_slack", real_or_inf(diam_min)}};
  if (ac.doubly_stochastic) {
    orbit_bounds["dispersion_decrease_min_slack"] = real_or_inf(disp_min);
    orbit_bounds["sorted_partial_sums_min_slack"] = real_or_inf(sorted_min);
    bool monotone = true;
    for (const auto& h : trace.dispersion_history)
      for (Index n = 1; n < h.size(); ++n)
        monotone = monotone && h[n] <= h[n - 1] + 1e-12 * std::max(1.0, h[n - 1]);
    orbit_bounds["dispersion_non_increasing"] = monotone;
  }

  const bool cauchy = tail_is_cauchy(trace);
  json r{{"tool", "bipfit"},
         {"version", std::string(version())},
         {"config", json{{"sequence", path}, {"seed", seed}, {"vectors", vectors}}},
         {"length", trace.length()},
         {"dim", d},
         {"assumptions", json{{"gamma", ac.gamma},
                              {"rho", real_or_inf(ac.rho)},
                              {"doubly_stochastic", ac.doubly_stochastic},
                              {"holds", ac.holds()}}},
         {"variation_sum", trace.variation_sum},
         {"tail_variation", trace.tail_variation()},
         {"cauchy_tail", cauchy},
         {"max_row_drift", trace.max_row_drift},
         {"final_product", matrix_to_json(trace.last())},
         {"orbit_bounds", orbit_bounds}};
  if (cauchy) {
    json pairs = json::array();
    for (const auto& pr : offdiag_convergence_report(trace, trace.last()))
      pairs.push_back(json{{"i", pr.i + 1},
                           {"j", pr.j + 1},
                           {"row_distance", pr.row_distance},
                           {"sum_ij", pr.sum_ij},
                           {"sum_ji", pr.sum_ji},
                           {"bounded", pr.bounded}});
    r["offdiag"] = pairs;
  }
  emit(r.dump(2) + "\n", out);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Iterative proportional fitting with structural diagnosis"};
  app.set_version_flag("--version", std::string(bipfit::version()));
  app.require_subcommand(1);

  InputOptions in;
  RuleOptions rule;
  std::string out_path, trace_out, seq_path;
  bool as_json = false;
  Index vectors = 3;
  std::optional<std::uint64_t> seed;

  auto* classify = app.add_subcommand("classify", "Fast/slow convergence or divergence, with certificate");
  add_input_options(classify, in);
  classify->add_flag("--json", as_json, "Print the classification report as JSON");

  auto* fit = app.add_subcommand("fit", "Run the iteration and write the final matrix or even/odd pair");
  add_input_options(fit, in);
  add_rule_options(fit, rule);
  fit->add_option("--trace-out", trace_out, "Write the error and ratio history here");
  fit->add_option("-o,--output", out_path, "Output file (default stdout)");

  auto* analyze = app.add_subcommand("analyze", "Full JSON report: blocks, Sigma, limit points, causes");
  add_input_options(analyze, in);
  add_rule_options(analyze, rule);
  analyze->add_option("-o,--output", out_path, "Output file (default stdout)");

  auto* reduce = app.add_subcommand("reduce", "Seed restricted to Sigma with marginals (a', b)");
  add_input_options(reduce, in);
  reduce->add_option("-o,--output", out_path, "Output file (default stdout)");

  auto* products = app.add_subcommand("products", "Check a stochastic matrix sequence");
  products->add_option("sequence", seq_path, "Matrix sequence file")->required();
  products->add_option("--vectors", vectors, "Number of random tracked vectors")
      ->capture_default_str();
  products->add_option("--seed", seed, "RNG seed (default: BIPFIT_SEED or built-in)");
  products->add_option("-o,--output", out_path, "Output file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*classify) return cmd_classify(in, as_json);
    if (*fit) return cmd_fit(in, rule, trace_out, out_path);
    if (*analyze) return cmd_analyze(in, rule, out_path);
    if (*reduce) return cmd_reduce(in, out_path);
    if (*products) return cmd_products(seq_path, vectors, seed, out_path);
  } catch (const UsageError& e) {
    std::cerr << e.what() << "\nRun with --help for more information.\n";
    return kUsage;
  } catch (const bipfit::TheoremViolation& e) {
    std::cerr << "theorem violation: " << e.what() << "\n";
    return kViolation;
  } catch (const bipfit::PreconditionViolation& e) {
    std::cerr << "precondition violated: " << e.what() << "\n";
    return kBadInput;
  } catch (const bipfit::InvalidInput& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return kBadInput;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kViolation;
  }
  return kUsage;
}
