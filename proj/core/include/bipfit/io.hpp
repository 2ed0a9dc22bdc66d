#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "bipfit/errors.hpp"
#include "bipfit/ipfp_engine.hpp"
#include "bipfit/matrix_core.hpp"
#include "bipfit/stochastic_products.hpp"

namespace bipfit {

/// Malformed file or field. The message names the location: a line and
/// column for syntax errors, a JSON pointer such as /a/2 for bad values.
class ParseError : public InvalidInput {
 public:
  using InvalidInput::InvalidInput;
};

/// Parses "0.25", "-3e-2" or "1/4". Throws ParseError.
double parse_real(std::string_view text);

/// Comma or whitespace separated list of reals (each accepted by parse_real).
std::vector<double> parse_real_list(std::string_view text);

std::string read_text_file(const std::filesystem::path& path);

struct ProblemFile {
  std::string name;
  std::string description;
  std::vector<double> a;
  std::vector<double> b;
  Matrix x0;

  FittingProblem to_problem() const;
  static ProblemFile from_problem(const FittingProblem& problem, std::string name = {},
                                  std::string description = {});
  bool operator==(const ProblemFile&) const = default;
};

/// Fields: a, b (arrays of numbers or numeric strings), X0 (array of rows),
/// optional name and description. Validates shapes, positivity of a and b,
/// their unit sums, non-negativity of X0 and the absence of empty lines.
ProblemFile parse_problem(std::string_view json_text);
ProblemFile load_problem(const std::filesystem::path& path);
nlohmann::json to_json(const ProblemFile& file);
std::string serialize_problem(const ProblemFile& file);

/// One matrix row per line, entries separated by commas. Blank lines and
/// lines starting with '#' are skipped.
Matrix parse_csv_matrix(std::string_view text);

/// A matrix sequence read from a file. `spec` is the file content: either an
/// array of square 2-D arrays or a generator object
///   {"family": "Mr", "r": [...]}                 explicit r_n
///   {"family": "Mr", "count": N}                 r_n = exp(-2^-n)
///   {"family": "T0T1", "count": N}
///   {"family": "birkhoff", "dim": d, "count": N, "gamma": g,
///    "permutations": k, "seed": s}
///   {"family": "reversible", "dim": d, "count": N, "gamma": g, "seed": s}
/// For the random families the seed falls back to `default_seed`, and the
/// resolved seed is written back into spec.
struct MatrixSequence {
  nlohmann::json spec;
  std::vector<StochasticMatrix> matrices;
};

MatrixSequence parse_sequence(std::string_view json_text, std::uint64_t default_seed);
MatrixSequence load_sequence(const std::filesystem::path& path, std::uint64_t default_seed);
std::string serialize_sequence(const MatrixSequence& seq);

inline constexpr std::uint64_t kDefaultSeed = 20240611;

/// Precedence: explicit flag, then the BIPFIT_SEED environment variable,
/// then kDefaultSeed. Throws ParseError if BIPFIT_SEED is not an integer.
std::uint64_t resolve_seed(std::optional<std::uint64_t> flag = std::nullopt);

nlohmann::json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const nlohmann::json& j, const std::string& where);
nlohmann::json pattern_to_json(const SupportPattern& s);
/// 1-based index list.
nlohmann::json indices_to_json(const IndexSet& s);

struct AnalysisConfig {
  StoppingRule rule;
  /// Incompatibility causes are enumerated only up to this many rows.
  Index max_enumerated_rows = 20;
};

nlohmann::json config_to_json(const AnalysisConfig& config);

/// Library version string, embedded in every report.
std::string_view version();

/// Classification with its certificate: the incompatibility cause, or a
/// feasible matrix and the maximal support.
nlohmann::json classification_report(const ProblemFile& input);

/// Classification, certificate, block structure, Sigma, both limit points,
/// direct-run statistics and the list of incompatibility causes with a flag
/// telling which become criticality causes under (a', b). Row and column
/// indices in the report are 1-based.
nlohmann::json analysis_report(const ProblemFile& input, const AnalysisConfig& config = {});

/// Recomputes every checkable claim of a report from its embedded input:
/// certificates, marginals of the limits, Sigma as their support, the
/// lambda/a'/b' relations. Throws TheoremViolation (or ParseError for a
/// structurally broken report) on the first mismatch.
void verify_report(const nlohmann::json& report);

/// Short human summary of a classification (used by `classify`).
std::string describe_classification(const nlohmann::json& report);

}  // namespace bipfit
