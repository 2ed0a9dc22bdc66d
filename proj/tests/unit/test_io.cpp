#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <optional>
#include <string>

#include "bipfit/io.hpp"
#include "bipfit/ipfp_engine.hpp"
#include "bipfit/structure_analysis.hpp"
#include "test_util.hpp"

using namespace bipfit;
using nlohmann::json;

namespace {

const std::string kData = BIPFIT_DATA_DIR;

std::string error_of(auto&& f) {
  try {
    f();
  } catch (const ParseError& e) {
    return e.what();
  }
  return "";
}

/// Sets BIPFIT_SEED for one scope and restores the previous value.
class SeedEnv {
 public:
  explicit SeedEnv(const char* value) {
    if (const char* old = std::getenv("BIPFIT_SEED")) old_ = old;
    if (value)
      setenv("BIPFIT_SEED", value, 1);
    else
      unsetenv("BIPFIT_SEED");
  }
  ~SeedEnv() {
    if (old_)
      setenv("BIPFIT_SEED", old_->c_str(), 1);
    else
      unsetenv("BIPFIT_SEED");
  }

 private:
  std::optional<std::string> old_;
};

}  // namespace

TEST(ParseReal, DecimalsAndRatios) {
  EXPECT_EQ(parse_real("0.25"), 0.25);
  EXPECT_EQ(parse_real(" +2 "), 2.0);
  EXPECT_EQ(parse_real("1e-3"), 1e-3);
  EXPECT_DOUBLE_EQ(parse_real("1/3"), 1.0 / 3);
  EXPECT_DOUBLE_EQ(parse_real(" 2 / 3 "), 2.0 / 3);
  EXPECT_EQ(parse_real_list("1/2, 1/4,0.25"), (std::vector<double>{0.5, 0.25, 0.25}));
}

TEST(ParseReal, Rejects) {
  for (const char* bad : {"", "abc", "1/0", "1/", "/2", "inf", "nan", "1.5x"})
    EXPECT_THROW(parse_real(bad), ParseError) << bad;
}

TEST(ParseProblem, SyntaxErrorsCarryLineAndColumn) {
  const std::string text = "{\n  \"a\": [0.5, 0.5],\n  \"b\": [0.5 0.5]\n}";
  const std::string err = error_of([&] { parse_problem(text); });
  EXPECT_EQ(err.rfind("line 3, column ", 0), 0u) << err;
}

TEST(ParseProblem, FieldErrorsCarryPointerPath) {
  const auto err = [](const std::string& text) { return error_of([&] { parse_problem(text); }); };
  EXPECT_NE(err(R"({"a":[1.5,-0.5],"b":[0.5,0.5],"X0":[[1,1],[1,1]]})").find("field /a/1"),
            std::string::npos);
  EXPECT_NE(err(R"({"a":[0.5,0.6],"b":[0.5,0.5],"X0":[[1,1],[1,1]]})").find("field /a"),
            std::string::npos);
  EXPECT_NE(err(R"({"a":[0.5,0.5],"b":[0.5,0.5],"X0":[[1,1],[1,1]],"seed":1})")
                .find("field /seed: unknown field"),
            std::string::npos);
  EXPECT_NE(err(R"({"a":[0.5,0.5],"b":[0.5,0.5],"X0":[[1,1],[1,"x"]]})").find("field /X0/1/1"),
            std::string::npos);
  EXPECT_NE(err(R"({"a":[0.5,0.5],"b":[0.5,0.5],"X0":[[1,1],[0,0]]})").find("field /X0/1"),
            std::string::npos);
  EXPECT_NE(err(R"({"a":[0.5,0.5],"b":[0.5,0.5],"X0":[[1,1,1],[1,1,1]]})").find("field /X0"),
            std::string::npos);
  EXPECT_NE(err(R"({"a":[0.5,0.5],"b":[0.5,0.5]})").find("field /X0: missing"),
            std::string::npos);
  EXPECT_NE(err(R"([1,2])").find("expected a JSON object"), std::string::npos);
  EXPECT_NE(err(R"({"a":[0.5,0.5],"b":[0.5,0.5],"X0":[[1,-1],[1,1]]})").find("field /X0/0/1"),
            std::string::npos);
}

TEST(ParseProblem, RatiosAcceptedAsStrings) {
  const ProblemFile f = parse_problem(
      R"({"a":["1/3","2/3"],"b":["1/3","2/3"],"X0":[["1/3","1/3"],["1/3",0]]})");
  EXPECT_DOUBLE_EQ(f.a[0], 1.0 / 3);
  EXPECT_DOUBLE_EQ(f.x0(0, 1), 1.0 / 3);
}

TEST(ParseProblem, RoundTripsDataFiles) {
  for (const char* name : {"fast-2x2", "slow-2x2", "divergence-2x2", "example-5x6"}) {
    const ProblemFile f = load_problem(kData + "/" + name + ".json");
    EXPECT_EQ(parse_problem(serialize_problem(f)), f) << name;
  }
}

TEST(ParseProblem, MissingFileIsParseError) {
  EXPECT_THROW(load_problem(kData + "/no-such-file.json"), ParseError);
}

TEST(ParseCsv, Basic) {
  const Matrix m = parse_csv_matrix("# seed\n1, 2\n\n3,4\n");
  EXPECT_EQ(m, (Matrix{{1, 2}, {3, 4}}));
  EXPECT_EQ(parse_csv_matrix("1/2,1/4\r\n0,1\r\n"), (Matrix{{0.5, 0.25}, {0, 1}}));
}

TEST(ParseCsv, ErrorsCarryPosition) {
  const std::string bad = error_of([] { parse_csv_matrix("1,2\n3,x\n"); });
  EXPECT_EQ(bad.rfind("line 2, column ", 0), 0u) << bad;
  const std::string ragged = error_of([] { parse_csv_matrix("1,2\n3\n"); });
  EXPECT_EQ(ragged.rfind("line 2", 0), 0u) << ragged;
  EXPECT_THROW(parse_csv_matrix("# nothing\n"), ParseError);
}

TEST(Sequences, ExplicitArray) {
  const MatrixSequence s = parse_sequence("[[[1,0],[0,1]], [[0.5,0.5],[0.5,0.5]]]", 1);
  ASSERT_EQ(s.matrices.size(), 2u);
  EXPECT_EQ(s.matrices[1].matrix(), (Matrix{{0.5, 0.5}, {0.5, 0.5}}));
  EXPECT_THROW(parse_sequence("[[[1,0],[0,1]], [[1]]]", 1), ParseError);
  EXPECT_THROW(parse_sequence("[[[1,0],[0,0.9]]]", 1), ParseError);
  EXPECT_THROW(parse_sequence("[]", 1), ParseError);
}

TEST(Sequences, Families) {
  const MatrixSequence mr = parse_sequence(R"({"family":"Mr","count":5})", 1);
  ASSERT_EQ(mr.matrices.size(), 5u);
  EXPECT_NEAR(mr.matrices[0](0, 0), (1 + std::exp(-0.5)) / 2, 1e-15);
  const MatrixSequence mr2 = parse_sequence(R"({"family":"Mr","r":[0.5, "1/3"]})", 1);
  EXPECT_NEAR(mr2.matrices[1](0, 1), 1.0 / 3, 1e-15);
  const MatrixSequence t = parse_sequence(R"({"family":"T0T1","count":4})", 1);
  EXPECT_EQ(t.matrices[0].matrix(), t1_matrix().matrix());
  EXPECT_EQ(t.matrices[1].matrix(), t0_matrix().matrix());
  EXPECT_THROW(parse_sequence(R"({"family":"nope","count":4})", 1), ParseError);
  EXPECT_THROW(parse_sequence(R"({"family":"birkhoff","count":4,"gamma":2})", 1), ParseError);
}

TEST(Sequences, SeedIsResolvedAndRecorded) {
  const std::string spec = R"({"family":"birkhoff","dim":3,"count":4,"gamma":0.2})";
  const MatrixSequence a = parse_sequence(spec, 99);
  const MatrixSequence b = parse_sequence(spec, 99);
  const MatrixSequence c = parse_sequence(spec, 100);
  EXPECT_EQ(a.spec.at("seed"), 99);
  EXPECT_EQ(a.matrices.back().matrix(), b.matrices.back().matrix());
  EXPECT_NE(a.matrices.back().matrix(), c.matrices.back().matrix());
  // An explicit seed in the sequence file wins over the default.
  const MatrixSequence d = parse_sequence(
      R"({"family":"reversible","dim":3,"count":4,"gamma":0.2,"seed":99})", 5);
  EXPECT_EQ(d.spec.at("seed"), 99);
  // Serializing and re-reading reproduces the matrices.
  const MatrixSequence e = parse_sequence(serialize_sequence(a), 12345);
  EXPECT_EQ(e.matrices.back().matrix(), a.matrices.back().matrix());
}

TEST(Seed, Precedence) {
  {
    SeedEnv env(nullptr);
    EXPECT_EQ(resolve_seed(), kDefaultSeed);
    EXPECT_EQ(resolve_seed(7), 7u);
  }
  {
    SeedEnv env("42");
    EXPECT_EQ(resolve_seed(), 42u);
    EXPECT_EQ(resolve_seed(7), 7u);
  }
  {
    SeedEnv env("forty-two");
    EXPECT_THROW(resolve_seed(), ParseError);
  }
}

TEST(Reports, ClassificationOfDataFiles) {
  const std::pair<const char*, const char*> cases[] = {{"fast-2x2", "FastConvergence"},
                                                       {"slow-2x2", "SlowConvergence"},
                                                       {"divergence-2x2", "Divergence"},
                                                       {"example-5x6", "Divergence"}};
  for (const auto& [name, expected] : cases) {
    const json r = classification_report(load_problem(kData + "/" + name + ".json"));
    EXPECT_EQ(r.at("classification"), expected) << name;
    EXPECT_NO_THROW(verify_report(r)) << name;
  }
}

TEST(Reports, AnalysisOf5x6VerifiesAndDetectsTampering) {
  const json r = analysis_report(load_problem(kData + "/example-5x6.json"));
  ASSERT_NO_THROW(verify_report(r));
  EXPECT_EQ(r.at("blocks").at("r"), 3);
  const auto lambdas = r.at("blocks").at("lambdas").get<std::vector<double>>();
  ASSERT_EQ(lambdas.size(), 3u);
  EXPECT_NEAR(lambdas[0], 0.4, 1e-12);
  EXPECT_NEAR(lambdas[1], 0.8, 1e-12);
  EXPECT_NEAR(lambdas[2], 2.4, 1e-12);

  json bad_lambda = r;
  bad_lambda["blocks"]["lambdas"][1] = 0.81;
  EXPECT_THROW(verify_report(bad_lambda), TheoremViolation);

  json bad_limit = r;
  const double v = bad_limit["limits"]["even"][0][0].get<double>();
  bad_limit["limits"]["even"][0][0] = v + 1e-3;
  EXPECT_THROW(verify_report(bad_limit), TheoremViolation);

  json bad_cert = r;
  bad_cert["certificate"]["rows"] = json::array({1});
  EXPECT_THROW(verify_report(bad_cert), TheoremViolation);

  json bad_class = r;
  bad_class["classification"] = "SlowConvergence";
  EXPECT_THROW(verify_report(bad_class), TheoremViolation);

  EXPECT_THROW(verify_report(json::object()), ParseError);
}

TEST(Reports, ReducedProblemReproducesEvenLimit) {
  const ProblemFile file = load_problem(kData + "/example-5x6.json");
  const FittingProblem problem = file.to_problem();
  const BlockStructure blocks = block_structure(problem);
  const SupportPattern sigma = maximal_support(blocks.a_prime, problem.b(), problem.support());
  const ProblemFile reduced =
      parse_problem(serialize_problem(ProblemFile::from_problem(reduced_problem(problem, blocks, sigma))));

  StoppingRule rule;
  rule.tol_marginal = 1e-14;
  const IterationTrace t = run(reduced.to_problem(), rule);
  EXPECT_NE(t.stop_reason, StopReason::IterationCap);
  EXPECT_LT(t.errors.back(), 1e-12);
  EXPECT_LT(t.iterations(), 2000u);
  const LimitPair limits = limit_points(problem, blocks);
  EXPECT_LE(max_abs_diff(t.final_iterate.matrix(), limits.even_limit.matrix()), 1e-8);
  const RateReport rate = rate_estimate(t);
  EXPECT_LT(rate.dominant_slope, 0.0);
  EXPECT_GT(rate.dominant_r_squared, 0.99);
}
