#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "meal/errors.hpp"
#include "meal/experiments.hpp"
#include "meal/io.hpp"

using namespace meal;

namespace {

Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v(i++) = x;
  return v;
}

std::string schema_message(const std::string& text) {
  try {
    parse_problem(text);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kSchemaError);
    return e.what();
  }
  FAIL("expected a schema error");
  return {};
}

}  // namespace

TEST_CASE("shortest round-trip formatting") {
  CHECK(format_double(0.1) == "0.1");
  CHECK(format_double(1e-300) == "1e-300");
  CHECK(format_double(26.0) == "26");
  CHECK(format_double(std::nan("")) == "nan");
  CHECK(format_double(-kInf) == "-inf");
  for (double v : {1.0 / 3.0, 2.0 / 7.0, 123456.789e-20, -0.0001}) {
    CHECK(std::stod(format_double(v)) == v);
  }
}

TEST_CASE("trace CSV layout") {
  Trace t;
  TraceRow row;
  row.k = 0;
  row.objective = 1.5;
  row.lyapunov = std::nan("");
  t.rows.push_back(row);
  const std::string csv = trace_to_csv(t);
  CHECK(csv == "k,objective,feasibility,stationarity,lyapunov,lambda_norm,xz_gap,wall_time\n"
               "0,1.5,0,0,nan,0,0,0\n");
}

TEST_CASE("problem round trip for every kind") {
  const LinearConstraint c(Matrix::Ones(1, 2), vec({1}));
  Matrix Q(2, 2);
  Q << 1, 0.5, 0.5, -1;
  std::vector<QuadraticPiece> pieces{
      {QuadraticForm{Matrix::Identity(2, 2), Vector::Zero(2), 0.0},
       BoxIndicator{vec({-kInf, -1}), vec({kInf, 1})}}};
  const std::vector<Problem> problems{
      Problem(c, ProxFunction::zero()),
      Problem(c, ProxFunction::quadratic(Q, vec({1, 2}), 3.0)),
      Problem(c, ProxFunction::box(vec({-1, -kInf}), vec({1, kInf}))),
      Problem(c, ProxFunction::l1(0.3).with_implicit_class(BoundedSubgradient{0.3})),
      Problem(c, ProxFunction::scad(1.0, 3.7)),
      Problem(c, ProxFunction::mcp(1.0, 3.0).with_weak_convexity(0.5)),
      Problem(c, ProxFunction::pointwise_min(pieces)),
      Problem(c, SmoothFunction::quadratic(Q, vec({0, 1})), ProxFunction::l1(1.0))
          .with_objective_class(LipschitzSubgradient{7.0}),
  };
  for (const auto& p : problems) {
    const std::string text = serialize_problem(p);
    const Problem q = parse_problem(text);
    CHECK(serialize_problem(q) == text);
    CHECK(q.prox_part().weak_convexity() == p.prox_part().weak_convexity());
    CHECK(q.objective_lipschitz() == p.objective_lipschitz());
  }
}

TEST_CASE("Exp1 round trip behaves identically") {
  const Problem p = build_exp1();
  const auto dir = std::filesystem::temp_directory_path() / "meal_io_test";
  save_problem(p, dir / "exp1.json");
  const Problem q = load_problem(dir / "exp1.json");
  SolverConfig config;
  config.plan = PenaltyPlan{FixedPenalty{5.0}, 0.25, 1.0};
  config.subproblem.path = SubproblemPath::kDirectQP;
  config.stop = StopCriteria{9, 1e-300, 1e-300};
  const Trace a = run(p, config, exp1_initial_state());
  const Trace b = run(q, config, exp1_initial_state());
  REQUIRE(a.rows.size() == 10);
  CHECK((a.final_state.x - b.final_state.x).norm() == 0.0);
  CHECK((a.final_state.lambda - b.final_state.lambda).norm() == 0.0);
  std::filesystem::remove_all(dir);
}

TEST_CASE("schema errors carry context") {
  const std::string good = serialize_problem(build_exp1());
  const std::string truncated = good.substr(0, good.size() / 2);
  CHECK(schema_message(truncated).find("line") != std::string::npos);
  CHECK(schema_message(R"({"A": [[1]], "objective": {"prox": {"kind": "zero"}}})")
            .find("$.b") != std::string::npos);
  CHECK(schema_message(R"({"A": [[1]], "b": [0], "objective": {"prox": {"kind": "bogus"}}})")
            .find("$.objective.prox.kind") != std::string::npos);
  CHECK(schema_message(R"({"A": [[1, 2], [3]], "b": [0, 0], "objective": {"prox": {"kind": "zero"}}})")
            .find("$.A[1]") != std::string::npos);
  CHECK(schema_message(R"({"A": [[1]], "b": [0, 1], "objective": {"prox": {"kind": "zero"}}})")
            .find("one entry per row") != std::string::npos);
  CHECK(schema_message(R"({"A": [[1]], "b": [0], "objective": {"prox": {"kind": "l1", "weight": "x"}}})")
            .find("weight") != std::string::npos);
}

TEST_CASE("infinite bounds are written as strings") {
  const std::string text = serialize_problem(build_exp1());
  CHECK(text.find("\"inf\"") != std::string::npos);
  CHECK(text.find("\"-inf\"") != std::string::npos);
}
