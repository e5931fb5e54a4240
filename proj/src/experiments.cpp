#include "meal/experiments.hpp"

#include <cmath>

#include <Eigen/SVD>

#include "meal/errors.hpp"
#include "meal/io.hpp"
#include "meal/rng.hpp"

namespace meal {

namespace {

constexpr double kExperimentBeta = 50.0;

StopCriteria experiment_stop() { return StopCriteria{2000, 1e-6, 1e-6}; }

std::string eta_label(double eta) { return "eta" + format_double(eta); }

}  // namespace

std::string to_string(ExperimentId id) {
  switch (id) {
    case ExperimentId::kExp1: return "exp1";
    case ExperimentId::kExp2: return "exp2";
    case ExperimentId::kCustom: return "custom";
  }
  return "unknown";
}

Problem build_exp1() {
  Matrix A(1, 2);
  A << 1.0, -1.0;
  const Matrix Q = Vector(Eigen::Vector2d(2.0, -2.0)).asDiagonal();
  return Problem(LinearConstraint(A, Vector::Zero(1)),
                 SmoothFunction::quadratic(Q, Vector::Zero(2)),
                 ProxFunction::box(Eigen::Vector2d(-1.0, -kInf), Eigen::Vector2d(1.0, kInf)));
}

IterateState exp1_initial_state() {
  const Vector x0 = Eigen::Vector2d(0.5, -0.5);
  return IterateState{x0, x0, Vector::Zero(1), 0};
}

Problem build_exp2(std::uint64_t seed, int m, int n) {
  if (m < 1 || n < 1 || m >= n) {
    throw Error(ErrorCode::kInvalidArgument, "build_exp2: need 1 <= m < n");
  }
  SplitMix64 rng(seed);
  Matrix G(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) G(i, j) = rng.uniform();
  const Matrix Q = 0.5 * (G + G.transpose());
  Vector r(n);
  for (int i = 0; i < n; ++i) r(i) = rng.uniform();
  Matrix A(m, n);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) A(i, j) = rng.uniform();
  Vector x_tilde(n);
  for (int i = 0; i < n; ++i) x_tilde(i) = rng.uniform();
  const Vector b = A * x_tilde;
  return Problem(LinearConstraint(A, b), SmoothFunction::quadratic(Q, r),
                 ProxFunction::box(Vector::Zero(n), Vector::Ones(n)));
}

Exp2Params exp2_params(const Problem& problem, double beta) {
  if (!problem.composite()) {
    throw Error(ErrorCode::kNotComposite, "exp2_params: needs a quadratic smooth part");
  }
  Exp2Params p{};
  p.q_norm = problem.smooth()->lipschitz();
  const Eigen::JacobiSVD<Matrix> svd(problem.A());
  const double a_norm = svd.singularValues()(0);
  p.a_norm_sq = a_norm * a_norm;
  p.gamma = 1.0 / (2.0 * p.q_norm);
  p.p = 2.0 * p.q_norm;
  p.s = 1.0 / (2.0 * (p.q_norm + p.p + beta * p.a_norm_sq));
  return p;
}

std::vector<RunSpec> default_grid(ExperimentId id, const Problem& problem) {
  std::vector<RunSpec> grid;
  const StopCriteria stop = experiment_stop();
  if (id == ExperimentId::kExp1) {
    SolverConfig alm;
    alm.algorithm = Algorithm::kAlm;
    alm.plan = PenaltyPlan{FixedPenalty{kExperimentBeta}, 0.5, 1.0};
    alm.stop = stop;
    grid.push_back({"alm_beta50", alm, exp1_initial_state()});
    for (double eta : {0.5, 1.0, 1.5}) {
      SolverConfig c;
      c.algorithm = Algorithm::kLimeal;
      c.plan = PenaltyPlan{FixedPenalty{kExperimentBeta}, 0.5, eta};
      c.subproblem.path = SubproblemPath::kDirectQP;
      c.stop = stop;
      grid.push_back({"limeal_" + eta_label(eta), c, exp1_initial_state()});
    }
  } else if (id == ExperimentId::kExp2) {
    const Exp2Params params = exp2_params(problem, kExperimentBeta);
    for (double eta : {0.5, 1.0, 1.5}) {
      SolverConfig c;
      c.algorithm = Algorithm::kLimeal;
      c.plan = PenaltyPlan{FixedPenalty{kExperimentBeta}, params.gamma, eta};
      c.subproblem.path = SubproblemPath::kDirectQP;
      c.stop = stop;
      grid.push_back({"limeal_" + eta_label(eta), c, std::nullopt});
    }
    for (double eta : {0.5, 1.0}) {
      SolverConfig c;
      c.algorithm = Algorithm::kProxIalm;
      c.plan = PenaltyPlan{FixedPenalty{kExperimentBeta}, params.gamma, eta};
      c.prox_ialm = ProxIalmParams{params.p, params.s, kExperimentBeta};
      c.stop = stop;
      grid.push_back({"prox-ialm_" + eta_label(eta), c, std::nullopt});
    }
  }
  return grid;
}

ExperimentBundle run_experiment(const ExperimentSpec& spec) {
  ExperimentBundle bundle;
  bundle.id = spec.id;
  std::optional<Problem> problem;
  switch (spec.id) {
    case ExperimentId::kExp1: problem = build_exp1(); break;
    case ExperimentId::kExp2: problem = build_exp2(spec.seed, spec.m, spec.n); break;
    case ExperimentId::kCustom:
      if (spec.grid.empty()) return bundle;
      if (!spec.problem) {
        throw Error(ErrorCode::kInvalidArgument, "custom experiment needs a problem");
      }
      problem = spec.problem;
      break;
  }
  const std::vector<RunSpec> grid =
      spec.grid.empty() ? default_grid(spec.id, *problem) : spec.grid;
  for (const auto& entry : grid) {
    RunResult result;
    result.label = entry.label;
    try {
      Trace trace = run(*problem, entry.config, entry.init);
      for (const auto& row : trace.rows) {
        if (row.stationarity <= entry.config.stop.stat_tol &&
            row.feasibility <= entry.config.stop.feas_tol) {
          result.iterations_to_tol = row.k;
          break;
        }
      }
      try {
        result.rate = rate_fit(trace, "stationarity", 5);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kInsufficientData) throw;
      }
      result.trace = std::move(trace);
    } catch (const Error& e) {
      result.error = e.what();
    }
    bundle.runs.push_back(std::move(result));
  }
  return bundle;
}

std::string summary_csv(const ExperimentBundle& bundle) {
  std::string out =
      "run,status,iterations,iterations_to_tol,final_objective,final_feasibility,"
      "final_stationarity,oscillating,rate_kind,rate_parameter,rate_r2,error\n";
  for (const auto& run : bundle.runs) {
    out += run.label + ",";
    if (run.trace) {
      const auto& t = *run.trace;
      const auto& last = t.rows.back();
      out += to_string(t.status) + "," + std::to_string(t.rows.size()) + ",";
      out += (run.iterations_to_tol ? std::to_string(*run.iterations_to_tol) : "") + ",";
      out += format_double(last.objective) + "," + format_double(last.feasibility) + "," +
             format_double(last.stationarity) + "," + (t.oscillating ? "true" : "false") + ",";
    } else {
      out += "Error,,,,,,,";
    }
    if (run.rate) {
      out += to_string(run.rate->kind) + "," + format_double(run.rate->parameter) + "," +
             format_double(run.rate->r2) + ",";
    } else {
      out += ",,,";
    }
    std::string err = run.error;
    for (char& ch : err) {
      if (ch == ',' || ch == '\n') ch = ';';
    }
    out += err + "\n";
  }
  return out;
}

void write_bundle(const ExperimentBundle& bundle, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const auto& run : bundle.runs) {
    if (run.trace) save_trace(*run.trace, dir / (run.label + ".csv"));
  }
  write_text(dir / "summary.csv", summary_csv(bundle));
}

}  // namespace meal
