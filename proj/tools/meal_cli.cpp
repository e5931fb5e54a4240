#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <Eigen/SVD>

#include "meal/diagnostics.hpp"
#include "meal/errors.hpp"
#include "meal/experiments.hpp"
#include "meal/io.hpp"

namespace fs = std::filesystem;
using namespace meal;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitNotConverged = 3;

fs::path default_output_dir() {
  if (const char* env = std::getenv("MEAL_OUTPUT_DIR"); env && *env) return env;
  return "runs";
}

const std::map<std::string, Algorithm> kAlgorithms{
    {"meal", Algorithm::kMeal},   {"imeal", Algorithm::kImeal},
    {"limeal", Algorithm::kLimeal}, {"alm", Algorithm::kAlm},
    {"prox-ialm", Algorithm::kProxIalm}};

const std::map<std::string, SubproblemPath> kPaths{
    {"direct", SubproblemPath::kDirectQP},
    {"inner", SubproblemPath::kInnerProxGradient},
    {"projected", SubproblemPath::kProjectedFastPath}};

struct SolveOptions {
  std::string input;
  std::string algorithm = "meal";
  double beta = 1.0;
  double gamma = 0.5;
  double eta = 1.0;
  std::optional<int> horizon;
  std::optional<double> alpha_target;
  std::string regime = "a";
  double epsilon0 = 1e-2;
  double epsilon_power = 1.0;
  int max_iters = 2000;
  double stat_tol = 1e-6;
  double feas_tol = 1e-6;
  std::string path = "inner";
  std::optional<double> prox_p;
  std::optional<double> prox_s;
  std::optional<double> alpha_dual;
  std::string output;
};

CapVariant variant_for(Algorithm algo, const std::string& letter) {
  const bool a = letter == "a";
  switch (algo) {
    case Algorithm::kImeal: return a ? CapVariant::kImealA : CapVariant::kImealB;
    case Algorithm::kLimeal: return a ? CapVariant::kLimealA : CapVariant::kLimealB;
    default: return a ? CapVariant::kMealA : CapVariant::kMealB;
  }
}

int print_trace_summary(const Trace& trace, const fs::path& csv) {
  const auto& last = trace.rows.back();
  std::cout << to_string(trace.algorithm) << ": " << to_string(trace.status) << " after "
            << trace.rows.size() << " iterations\n"
            << "  objective    " << format_double(last.objective) << "\n"
            << "  feasibility  " << format_double(last.feasibility) << "\n"
            << "  stationarity " << format_double(last.stationarity) << "\n"
            << "  beta         " << format_double(trace.beta) << "\n"
            << "  trace        " << csv.string() << "\n";
  std::size_t violations = 0;
  for (const auto& m : trace.monitors) violations += (!m.dual_ok) + (!m.progress_ok);
  if (!trace.monitors.empty()) std::cout << "  monitor violations " << violations << "\n";
  return trace.status == TerminalStatus::kConverged ? kExitOk : kExitNotConverged;
}

int run_solve(const SolveOptions& o) {
  const Problem problem = load_problem(o.input);
  SolverConfig config;
  config.algorithm = kAlgorithms.at(o.algorithm);
  config.subproblem.path = kPaths.at(o.path);
  config.stop = StopCriteria{o.max_iters, o.stat_tol, o.feas_tol};
  config.monitors = MonitorFlags{true, true};
  if (config.algorithm == Algorithm::kImeal) {
    config.epsilon = EpsilonSchedule{o.epsilon0, o.epsilon_power};
  }
  PenaltyPlan plan{FixedPenalty{o.beta}, o.gamma, o.eta};
  if (o.horizon) {
    if (!o.alpha_target) {
      throw CLI::ValidationError("--horizon", "requires --alpha-target");
    }
    plan.mode = HorizonPenalty{*o.horizon, *o.alpha_target};
  } else if (o.alpha_target) {
    const double cap = alpha_cap(problem, plan, variant_for(config.algorithm, o.regime));
    double target = *o.alpha_target;
    if (target > cap) {
      std::cerr << "note: --alpha-target " << target << " exceeds the admissible cap "
                << cap << "; using the cap\n";
      target = cap;
    }
    const double c = problem.A().isZero()
                         ? 0.0
                         : plan.gamma * plan.gamma *
                               smallest_positive_eigenvalue(problem.A().transpose() * problem.A());
    if (c <= 0.0) throw Error(ErrorCode::kAllZeroMatrix, "A has no positive singular value");
    plan.mode = FixedPenalty{beta_for_target_alpha(target, plan.gamma, plan.eta, c)};
  }
  config.plan = plan;
  if (config.algorithm == Algorithm::kProxIalm) {
    const auto q = problem.quadratic_objective();
    double q_norm = 0.0;
    if (q) q_norm = Eigen::JacobiSVD<Matrix>(q->Q).singularValues()(0);
    const double a_norm = Eigen::JacobiSVD<Matrix>(problem.A()).singularValues()(0);
    const double p = o.prox_p.value_or(std::max(2.0 * q_norm, 1e-12));
    const double s =
        o.prox_s.value_or(1.0 / (2.0 * (q_norm + p + o.beta * a_norm * a_norm)));
    config.prox_ialm = ProxIalmParams{p, s, o.alpha_dual.value_or(o.beta)};
  }
  const Trace trace = run(problem, config);
  const fs::path csv = o.output.empty()
                           ? default_output_dir() / "solve" / (o.algorithm + ".csv")
                           : fs::path(o.output);
  save_trace(trace, csv);
  return print_trace_summary(trace, csv);
}

int run_bundle(const ExperimentSpec& spec, const fs::path& out_dir,
               std::optional<SubproblemPath> path) {
  ExperimentSpec s = spec;
  if (path) {
    s.grid = default_grid(s.id, s.id == ExperimentId::kExp1 ? build_exp1()
                                                            : build_exp2(s.seed, s.m, s.n));
    for (auto& entry : s.grid) {
      if (entry.config.algorithm == Algorithm::kLimeal) entry.config.subproblem.path = *path;
    }
  }
  const ExperimentBundle bundle = run_experiment(s);
  const fs::path dir = out_dir / to_string(s.id);
  write_bundle(bundle, dir);
  std::cout << summary_csv(bundle);
  std::cout << "wrote " << dir.string() << "\n";
  for (const auto& run : bundle.runs) {
    if (!run.error.empty()) return kExitNotConverged;
  }
  return kExitOk;
}

int run_check() {
  bool all = true;
  for (const auto& r : certification_suite()) {
    std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << "  " << r.detail << "\n";
    all = all && r.passed;
  }
  return all ? kExitOk : kExitNotConverged;
}

struct ProxTableOptions {
  std::string kind = "scad";
  double lambda = 1.0;
  double a = 3.7;
  double weight = 1.0;
  double lower = -1.0;
  double upper = 1.0;
  double gamma = 0.5;
  double from = -5.0;
  double to = 5.0;
  double step = 0.5;
};

int run_prox_table(const ProxTableOptions& o) {
  ProxFunction g = ProxFunction::zero();
  if (o.kind == "scad") {
    g = ProxFunction::scad(o.lambda, o.a);
  } else if (o.kind == "mcp") {
    g = ProxFunction::mcp(o.lambda, o.a);
  } else if (o.kind == "l1") {
    g = ProxFunction::l1(o.weight);
  } else if (o.kind == "box") {
    g = ProxFunction::box(Vector::Constant(1, o.lower), Vector::Constant(1, o.upper));
  }
  std::cout << "v,prox,envelope,gradient\n";
  const auto count = static_cast<long>(std::floor((o.to - o.from) / o.step + 1e-9));
  for (long i = 0; i <= count; ++i) {
    const double v = o.from + static_cast<double>(i) * o.step;
    const auto mr = moreau_value_grad(g, o.gamma, Vector::Constant(1, v));
    std::cout << format_double(v) << ',' << format_double(mr.prox_point(0)) << ','
              << format_double(mr.value) << ',' << format_double(mr.gradient(0)) << '\n';
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Moreau envelope augmented Lagrangian solvers"};
  app.require_subcommand(1);
  std::string out_dir = default_output_dir().string();

  SolveOptions so;
  auto* solve = app.add_subcommand("solve", "Solve a problem file");
  solve->add_option("-i,--input", so.input, "Problem JSON file")->required()->check(CLI::ExistingFile);
  solve->add_option("-a,--algorithm", so.algorithm)->check(CLI::IsMember(kAlgorithms));
  solve->add_option("--beta", so.beta, "Fixed penalty")->check(CLI::PositiveNumber);
  solve->add_option("--gamma", so.gamma, "Proximal parameter")->check(CLI::PositiveNumber);
  solve->add_option("--eta", so.eta, "Relaxation in (0,2)")->check(CLI::Range(0.0, 2.0));
  solve->add_option("--horizon", so.horizon, "Horizon K")->check(CLI::PositiveNumber);
  solve->add_option("--alpha-target", so.alpha_target, "Target alpha; derives beta")
      ->check(CLI::PositiveNumber);
  solve->add_option("--regime", so.regime, "Convergence regime for the alpha cap")
      ->check(CLI::IsMember({"a", "b"}));
  solve->add_option("--epsilon0", so.epsilon0)->check(CLI::NonNegativeNumber);
  solve->add_option("--epsilon-power", so.epsilon_power)->check(CLI::NonNegativeNumber);
  solve->add_option("--max-iters", so.max_iters)->check(CLI::PositiveNumber);
  solve->add_option("--stat-tol", so.stat_tol)->check(CLI::PositiveNumber);
  solve->add_option("--feas-tol", so.feas_tol)->check(CLI::PositiveNumber);
  solve->add_option("--subproblem-path", so.path)->check(CLI::IsMember(kPaths));
  solve->add_option("--prox-p", so.prox_p)->check(CLI::PositiveNumber);
  solve->add_option("--prox-s", so.prox_s)->check(CLI::PositiveNumber);
  solve->add_option("--alpha-dual", so.alpha_dual)->check(CLI::PositiveNumber);
  solve->add_option("-o,--output", so.output, "Trace CSV path");

  ExperimentSpec e1;
  e1.id = ExperimentId::kExp1;
  auto* exp1 = app.add_subcommand("exp1", "ALM vs LiMEAL on the 2-D nonconvex QP");
  exp1->add_option("--output-dir", out_dir);

  ExperimentSpec e2;
  e2.id = ExperimentId::kExp2;
  std::string exp2_path;
  auto* exp2 = app.add_subcommand("exp2", "LiMEAL vs Prox-iALM on a random box QP");
  exp2->add_option("--seed", e2.seed);
  exp2->add_option("--m", e2.m)->check(CLI::PositiveNumber);
  exp2->add_option("--n", e2.n)->check(CLI::PositiveNumber);
  exp2->add_option("--subproblem-path", exp2_path, "LiMEAL subproblem path")
      ->check(CLI::IsMember(kPaths));
  exp2->add_option("--output-dir", out_dir);

  auto* check = app.add_subcommand("check", "Run the oracle certification suite");

  ProxTableOptions pt;
  auto* table = app.add_subcommand("prox-table", "Tabulate a scalar proximal map");
  table->add_option("--kind", pt.kind)->check(CLI::IsMember({"zero", "l1", "scad", "mcp", "box"}));
  table->add_option("--lambda", pt.lambda)->check(CLI::PositiveNumber);
  table->add_option("--a", pt.a)->check(CLI::PositiveNumber);
  table->add_option("--weight", pt.weight)->check(CLI::NonNegativeNumber);
  table->add_option("--lower", pt.lower);
  table->add_option("--upper", pt.upper);
  table->add_option("--gamma", pt.gamma)->check(CLI::PositiveNumber);
  table->add_option("--from", pt.from);
  table->add_option("--to", pt.to);
  table->add_option("--step", pt.step)->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*solve) {
      if (so.eta <= 0.0 || so.eta >= 2.0) {
        throw CLI::ValidationError("--eta", "must lie strictly inside (0, 2)");
      }
      return run_solve(so);
    }
    if (*exp1) return run_bundle(e1, out_dir, std::nullopt);
    if (*exp2) {
      std::optional<SubproblemPath> path;
      if (!exp2_path.empty()) path = kPaths.at(exp2_path);
      return run_bundle(e2, out_dir, path);
    }
    if (*check) return run_check();
    if (*table) return run_prox_table(pt);
  } catch (const CLI::Error& e) {
    std::cerr << "error: " << e.what() << "\n" << app.help();
    return kExitUsage;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
