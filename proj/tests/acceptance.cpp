// End-to-end acceptance checks; prints one PASS/FAIL line per criterion.
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include <Eigen/SVD>

#include "meal/diagnostics.hpp"
#include "meal/errors.hpp"
#include "meal/experiments.hpp"
#include "meal/io.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using namespace meal;
using meal::testing::box_qp;
using meal::testing::convex_qp;
using meal::testing::random_qp_data;

namespace {

struct Outcome {
  bool passed;
  std::string detail;
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

const RunResult& find_run(const ExperimentBundle& b, const std::string& label) {
  for (const auto& r : b.runs) {
    if (r.label == label) return r;
  }
  throw std::runtime_error("missing run " + label);
}

// ---------------------------------------------------------------------------

Outcome exp1_split() {
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentSpec spec;
  spec.id = ExperimentId::kExp1;
  const ExperimentBundle bundle = run_experiment(spec);
  const double elapsed = seconds_since(t0);

  std::ostringstream detail;
  bool ok = elapsed < 1.0;
  const auto& alm = find_run(bundle, "alm_beta50");
  const double feas500 = alm.trace && alm.trace->rows.size() > 500
                             ? alm.trace->rows[500].feasibility
                             : 0.0;
  ok = ok && alm.trace && alm.trace->oscillating && feas500 >= 1e-3;
  detail << "ALM oscillating=" << (alm.trace && alm.trace->oscillating)
         << " feas@500=" << fmt(feas500);
  for (const char* label : {"limeal_eta0.5", "limeal_eta1", "limeal_eta1.5"}) {
    const auto& r = find_run(bundle, label);
    int hit = -1;
    if (r.trace) {
      for (const auto& row : r.trace->rows) {
        if (std::abs(row.objective) <= 1e-6 && row.feasibility <= 1e-6) {
          hit = row.k;
          break;
        }
      }
    }
    ok = ok && hit >= 0 && hit <= 50;
    detail << "; " << label << " k=" << hit;
  }
  detail << "; " << fmt(elapsed) << " s";
  return {ok, detail.str()};
}

Outcome exp1_linear_rate() {
  const Problem p = build_exp1();
  std::ostringstream detail;
  bool ok = true;
  int fitted = 0;
  for (const auto& entry : default_grid(ExperimentId::kExp1, p)) {
    if (entry.config.algorithm != Algorithm::kLimeal) continue;
    SolverConfig config = entry.config;
    // Stop just above the rounding floor so the fit sees only the decay.
    config.stop.stat_tol = 1e-13;
    config.stop.feas_tol = 1e-13;
    const Trace trace = run(p, config, entry.init);
    detail << entry.label << ": ";
    try {
      const RateFit fit = rate_fit(trace, "stationarity", 5);
      ok = ok && fit.kind == RateKind::kLinear && fit.r2 >= 0.95;
      ++fitted;
      detail << to_string(fit.kind) << " tau=" << fmt(fit.parameter) << " r2=" << fmt(fit.r2);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kInsufficientData) throw;
      detail << "insufficient data (" << trace.rows.size() << " rows)";
    }
    detail << "; ";
  }
  return {ok && fitted > 0, detail.str()};
}

Outcome exp2_speed() {
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentSpec spec;
  spec.id = ExperimentId::kExp2;
  spec.seed = 42;
  const ExperimentBundle bundle = run_experiment(spec);
  const double elapsed = seconds_since(t0);
  auto iters = [&](const std::string& label) {
    const auto& r = find_run(bundle, label);
    return r.iterations_to_tol ? *r.iterations_to_tol : std::numeric_limits<int>::max();
  };
  auto show = [](int k) { return k == std::numeric_limits<int>::max() ? std::string(">2000") : std::to_string(k); };
  const int l05 = iters("limeal_eta0.5"), l1 = iters("limeal_eta1");
  const int p05 = iters("prox-ialm_eta0.5"), p1 = iters("prox-ialm_eta1");
  const bool ok = l05 < p05 && l1 < p1 && elapsed < 5.0;
  return {ok, "eta=0.5 LiMEAL " + show(l05) + " vs Prox-iALM " + show(p05) +
                  "; eta=1 LiMEAL " + show(l1) + " vs iALM " + show(p1) + "; " +
                  fmt(elapsed) + " s"};
}

// MEAL runs shared by the monitor and trend checks.
struct MealCase {
  std::string name;
  Problem problem;
  SolverConfig config;
  IterateState init;
};

std::vector<MealCase> meal_cases() {
  std::vector<MealCase> cases;
  auto make_config = [](const Problem& p, double gamma, double eta) {
    PenaltyPlan plan{FixedPenalty{1.0}, gamma, eta};
    const double cap = alpha_cap(p, plan, CapVariant::kMealA);
    const double c = gamma * gamma * smallest_positive_eigenvalue(p.A().transpose() * p.A());
    plan.mode = FixedPenalty{beta_for_target_alpha(cap, gamma, eta, c)};
    SolverConfig config;
    config.algorithm = Algorithm::kMeal;
    config.plan = plan;
    config.subproblem.path = SubproblemPath::kDirectQP;
    config.stop = StopCriteria{200, 1e-300, 1e-300};
    config.monitors = MonitorFlags{true, true};
    return config;
  };
  {
    // The box is inactive along this run, so f is differentiable with L_f = 2.
    const Problem p = build_exp1().with_objective_class(LipschitzSubgradient{2.0});
    cases.push_back({"exp1", p, make_config(p, 0.25, 1.0), exp1_initial_state()});
  }
  SplitMix64 rng(2024);
  const double etas[] = {0.5, 1.0, 1.5};
  for (int i = 0; i < 3; ++i) {
    const int n = 4 + i;
    const int m = 2;
    const Problem p = convex_qp(random_qp_data(rng, n, m));
    const double lf = *p.objective_lipschitz();
    IterateState init = zero_state(p);
    init.x = meal::testing::random_vector(rng, n, -2.0, 2.0);
    init.z = init.x;
    cases.push_back({"qp" + std::to_string(i + 1), p, make_config(p, 0.5 / lf, etas[i]), init});
  }
  return cases;
}

Outcome monitor_suite(bool progress) {
  std::ostringstream detail;
  bool ok = true;
  for (const auto& c : meal_cases()) {
    const Trace trace = run(c.problem, c.config, c.init);
    int checked = 0, violated = 0;
    double worst = kInf;
    double ratio = kInf;
    for (const auto& m : trace.monitors) {
      const bool is_checked = progress ? m.progress_checked : m.dual_checked;
      if (!is_checked) continue;
      ++checked;
      const double margin = progress ? m.progress_lhs - m.progress_rhs + kMonitorSlack
                                     : m.dual_rhs + kMonitorSlack - m.dual_lhs;
      worst = std::min(worst, margin);
      const double big = progress ? m.progress_lhs : m.dual_rhs;
      const double small = progress ? m.progress_rhs : m.dual_lhs;
      if (small > 1e-14) ratio = std::min(ratio, big / small);
      if (!(progress ? m.progress_ok : m.dual_ok)) ++violated;
    }
    bool interior = true;
    if (c.name == "exp1") {
      // Replay to confirm the box never binds.
      SolverConfig probe = c.config;
      IterateState s = c.init;
      const EnvelopeContext ctx = make_context(c.problem, probe);
      for (int k = 0; k < 200; ++k) {
        s = meal_step(ctx, s).next;
        interior = interior && std::abs(s.x(0)) < 1.0;
      }
    }
    // Runs that hit an exact fixed point stop early; every step taken is checked.
    ok = ok && checked + 1 == static_cast<int>(trace.rows.size()) && violated == 0 && interior;
    detail << c.name << " " << checked << " steps, " << violated << " violations, min margin " << fmt(worst) << ", min ratio " << fmt(ratio)
           << (interior ? "" : " (box active)") << "; ";
  }
  return {ok, detail.str()};
}

Outcome moreau_machinery() {
  SplitMix64 rng(99);
  struct Named {
    std::string name;
    ProxFunction g;
    Eigen::Index dim;
  };
  Matrix Qpsd(2, 2);
  Qpsd << 2.0, 0.5, 0.5, 1.0;
  Matrix Qind(2, 2);
  Qind << 1.0, 0.0, 0.0, -0.5;
  std::vector<QuadraticPiece> pieces{
      {QuadraticForm{Matrix::Identity(2, 2), Vector::Zero(2), 0.0},
       BoxIndicator{Vector::Constant(2, -kInf), Vector::Constant(2, kInf)}},
      {QuadraticForm{0.5 * Matrix::Identity(2, 2), Eigen::Vector2d(-1.0, 0.5), 0.2},
       BoxIndicator{Vector::Constant(2, -1.0), Vector::Constant(2, 2.0)}}};
  const std::vector<Named> kinds{
      {"zero", ProxFunction::zero(), 3},
      {"quadratic", ProxFunction::quadratic(Qind, Eigen::Vector2d(0.3, -0.2)), 2},
      {"box", ProxFunction::box(Eigen::Vector2d(-1.0, 0.0), Eigen::Vector2d(1.0, kInf)), 2},
      {"l1", ProxFunction::l1(0.7), 3},
      {"scad", ProxFunction::scad(1.0, 3.7), 3},
      {"mcp", ProxFunction::mcp(1.0, 3.0), 3},
      {"pointwise_min", ProxFunction::pointwise_min(pieces), 2},
      {"quadratic_psd", ProxFunction::quadratic(Qpsd, Eigen::Vector2d(1.0, -1.0)), 2},
  };
  double worst_fd = 0.0, worst_step = 0.0;
  std::ostringstream detail;
  for (const auto& [name, g, dim] : kinds) {
    const double gamma = std::min(0.8, 0.5 * g.gamma_limit());
    double kind_worst = 0.0;
    for (int i = 0; i < 100; ++i) {
      const Vector v = meal::testing::random_vector(rng, dim, -4.0, 4.0);
      const MoreauResult mr = moreau_value_grad(g, gamma, v);
      const double lhs = (mr.prox_point - v).norm();
      const double rhs = gamma * mr.gradient.norm();
      worst_step = std::max(worst_step, std::abs(lhs - rhs) / std::max(lhs, 1e-300));
      kind_worst = std::max(
          kind_worst,
          finite_diff_check([&](const Vector& u) { return moreau_value_grad(g, gamma, u).value; },
                            [&](const Vector& u) { return moreau_value_grad(g, gamma, u).gradient; },
                            v));
    }
    worst_fd = std::max(worst_fd, kind_worst);
    detail << name << "=" << fmt(kind_worst) << " ";
  }
  detail << "; step identity " << fmt(worst_step);
  return {worst_fd <= 1e-4 && worst_step <= 1e-10, "fd rel " + detail.str()};
}

struct BoxCase {
  testing::QpData data;
  Problem problem;
};

std::vector<BoxCase> box_cases() {
  std::vector<BoxCase> cases;
  SplitMix64 rng(7);
  for (int i = 0; i < 10; ++i) {
    const int n = 3 + i % 4;
    const int m = 1 + i % 2;
    auto d = random_qp_data(rng, n, m);
    d.r *= 3.0;  // push some minimizers onto the box boundary
    cases.push_back({d, box_qp(d)});
  }
  return cases;
}

double gamma_for(const Problem& p) { return 0.5 / p.smooth()->lipschitz(); }

Outcome oracle_equivalence() {
  std::ostringstream detail;
  bool ok = true;
  double worst_dist = 0.0, worst_kkt = 0.0;
  int total_active = 0;
  for (const auto& c : box_cases()) {
    const auto oracle = active_set_qp_oracle(c.data.Q, c.data.r, c.data.A, c.data.b,
                                             std::get<BoxIndicator>(c.problem.prox_part().kind()));
    for (Algorithm algo : {Algorithm::kMeal, Algorithm::kLimeal}) {
      SolverConfig config;
      config.algorithm = algo;
      config.plan = PenaltyPlan{FixedPenalty{10.0}, gamma_for(c.problem), 1.0};
      config.subproblem.path = SubproblemPath::kDirectQP;
      config.stop = StopCriteria{20000, 1e-10, 1e-10};
      const Trace trace = run(c.problem, config);
      const Vector& x = trace.final_state.x;
      double dist = kInf;
      for (const auto& pt : oracle.points) dist = std::min(dist, (pt.x - x).norm());
      const KktReport kkt = kkt_residual(c.problem, x, trace.final_state.lambda);
      for (int a : kkt.active) total_active += a != 0;
      const double res = std::max(kkt.stationarity_residual, kkt.feasibility);
      worst_dist = std::max(worst_dist, dist);
      worst_kkt = std::max(worst_kkt, res);
      ok = ok && trace.status == TerminalStatus::kConverged && dist <= 1e-5 && res <= 1e-5;
    }
  }
  detail << "20 runs, max distance " << fmt(worst_dist) << ", max KKT residual "
         << fmt(worst_kkt) << ", " << total_active << " active bounds at termination";
  return {ok, detail.str()};
}

Outcome complexity_trend() {
  std::ostringstream detail;
  bool ok = true;
  for (auto c : meal_cases()) {
    c.config.stop = StopCriteria{2000, 1e-8, 1e-8};
    c.config.monitors = MonitorFlags{};
    const Trace trace = run(c.problem, c.config, c.init);
    const std::size_t n = trace.rows.size();
    std::vector<double> ks, ys;
    for (std::size_t i = n / 2; i < n; ++i) {
      const double k = static_cast<double>(trace.rows[i].k);
      ks.push_back(k);
      ys.push_back(k * trace.rows[i].stationarity * trace.rows[i].stationarity);
    }
    double mk = 0, my = 0;
    for (std::size_t i = 0; i < ks.size(); ++i) {
      mk += ks[i];
      my += ys[i];
    }
    mk /= static_cast<double>(ks.size());
    my /= static_cast<double>(ks.size());
    double sxx = 0, sxy = 0, syy = 0;
    for (std::size_t i = 0; i < ks.size(); ++i) {
      sxx += (ks[i] - mk) * (ks[i] - mk);
      sxy += (ks[i] - mk) * (ys[i] - my);
      syy += (ys[i] - my) * (ys[i] - my);
    }
    const double slope = sxx > 0 ? sxy / sxx : 0.0;
    const double r2 = (sxx > 0 && syy > 0) ? sxy * sxy / (sxx * syy) : 1.0;
    const bool converged = trace.status == TerminalStatus::kConverged;
    ok = ok && converged && n >= 4 && slope <= 0.0;
    detail << c.name << " " << n << " rows slope " << fmt(slope) << " r2 " << fmt(r2) << "; ";
  }
  return {ok, detail.str()};
}

Outcome fixed_point_invariance() {
  std::ostringstream detail;
  bool ok = true;
  double worst = 0.0;
  int runs = 0;
  for (const auto& c : box_cases()) {
    const auto oracle = active_set_qp_oracle(c.data.Q, c.data.r, c.data.A, c.data.b,
                                             std::get<BoxIndicator>(c.problem.prox_part().kind()));
    if (oracle.points.empty()) {
      ok = false;
      continue;
    }
    const auto& star = oracle.points.front();
    if (kkt_residual(c.problem, star.x, star.lambda).stationarity_residual > 1e-8) ok = false;
    const double beta = 10.0;
    const double gamma = gamma_for(c.problem);
    for (Algorithm algo : {Algorithm::kMeal, Algorithm::kImeal, Algorithm::kLimeal,
                           Algorithm::kAlm, Algorithm::kProxIalm}) {
      SolverConfig config;
      config.algorithm = algo;
      config.plan = PenaltyPlan{FixedPenalty{beta}, gamma, 1.0};
      config.subproblem.path =
          algo == Algorithm::kImeal ? SubproblemPath::kInnerProxGradient : SubproblemPath::kDirectQP;
      if (algo == Algorithm::kImeal) config.epsilon = EpsilonSchedule{1e-10, 1.0};
      if (algo == Algorithm::kProxIalm) {
        const double q = c.problem.smooth()->lipschitz();
        const double a = Eigen::JacobiSVD<Matrix>(c.data.A).singularValues()(0);
        config.prox_ialm = ProxIalmParams{2 * q, 1.0 / (2 * (q + 2 * q + beta * a * a)), beta};
      }
      config.stop = StopCriteria{5, 1e-300, 1e-300};
      const Trace trace = run(c.problem, config, IterateState{star.x, star.x, star.lambda, 0});
      double moved = 0.0;
      for (const auto& row : trace.rows) moved = std::max(moved, row.xz_gap);
      moved = std::max(moved, (trace.final_state.x - star.x).norm());
      worst = std::max(worst, moved);
      ok = ok && moved <= 1e-8;
      ++runs;
    }
  }
  detail << runs << " solver runs seeded at oracle KKT points, max displacement " << fmt(worst);
  return {ok, detail.str()};
}

std::string strip_wall_time(const fs::path& path) {
  std::ifstream is(path);
  std::string line, out;
  while (std::getline(is, line)) {
    const auto cut = line.rfind(',');
    out += (path.filename() == "summary.csv" || cut == std::string::npos) ? line : line.substr(0, cut);
    out += '\n';
  }
  return out;
}

Outcome determinism() {
  const fs::path root = fs::temp_directory_path() / ("meal_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(root);
  const std::string cli = MEAL_CLI_PATH;
  for (const char* run : {"a", "b"}) {
    const std::string cmd = "\"" + cli + "\" exp2 --seed 42 --output-dir \"" +
                            (root / run).string() + "\" > /dev/null";
    if (std::system(cmd.c_str()) != 0) return {false, "exp2 command failed"};
  }
  int files = 0;
  bool ok = true;
  for (const auto& entry : fs::directory_iterator(root / "a" / "exp2")) {
    const fs::path other = root / "b" / "exp2" / entry.path().filename();
    ok = ok && fs::exists(other) && strip_wall_time(entry.path()) == strip_wall_time(other);
    ++files;
  }
  fs::remove_all(root);
  return {ok && files == 6, std::to_string(files) + " files compared"};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"exp1 ALM oscillates, LiMEAL converges", exp1_split},
      {"exp1 LiMEAL linear rate", exp1_linear_rate},
      {"exp2 LiMEAL faster than Prox-iALM/iALM", exp2_speed},
      {"MEAL one-step progress", [] { return monitor_suite(true); }},
      {"MEAL dual controlled by primal", [] { return monitor_suite(false); }},
      {"Moreau envelope gradient and step identity", moreau_machinery},
      {"terminal iterates match active-set oracle", oracle_equivalence},
      {"k*xi^2 trend nonincreasing", complexity_trend},
      {"fixed-point invariance", fixed_point_invariance},
      {"exp2 determinism", determinism},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.passed;
    std::cout << (o.passed ? "PASS" : "FAIL") << " [" << (i + 1) << "] " << criteria[i].first
              << " -- " << o.detail << std::endl;
  }
  std::cout << (criteria.size() - failures) << "/" << criteria.size() << " criteria passed\n";
  return failures == 0 ? 0 : 1;
}
