#include "meal/solvers.hpp"

#include <chrono>
#include <cmath>
#include <string>

#include <Eigen/Cholesky>

#include "meal/box_qp.hpp"
#include "meal/errors.hpp"

namespace meal {

namespace {

void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) throw Error(code, what);
}

void check_state(const Problem& p, const IterateState& s) {
  require(s.x.size() == p.n() && s.z.size() == p.n() && s.lambda.size() == p.m(),
          ErrorCode::kDimensionMismatch, "iterate dimensions do not match problem");
  require(s.x.allFinite() && s.z.allFinite() && s.lambda.allFinite(),
          ErrorCode::kInvalidArgument, "iterate must be finite");
}

// Minimal-norm element of w + N_C(x) when g is a box; w otherwise.
Vector normal_cone_residual(const ProxFunction& g, const Vector& x, Vector w) {
  const auto* box = std::get_if<BoxIndicator>(&g.kind());
  if (!box) return w;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const bool lo = x(i) <= box->lower(i);
    const bool hi = x(i) >= box->upper(i);
    if (lo && hi) {
      w(i) = 0.0;
    } else if (lo) {
      w(i) = std::min(w(i), 0.0);
    } else if (hi) {
      w(i) = std::max(w(i), 0.0);
    }
  }
  return w;
}

const QuadraticForm& require_quadratic(const std::optional<QuadraticForm>& q,
                                       const char* who) {
  if (!q) {
    throw Error(ErrorCode::kSubproblemNonconvexUnsupported,
                std::string(who) +
                    " needs a quadratic objective with zero, quadratic or box "
                    "prox part");
  }
  return *q;
}

// Shared z/λ update and report for the envelope-based methods.
StepOutcome finish_envelope_step(const EnvelopeContext& ctx,
                                 const IterateState& state, Vector x_new,
                                 double beta) {
  const Problem& p = ctx.problem();
  const double eta = ctx.eta();
  StepOutcome out;
  out.next.k = state.k + 1;
  out.next.z = (1.0 - eta) * state.z + eta * x_new;
  const Vector r = p.A() * x_new - p.b();
  out.next.lambda = state.lambda + beta * r;
  out.next.x = std::move(x_new);
  out.report.grad_phi_z = (state.z - out.next.z) / (eta * ctx.gamma());
  out.report.grad_phi_lambda = (out.next.lambda - state.lambda) / beta;
  out.report.stationarity_norm =
      std::sqrt(out.report.grad_phi_z.squaredNorm() +
                out.report.grad_phi_lambda.squaredNorm());
  out.report.feasibility = r.norm();
  return out;
}

}  // namespace

std::string to_string(Algorithm a) {
  switch (a) {
    case Algorithm::kMeal: return "meal";
    case Algorithm::kImeal: return "imeal";
    case Algorithm::kLimeal: return "limeal";
    case Algorithm::kAlm: return "alm";
    case Algorithm::kProxIalm: return "prox-ialm";
  }
  return "unknown";
}

std::string to_string(TerminalStatus s) {
  switch (s) {
    case TerminalStatus::kConverged: return "Converged";
    case TerminalStatus::kMaxIters: return "MaxIters";
    case TerminalStatus::kInnerBudgetExhausted: return "InnerBudgetExhausted";
    case TerminalStatus::kDivergenceDetected: return "DivergenceDetected";
  }
  return "Unknown";
}

double EpsilonSchedule::at(int k) const {
  return eps0 / std::pow(static_cast<double>(k) + 1.0, power);
}

void SolverConfig::validate() const {
  plan.validate();
  require(stop.max_iters >= 1, ErrorCode::kInvalidArgument, "max_iters must be >= 1");
  require(stop.stat_tol > 0.0 && stop.feas_tol > 0.0, ErrorCode::kInvalidArgument,
          "tolerances must be positive");
  if (epsilon) {
    require(epsilon->eps0 >= 0.0 && epsilon->power >= 0.0,
            ErrorCode::kInvalidArgument, "epsilon schedule must be nonnegative");
  }
  if (algorithm == Algorithm::kProxIalm) {
    require(prox_ialm.has_value(), ErrorCode::kInvalidArgument,
            "prox-ialm needs its parameters p, s, alpha_dual");
    require(prox_ialm->p > 0.0 && prox_ialm->s > 0.0 && prox_ialm->alpha_dual > 0.0,
            ErrorCode::kInvalidArgument, "prox-ialm parameters must be positive");
  }
  if (algorithm == Algorithm::kAlm || algorithm == Algorithm::kProxIalm) {
    require(std::holds_alternative<FixedPenalty>(plan.mode),
            ErrorCode::kInvalidArgument, "baselines use a fixed penalty");
  }
}

// ---------------------------------------------------------------------------
// Steps

StepOutcome meal_step(const EnvelopeContext& ctx, const IterateState& state) {
  check_state(ctx.problem(), state);
  const double beta = ctx.beta(state.k);
  auto sub = ctx.solve(state.z, state.lambda, beta);
  auto out = finish_envelope_step(ctx, state, std::move(sub.x), beta);
  out.report.inexact_residual_norm = sub.residual.norm();
  out.report.inner_budget_exhausted = sub.budget_exhausted;
  return out;
}

StepOutcome imeal_step(const EnvelopeContext& ctx, const IterateState& state,
                       double epsilon) {
  check_state(ctx.problem(), state);
  require(epsilon >= 0.0, ErrorCode::kInvalidArgument, "epsilon must be >= 0");
  const double beta = ctx.beta(state.k);
  auto sub = ctx.solve(state.z, state.lambda, beta, nullptr, epsilon);
  auto out = finish_envelope_step(ctx, state, std::move(sub.x), beta);
  out.report.inexact_residual_norm = sub.residual.norm();
  out.report.inner_budget_exhausted = sub.budget_exhausted;
  return out;
}

StepOutcome limeal_step(const EnvelopeContext& ctx, const IterateState& state) {
  const Problem& p = ctx.problem();
  if (!p.composite() || ctx.model() != SubproblemModel::kLinearized) {
    throw Error(ErrorCode::kNotComposite,
                "limeal_step needs a composite problem and linearized context");
  }
  check_state(p, state);
  const double beta = ctx.beta(state.k);
  auto sub = ctx.solve(state.z, state.lambda, beta, &state.x);
  const Vector grad_old = p.smooth()->gradient(state.x);
  auto out = finish_envelope_step(ctx, state, std::move(sub.x), beta);
  out.report.grad_phi_z = (state.z - out.next.x) / ctx.gamma() +
                          (p.smooth()->gradient(out.next.x) - grad_old);
  out.report.stationarity_norm =
      std::sqrt(out.report.grad_phi_z.squaredNorm() +
                out.report.grad_phi_lambda.squaredNorm());
  out.report.inexact_residual_norm = sub.residual.norm();
  out.report.inner_budget_exhausted = sub.budget_exhausted;
  return out;
}

StepOutcome alm_step(const Problem& problem, const IterateState& state,
                     double beta) {
  check_state(problem, state);
  require(beta > 0.0, ErrorCode::kInvalidArgument, "beta must be positive");
  const auto q_opt = problem.quadratic_objective();
  const QuadraticForm& q = require_quadratic(q_opt, "ALM");
  const Matrix& A = problem.A();
  const auto n = problem.n();
  const Matrix H = q.Q + beta * A.transpose() * A;
  const Vector c = q.r + A.transpose() * (state.lambda - beta * problem.b());
  const auto* box = std::get_if<BoxIndicator>(&problem.prox_part().kind());
  const Vector lower = box ? box->lower : Vector::Constant(n, -kInf);
  const Vector upper = box ? box->upper : Vector::Constant(n, kInf);

  Vector x;
  Eigen::LLT<Matrix> llt(H);
  if (llt.info() == Eigen::Success) {
    x = box ? solve_box_qp(H, c, lower, upper).x : Vector(llt.solve(-c));
  } else {
    x = global_box_qp_min(H, c, lower, upper);
  }

  StepOutcome out;
  out.next.k = state.k + 1;
  out.next.z = state.z;
  const Vector r = A * x - problem.b();
  out.next.lambda = state.lambda + beta * r;
  out.report.grad_phi_z = normal_cone_residual(
      problem.prox_part(), x, q.Q * x + q.r + A.transpose() * out.next.lambda);
  out.report.grad_phi_lambda = r;
  out.report.stationarity_norm = std::sqrt(out.report.grad_phi_z.squaredNorm() +
                                           r.squaredNorm());
  out.report.feasibility = r.norm();
  out.next.x = std::move(x);
  return out;
}

StepOutcome prox_ialm_step(const Problem& problem, const IterateState& state,
                           double beta, double eta, const ProxIalmParams& params) {
  check_state(problem, state);
  require(params.p > 0.0 && params.s > 0.0 && params.alpha_dual > 0.0 && beta > 0.0,
          ErrorCode::kInvalidArgument, "prox-ialm parameters must be positive");
  const auto q_opt = problem.quadratic_objective();
  const QuadraticForm& q = require_quadratic(q_opt, "Prox-iALM");
  const Matrix& A = problem.A();
  const Vector& b = problem.b();
  const auto n = problem.n();
  const auto* box = std::get_if<BoxIndicator>(&problem.prox_part().kind());

  // x̄ = (βAᵀA + pI)x + Qx + Aᵀλ − pz − (βAᵀb − r)
  auto grad_k = [&](const Vector& x) -> Vector {
    return beta * A.transpose() * (A * x) + params.p * x + q.Q * x +
           A.transpose() * state.lambda - params.p * state.z -
           (beta * A.transpose() * b - q.r);
  };
  const Vector x_bar = grad_k(state.x);
  Vector x = state.x - params.s * x_bar;
  if (box) x = clip(x, box->lower, box->upper);

  StepOutcome out;
  out.next.k = state.k + 1;
  out.next.z = state.z - eta * (state.z - x);
  const Vector r = A * x - b;
  out.next.lambda = state.lambda + params.alpha_dual * r;

  // (x − x')/s + ∇K(x') − ∇K(x) lies in ∇K(x') + N_C(x'); removing the
  // proximal and excess penalty terms leaves an element of
  // ∇f(x') + Aᵀλ' + N_C(x').
  Vector v = (state.x - x) / params.s + grad_k(x) - x_bar -
             params.p * (x - state.z) -
             (beta - params.alpha_dual) * A.transpose() * r;
  (void)n;
  out.report.grad_phi_z = std::move(v);
  out.report.grad_phi_lambda = r;
  out.report.stationarity_norm = std::sqrt(out.report.grad_phi_z.squaredNorm() +
                                           r.squaredNorm());
  out.report.feasibility = r.norm();
  out.next.x = std::move(x);
  return out;
}

// ---------------------------------------------------------------------------
// Driver

IterateState zero_state(const Problem& problem) {
  return {Vector::Zero(problem.n()), Vector::Zero(problem.n()),
          Vector::Zero(problem.m()), 0};
}

EnvelopeContext make_context(const Problem& problem, const SolverConfig& config) {
  const auto model = config.algorithm == Algorithm::kLimeal
                         ? SubproblemModel::kLinearized
                         : SubproblemModel::kFull;
  return EnvelopeContext(problem, config.plan, config.subproblem, model);
}

Trace run(const Problem& problem, const SolverConfig& config,
          std::optional<IterateState> init) {
  config.validate();
  const auto start = std::chrono::steady_clock::now();
  IterateState state = init ? *init : zero_state(problem);
  state.k = 0;
  check_state(problem, state);

  const Algorithm algo = config.algorithm;
  const bool envelope_method = algo == Algorithm::kMeal ||
                               algo == Algorithm::kImeal ||
                               algo == Algorithm::kLimeal;
  std::optional<EnvelopeContext> ctx;
  if (envelope_method) ctx.emplace(make_context(problem, config));
  const double beta0 = ctx ? ctx->beta(0)
                           : std::get<FixedPenalty>(config.plan.mode).beta;

  int last_k = config.stop.max_iters;
  if (ctx && ctx->horizon()) last_k = std::min(last_k, *ctx->horizon() - 1);

  const double gamma = config.plan.gamma;
  const double eta = config.plan.eta;
  const auto c_gamma_a = ctx ? ctx->c_gamma_a() : std::nullopt;
  const auto lf = problem.objective_lipschitz();
  const auto lg = implicit_lipschitz(problem.prox_part());
  const double lh = problem.composite() ? problem.smooth()->lipschitz() : 0.0;

  LyapunovVariant lyap_variant = LyapunovVariant::kMealS1;
  if (algo == Algorithm::kImeal) lyap_variant = LyapunovVariant::kImealS1;
  if (algo == Algorithm::kLimeal) lyap_variant = LyapunovVariant::kLimealS1;

  Trace trace;
  trace.algorithm = algo;
  trace.beta = beta0;

  std::optional<IterateState> prev;
  double prev_residual = 0.0;
  double running_min = kInf;
  int oscillation_run = 0;
  std::optional<Vector> lambda_prev2;

  auto alpha_at = [&](int k) -> std::optional<double> {
    if (!ctx || !c_gamma_a) return std::nullopt;
    return alpha_from_beta(config.plan, ctx->beta(k), ctx->beta(k + 1), *c_gamma_a);
  };
  auto lyap = [&](const IterateState& s, const IterateState& before) -> double {
    const auto alpha = alpha_at(s.k);
    if (!alpha) return std::nan("");
    LyapunovWindow w{&s, &before.z, &before.x};
    return lyapunov(*ctx, lyap_variant, w, ctx->beta(s.k), *alpha);
  };

  for (int k = 0;; ++k) {
    StepOutcome step;
    switch (algo) {
      case Algorithm::kMeal: step = meal_step(*ctx, state); break;
      case Algorithm::kImeal: {
        const EpsilonSchedule schedule = config.epsilon.value_or(EpsilonSchedule{});
        step = imeal_step(*ctx, state, schedule.at(k));
        break;
      }
      case Algorithm::kLimeal: step = limeal_step(*ctx, state); break;
      case Algorithm::kAlm: step = alm_step(problem, state, beta0); break;
      case Algorithm::kProxIalm:
        step = prox_ialm_step(problem, state, beta0, eta, *config.prox_ialm);
        break;
    }
    const StepReport& rep = step.report;
    const double raw = rep.stationarity_norm;
    running_min = std::min(running_min, raw);
    const bool prefix = algo == Algorithm::kMeal || algo == Algorithm::kImeal;

    TraceRow row;
    row.k = k;
    row.objective = problem.objective(state.x);
    row.feasibility = problem.constraint().residual(state.x);
    row.stationarity = prefix ? running_min : raw;
    row.lyapunov = (envelope_method && prev) ? lyap(state, *prev) : std::nan("");
    row.lambda_norm = state.lambda.norm();
    row.xz_gap = (step.next.x - state.z).norm();
    row.wall_time = std::chrono::duration<double>(
                        std::chrono::steady_clock::now() - start)
                        .count();
    trace.rows.push_back(row);
    trace.raw_stationarity.push_back(raw);

    // Inequality monitors for step k → k+1, defined from k = 1.
    if (envelope_method && prev && c_gamma_a &&
        (config.monitors.dual_by_primal || config.monitors.one_step_progress)) {
      MonitorRecord mon;
      mon.k = k;
      const double dx = (step.next.x - state.x).squaredNorm();
      const double dz_prev = (state.z - prev->z).squaredNorm();
      const double dlam = (step.next.lambda - state.lambda).squaredNorm();
      const double c = *c_gamma_a;
      if (config.monitors.dual_by_primal) {
        if (algo == Algorithm::kMeal && lf) {
          const double a = gamma * *lf + 1.0;
          mon.dual_rhs = 2.0 / c * (a * a * dx + dz_prev);
          mon.dual_checked = true;
        } else if (algo == Algorithm::kImeal && lf) {
          const double a = gamma * *lf + 1.0;
          const double e = rep.inexact_residual_norm.value_or(0.0) + prev_residual;
          mon.dual_rhs = 3.0 / c * (a * a * dx + dz_prev + gamma * gamma * e * e);
          mon.dual_checked = true;
        } else if (algo == Algorithm::kLimeal && lg) {
          const double a = gamma * *lg + 1.0;
          const double dx_prev = (state.x - prev->x).squaredNorm();
          mon.dual_rhs =
              3.0 / c * (a * a * dx + gamma * gamma * lh * lh * dx_prev + dz_prev);
          mon.dual_checked = true;
        }
        mon.dual_lhs = dlam;
        mon.dual_ok = !mon.dual_checked || dlam <= mon.dual_rhs + kMonitorSlack;
      }
      if (config.monitors.one_step_progress &&
          (algo == Algorithm::kMeal || algo == Algorithm::kLimeal)) {
        const double e_now = lyap(state, *prev);
        const double e_next = lyap(step.next, state);
        mon.progress_lhs = e_now - e_next;
        const double factor = algo == Algorithm::kMeal
                                  ? gamma * eta * (2.0 - eta) / 4.0
                                  : gamma * (1.0 - eta / 2.0) * eta / 4.0;
        mon.progress_rhs = factor * raw * raw;
        mon.progress_checked = std::isfinite(mon.progress_lhs);
        mon.progress_ok = !mon.progress_checked ||
                          mon.progress_lhs >= mon.progress_rhs - kMonitorSlack;
      }
      trace.monitors.push_back(mon);
    }

    // Period-two multiplier oscillation.
    if (prev && lambda_prev2) {
      const bool two_cycle = (state.lambda - *lambda_prev2).norm() <= 1e-6 &&
                             (state.lambda - prev->lambda).norm() >= 1e-3;
      oscillation_run = two_cycle ? oscillation_run + 1 : 0;
      if (oscillation_run >= kOscillationWindow) trace.oscillating = true;
    }

    const bool converged = row.stationarity <= config.stop.stat_tol &&
                           row.feasibility <= config.stop.feas_tol;
    const double next_obj = problem.objective(step.next.x);
    const bool diverged = !step.next.x.allFinite() || !step.next.lambda.allFinite() ||
                          step.next.lambda.norm() > kDivergenceThreshold ||
                          (std::isfinite(next_obj) &&
                           std::abs(next_obj) > kDivergenceThreshold);

    if (prev) lambda_prev2 = prev->lambda;
    prev = state;
    prev_residual = rep.inexact_residual_norm.value_or(0.0);
    state = std::move(step.next);

    if (converged) {
      trace.status = TerminalStatus::kConverged;
      break;
    }
    if (rep.inner_budget_exhausted) {
      trace.status = TerminalStatus::kInnerBudgetExhausted;
      break;
    }
    if (diverged) {
      trace.status = TerminalStatus::kDivergenceDetected;
      break;
    }
    if (k >= last_k) {
      trace.status = TerminalStatus::kMaxIters;
      break;
    }
  }
  trace.final_state = state;
  return trace;
}

}  // namespace meal
