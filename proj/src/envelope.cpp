#include "meal/envelope.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Eigenvalues>

#include "meal/box_qp.hpp"
#include "meal/errors.hpp"

namespace meal {

namespace {

void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) throw Error(code, what);
}

double largest_singular_value_sq(const Matrix& A) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(A.transpose() * A,
                                           Eigen::EigenvaluesOnly);
  return std::max(0.0, es.eigenvalues().maxCoeff());
}

bool is_box(const ProxFunction& g) {
  return std::holds_alternative<BoxIndicator>(g.kind());
}

}  // namespace

void PenaltyPlan::validate() const {
  require(std::isfinite(gamma) && gamma > 0.0, ErrorCode::kInvalidArgument,
          "penalty plan: gamma must be positive");
  require(eta > 0.0 && eta < 2.0, ErrorCode::kInvalidArgument,
          "penalty plan: eta must lie in (0, 2)");
  if (const auto* f = std::get_if<FixedPenalty>(&mode)) {
    require(std::isfinite(f->beta) && f->beta > 0.0, ErrorCode::kInvalidArgument,
            "penalty plan: beta must be positive");
  } else {
    const auto& h = std::get<HorizonPenalty>(mode);
    require(h.horizon >= 1, ErrorCode::kInvalidArgument,
            "penalty plan: horizon must be >= 1");
    require(std::isfinite(h.alpha_target) && h.alpha_target > 0.0,
            ErrorCode::kNonPositiveAlpha,
            "penalty plan: alpha target must be positive");
  }
}

// ---------------------------------------------------------------------------
// EnvelopeContext

EnvelopeContext::EnvelopeContext(Problem problem, PenaltyPlan plan,
                                 SubproblemOptions options,
                                 SubproblemModel model)
    : problem_(std::move(problem)), plan_(plan), options_(options),
      model_(model) {
  plan_.validate();
  const ProxFunction& g = problem_.prox_part();
  if (model_ == SubproblemModel::kFull) {
    const double rho = problem_.rho_total();
    require(rho == 0.0 || plan_.gamma < 1.0 / rho, ErrorCode::kGammaTooLarge,
            "gamma must be below 1/rho_total = " + std::to_string(1.0 / rho));
  } else {
    require(problem_.composite(), ErrorCode::kNotComposite,
            "linearized subproblem needs a smooth part h");
    require(plan_.gamma < g.gamma_limit(), ErrorCode::kGammaTooLarge,
            "gamma must be below 1/rho_g = " + std::to_string(g.gamma_limit()));
  }
  require(options_.tol >= 0.0 && options_.max_inner >= 1,
          ErrorCode::kInvalidArgument, "subproblem options out of range");

  const Matrix& A = problem_.A();
  norm_a_sq_ = largest_singular_value_sq(A);
  try {
    c_gamma_a_ = plan_.gamma * plan_.gamma *
                 smallest_positive_eigenvalue(A.transpose() * A);
  } catch (const Error&) {
    c_gamma_a_.reset();
  }

  if (const auto* f = std::get_if<FixedPenalty>(&plan_.mode)) {
    plan_beta_ = f->beta;
  } else {
    require(c_gamma_a_.has_value(), ErrorCode::kMissingMetadata,
            "horizon penalty needs c_{gamma,A} > 0");
    const auto& h = std::get<HorizonPenalty>(plan_.mode);
    plan_beta_ = horizon_beta(h.horizon, h.alpha_target, plan_.gamma, plan_.eta,
                              *c_gamma_a_);
  }

  const auto n = problem_.n();
  const bool g_quadratic_family =
      std::holds_alternative<Zero>(g.kind()) ||
      std::holds_alternative<QuadraticForm>(g.kind()) || is_box(g);
  if (model_ == SubproblemModel::kFull) {
    model_quadratic_ = problem_.quadratic_objective();
  } else if (g_quadratic_family) {
    QuadraticForm q{Matrix::Zero(n, n), Vector::Zero(n), 0.0};
    if (const auto* gq = std::get_if<QuadraticForm>(&g.kind())) {
      q.Q = gq->Q;
      q.r = gq->r;
      q.c = gq->c;
    }
    model_quadratic_ = q;
  }

  if (options_.path == SubproblemPath::kDirectQP) {
    require(model_quadratic_.has_value(), ErrorCode::kUnsupportedSubproblemPath,
            "direct subproblem path needs a quadratic objective with zero, "
            "quadratic or box prox part");
  }
  if (options_.path == SubproblemPath::kProjectedFastPath) {
    require(model_quadratic_.has_value() &&
                (is_box(g) || std::holds_alternative<Zero>(g.kind())),
            ErrorCode::kUnsupportedSubproblemPath,
            "projection fast path needs a quadratic objective with box or "
            "zero prox part");
  }
  if (model_quadratic_) {
    const Matrix H = model_quadratic_->Q + plan_beta_ * A.transpose() * A +
                     Matrix::Identity(n, n) / plan_.gamma;
    Eigen::LLT<Matrix> llt(H);
    if (llt.info() == Eigen::Success) factor_ = std::move(llt);
  }
}

double EnvelopeContext::beta(int /*k*/) const { return plan_beta_; }

std::optional<int> EnvelopeContext::horizon() const {
  if (const auto* h = std::get_if<HorizonPenalty>(&plan_.mode)) return h->horizon;
  return std::nullopt;
}

const Eigen::LLT<Matrix>* EnvelopeContext::factor_for(double beta) const {
  return (factor_ && beta == plan_beta_) ? &*factor_ : nullptr;
}

Vector EnvelopeContext::smooth_part_gradient(const Vector& x, const Vector& z,
                                             const Vector& lambda, double beta,
                                             const Vector* anchor) const {
  const Matrix& A = problem_.A();
  Vector grad = A.transpose() * (lambda + beta * (A * x - problem_.b())) +
                (x - z) / plan_.gamma;
  if (problem_.composite()) {
    if (model_ == SubproblemModel::kFull) {
      grad += problem_.smooth()->gradient(x);
    } else {
      grad += problem_.smooth()->gradient(*anchor);
    }
  }
  return grad;
}

double EnvelopeContext::subproblem_value(const Vector& x, const Vector& z,
                                         const Vector& lambda, double beta,
                                         const Vector* anchor) const {
  const Vector r = problem_.A() * x - problem_.b();
  double model = 0.0;
  if (model_ == SubproblemModel::kFull) {
    model = problem_.objective(x);
  } else {
    require(anchor != nullptr, ErrorCode::kInvalidArgument,
            "linearized model needs an anchor point");
    const auto& h = *problem_.smooth();
    model = problem_.prox_part().value(x);
    if (std::isfinite(model)) {
      model += h.value(*anchor) + h.gradient(*anchor).dot(x - *anchor);
    }
  }
  if (!std::isfinite(model)) return model;
  return model + lambda.dot(r) + 0.5 * beta * r.squaredNorm() +
         (x - z).squaredNorm() / (2.0 * plan_.gamma);
}

Vector EnvelopeContext::quadratic_residual(const Vector& x,
                                           const Vector& smooth_grad) const {
  const auto* box = std::get_if<BoxIndicator>(&problem_.prox_part().kind());
  if (!box) return smooth_grad;
  Vector s = smooth_grad;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const bool lo = x(i) <= box->lower(i);
    const bool hi = x(i) >= box->upper(i);
    if (lo && hi) {
      s(i) = 0.0;
    } else if (lo) {
      s(i) = std::min(smooth_grad(i), 0.0);
    } else if (hi) {
      s(i) = std::max(smooth_grad(i), 0.0);
    }
  }
  return s;
}

SubproblemResult EnvelopeContext::solve_direct(const Vector& z,
                                               const Vector& lambda,
                                               double beta, const Vector* anchor,
                                               bool project_only) const {
  const Matrix& A = problem_.A();
  const auto n = problem_.n();
  const auto& q = *model_quadratic_;
  Vector c = q.r + A.transpose() * (lambda - beta * problem_.b()) - z / plan_.gamma;
  if (model_ == SubproblemModel::kLinearized) {
    c += problem_.smooth()->gradient(*anchor);
  }
  const auto* box = std::get_if<BoxIndicator>(&problem_.prox_part().kind());

  Matrix H_local;
  const Eigen::LLT<Matrix>* llt = factor_for(beta);
  Eigen::LLT<Matrix> local;
  if (llt == nullptr) {
    H_local = q.Q + beta * A.transpose() * A + Matrix::Identity(n, n) / plan_.gamma;
    local.compute(H_local);
    require(local.info() == Eigen::Success,
            ErrorCode::kSubproblemNonconvexUnsupported,
            "subproblem matrix is not positive definite");
    llt = &local;
  }

  SubproblemResult out;
  if (box != nullptr && !project_only) {
    const Matrix H = llt->reconstructedMatrix();
    auto sol = solve_box_qp(H, c, box->lower, box->upper);
    out.x = std::move(sol.x);
    out.inner_iterations = sol.iterations;
  } else {
    out.x = llt->solve(-c);
    if (box != nullptr) out.x = clip(out.x, box->lower, box->upper);
  }
  out.residual = quadratic_residual(
      out.x, q.Q * out.x + beta * A.transpose() * (A * out.x) +
                 out.x / plan_.gamma + c);
  return out;
}

SubproblemResult EnvelopeContext::solve_inner(const Vector& z,
                                              const Vector& lambda, double beta,
                                              const Vector* anchor,
                                              double tol) const {
  const ProxFunction& g = problem_.prox_part();
  const double lh = (problem_.composite() && model_ == SubproblemModel::kFull)
                        ? problem_.smooth()->lipschitz()
                        : 0.0;
  const double lipschitz = lh + beta * norm_a_sq_ + 1.0 / plan_.gamma;
  const double mu = 1.0 / plan_.gamma - lh;
  const double step = 1.0 / lipschitz;
  const double momentum =
      (g.is_convex() && mu > 0.0)
          ? (std::sqrt(lipschitz) - std::sqrt(mu)) / (std::sqrt(lipschitz) + std::sqrt(mu))
          : 0.0;
  const double floor = 1e-14 * lipschitz *
                       (1.0 + z.lpNorm<Eigen::Infinity>() +
                        lambda.lpNorm<Eigen::Infinity>() +
                        problem_.b().lpNorm<Eigen::Infinity>());
  const double target = std::max(tol, floor);

  auto grad = [&](const Vector& x) {
    return smooth_part_gradient(x, z, lambda, beta, anchor);
  };

  SubproblemResult best;
  double best_norm = kInf;
  Vector x = g.prox(step, z);
  Vector y = x;
  for (int it = 1; it <= options_.max_inner; ++it) {
    const Vector gy = grad(y);
    const Vector next = g.prox(step, y - step * gy);
    Vector s = grad(next) - gy + (y - next) / step;
    const double s_norm = s.norm();
    if (s_norm < best_norm) {
      best_norm = s_norm;
      best.x = next;
      best.residual = std::move(s);
      best.inner_iterations = it;
    }
    if (s_norm <= target) {
      best.inner_iterations = it;
      return best;
    }
    y = next + momentum * (next - x);
    x = next;
  }
  best.budget_exhausted = best_norm > tol;
  best.inner_iterations = options_.max_inner;
  return best;
}

SubproblemResult EnvelopeContext::solve(const Vector& z, const Vector& lambda,
                                        double beta, const Vector* anchor,
                                        std::optional<double> tol) const {
  require(z.size() == problem_.n() && lambda.size() == problem_.m(),
          ErrorCode::kDimensionMismatch, "subproblem: dimension mismatch");
  require(std::isfinite(beta) && beta > 0.0, ErrorCode::kInvalidArgument,
          "subproblem: beta must be positive");
  if (model_ == SubproblemModel::kLinearized) {
    require(anchor != nullptr && anchor->size() == problem_.n(),
            ErrorCode::kInvalidArgument, "linearized model needs an anchor");
  }
  const double requested = tol.value_or(options_.tol);
  switch (options_.path) {
    case SubproblemPath::kDirectQP:
      return solve_direct(z, lambda, beta, anchor, false);
    case SubproblemPath::kProjectedFastPath:
      return solve_direct(z, lambda, beta, anchor, true);
    case SubproblemPath::kInnerProxGradient:
      break;
  }
  return solve_inner(z, lambda, beta, anchor, requested);
}

// ---------------------------------------------------------------------------
// Free functions

double augmented_lagrangian(const EnvelopeContext& ctx, const Vector& x,
                            const Vector& lambda, double beta) {
  const Problem& p = ctx.problem();
  require(x.size() == p.n() && lambda.size() == p.m(),
          ErrorCode::kDimensionMismatch, "augmented_lagrangian: dimensions");
  const double f = p.objective(x);
  if (!std::isfinite(f)) return f;
  const Vector r = p.A() * x - p.b();
  return f + lambda.dot(r) + 0.5 * beta * r.squaredNorm();
}

double potential_P(const EnvelopeContext& ctx, const Vector& x, const Vector& z,
                   const Vector& lambda, double beta) {
  return augmented_lagrangian(ctx, x, lambda, beta) +
         (x - z).squaredNorm() / (2.0 * ctx.gamma());
}

SubproblemResult solve_subproblem(const EnvelopeContext& ctx, const Vector& z,
                                  const Vector& lambda, double beta) {
  return ctx.solve(z, lambda, beta);
}

double alpha_from_beta(const PenaltyPlan& plan, double beta_k, double beta_next,
                       double c_gamma_a) {
  require(beta_k > 0.0 && beta_next > 0.0 && c_gamma_a > 0.0,
          ErrorCode::kInvalidArgument, "alpha_from_beta: inputs must be positive");
  const double eta = plan.eta;
  return (beta_k + beta_next + plan.gamma * eta * (1.0 - eta / 2.0)) /
         (2.0 * c_gamma_a * beta_k * beta_k);
}

double beta_for_target_alpha(double alpha_bar, double gamma, double eta,
                             double c_gamma_a, double margin) {
  require(std::isfinite(alpha_bar) && alpha_bar > 0.0, ErrorCode::kNonPositiveAlpha,
          "beta_for_target_alpha: alpha must be positive");
  require(c_gamma_a > 0.0, ErrorCode::kInvalidArgument,
          "beta_for_target_alpha: c_{gamma,A} must be positive");
  const double root =
      (1.0 + std::sqrt(1.0 + eta * (2.0 - eta) * gamma * c_gamma_a * alpha_bar)) /
      (2.0 * c_gamma_a * alpha_bar);
  return root * (1.0 + margin);
}

double horizon_beta(int horizon, double alpha_star, double gamma, double eta,
                    double c_gamma_a) {
  require(horizon >= 1, ErrorCode::kInvalidArgument, "horizon must be >= 1");
  require(alpha_star > 0.0, ErrorCode::kNonPositiveAlpha,
          "horizon_beta: alpha must be positive");
  const double k = static_cast<double>(horizon);
  return k *
         (1.0 + std::sqrt(1.0 + eta * (2.0 - eta) * gamma * c_gamma_a * alpha_star / k)) /
         (2.0 * c_gamma_a * alpha_star);
}

double limeal_gamma_bound(double rho_g, double lipschitz_h, double eta) {
  const double s = rho_g + lipschitz_h;
  if (s <= 0.0) return kInf;
  return 2.0 / (s * (1.0 + std::sqrt(1.0 + 2.0 * (2.0 - eta) * eta *
                                               lipschitz_h * lipschitz_h / (s * s))));
}

double alpha_cap(const Problem& problem, const PenaltyPlan& plan,
                 CapVariant variant) {
  plan.validate();
  const double gamma = plan.gamma;
  const double eta = plan.eta;
  const double step_term = 2.0 / eta - 1.0;
  auto need = [](std::optional<double> v, const char* name) {
    if (!v) {
      throw Error(ErrorCode::kMissingMetadata,
                  std::string("alpha_cap: missing constant ") + name);
    }
    return *v;
  };

  double cap = 0.0;
  switch (variant) {
    case CapVariant::kMealA:
    case CapVariant::kMealB:
    case CapVariant::kImealA:
    case CapVariant::kImealB: {
      const double rho = problem.rho_total();
      require(rho * gamma < 1.0, ErrorCode::kGammaTooLarge,
              "alpha_cap: gamma must be below 1/rho");
      const double slack = 1.0 - gamma * rho;
      if (variant == CapVariant::kMealA || variant == CapVariant::kImealA) {
        const double lf = need(problem.objective_lipschitz(), "L_f");
        const double denom = (1.0 + gamma * lf) * (1.0 + gamma * lf);
        cap = variant == CapVariant::kMealA
                  ? std::min(slack / (4.0 * gamma * denom), step_term / (8.0 * gamma))
                  : std::min(slack / (6.0 * gamma * denom), step_term / (12.0 * gamma));
      } else {
        cap = variant == CapVariant::kMealB
                  ? std::min(slack / (6.0 * gamma), step_term / (12.0 * gamma))
                  : std::min(slack / (8.0 * gamma), step_term / (16.0 * gamma));
      }
      break;
    }
    case CapVariant::kLimealA:
    case CapVariant::kLimealB: {
      if (!problem.composite()) {
        throw Error(ErrorCode::kNotComposite, "alpha_cap: LiMEAL needs h");
      }
      const double rho_g = problem.prox_part().weak_convexity();
      const double lh = problem.smooth()->lipschitz();
      const double bound = limeal_gamma_bound(rho_g, lh, eta);
      require(gamma < bound, ErrorCode::kGammaTooLarge,
              "alpha_cap: gamma must be below " + std::to_string(bound));
      const double numer = 1.0 - gamma * (rho_g + lh) -
                           eta * (1.0 - eta / 2.0) * gamma * gamma * lh * lh;
      if (variant == CapVariant::kLimealA) {
        const double lg = need(implicit_lipschitz(problem.prox_part()), "L_g");
        const double denom =
            6.0 * gamma * ((1.0 + gamma * lg) * (1.0 + gamma * lg) + gamma * gamma * lh * lh);
        cap = std::min(step_term / (12.0 * gamma), numer / denom);
      } else {
        cap = std::min(numer / (8.0 * gamma * (1.0 + gamma * gamma * lh * lh)),
                       step_term / (16.0 * gamma));
      }
      break;
    }
  }
  require(cap > 0.0, ErrorCode::kNonPositiveAlpha,
          "alpha_cap: admissible range is empty");
  return cap;
}

std::vector<double> stationarity_meal(const std::vector<double>& norms) {
  std::vector<double> out;
  out.reserve(norms.size());
  double running = kInf;
  for (double v : norms) {
    running = std::min(running, v);
    out.push_back(running);
  }
  return out;
}

double meal_gradient_norm(const Vector& z, const Vector& z_next,
                          const Vector& lambda, const Vector& lambda_next,
                          double gamma, double eta, double beta) {
  const double a = (z - z_next).squaredNorm() / ((eta * gamma) * (eta * gamma));
  const double b = (lambda_next - lambda).squaredNorm() / (beta * beta);
  return std::sqrt(a + b);
}

double lyapunov(const EnvelopeContext& ctx, LyapunovVariant variant,
                const LyapunovWindow& window, double beta_k, double alpha_k) {
  if (window.current == nullptr || window.z_prev == nullptr) {
    throw Error(ErrorCode::kWindowTooShort, "lyapunov: needs z^{k-1}");
  }
  const bool linearized =
      variant == LyapunovVariant::kLimealS1 || variant == LyapunovVariant::kLimealS2;
  if (linearized && window.x_prev == nullptr) {
    throw Error(ErrorCode::kWindowTooShort, "lyapunov: LiMEAL needs x^{k-1}");
  }
  double coefficient = 0.0;
  switch (variant) {
    case LyapunovVariant::kMealS1: coefficient = 2.0; break;
    case LyapunovVariant::kMealS2: coefficient = 3.0; break;
    case LyapunovVariant::kImealS1: coefficient = 3.0; break;
    case LyapunovVariant::kImealS2: coefficient = 4.0; break;
    case LyapunovVariant::kLimealS1: coefficient = 3.0; break;
    case LyapunovVariant::kLimealS2: coefficient = 4.0; break;
  }
  const IterateState& s = *window.current;
  double memory = (s.z - *window.z_prev).squaredNorm();
  if (linearized) {
    const double lh =
        ctx.problem().composite() ? ctx.problem().smooth()->lipschitz() : 0.0;
    const double g = ctx.gamma();
    memory += g * g * lh * lh * (s.x - *window.x_prev).squaredNorm();
  }
  return potential_P(ctx, s.x, s.z, s.lambda, beta_k) + coefficient * alpha_k * memory;
}

}  // namespace meal
