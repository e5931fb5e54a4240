#pragma once

#include <optional>
#include <variant>
#include <vector>

#include <Eigen/Cholesky>

#include "meal/problem.hpp"

namespace meal {

struct FixedPenalty {
  double beta;
};

/// β_k chosen so that α_k ≡ α*/K for k < K; the run stops at K.
struct HorizonPenalty {
  int horizon;
  double alpha_target;
};

struct PenaltyPlan {
  std::variant<FixedPenalty, HorizonPenalty> mode;
  double gamma;
  double eta;

  void validate() const;
};

struct IterateState {
  Vector x;
  Vector z;
  Vector lambda;
  int k = 0;
};

struct StepReport {
  Vector grad_phi_z;
  Vector grad_phi_lambda;
  double stationarity_norm = 0.0;
  /// ‖Ax^{k+1} − b‖ of the new primal point.
  double feasibility = 0.0;
  std::optional<double> inexact_residual_norm;
  bool inner_budget_exhausted = false;
};

enum class SubproblemPath { kDirectQP, kInnerProxGradient, kProjectedFastPath };

struct SubproblemOptions {
  SubproblemPath path = SubproblemPath::kInnerProxGradient;
  double tol = 1e-12;
  int max_inner = 200000;
};

/// Which primal model the x-subproblem minimizes.
enum class SubproblemModel {
  kFull,        // f itself (MEAL, iMEAL)
  kLinearized,  // h linearized at the previous x (LiMEAL)
};

struct SubproblemResult {
  Vector x;
  /// s ∈ ∂_x[model + ⟨λ, Ax−b⟩ + β/2‖Ax−b‖²](x) + γ⁻¹(x − z).
  Vector residual;
  int inner_iterations = 0;
  bool budget_exhausted = false;
};

/// Problem, penalty plan and subproblem strategy bundled for the solvers.
///
/// Immutable after construction; the SPD matrix βAᵀA + γ⁻¹I (plus any
/// quadratic objective part) is factored eagerly for the plan's β.
class EnvelopeContext {
 public:
  EnvelopeContext(Problem problem, PenaltyPlan plan, SubproblemOptions options,
                  SubproblemModel model = SubproblemModel::kFull);

  const Problem& problem() const { return problem_; }
  const PenaltyPlan& plan() const { return plan_; }
  const SubproblemOptions& options() const { return options_; }
  SubproblemModel model() const { return model_; }
  double gamma() const { return plan_.gamma; }
  double eta() const { return plan_.eta; }

  /// β_k for iteration k.
  double beta(int k) const;
  /// Iteration budget implied by the plan (K in horizon mode).
  std::optional<int> horizon() const;

  /// c_{γ,A} = γ²·σ̃_min(AᵀA); nullopt when A has no positive singular value.
  std::optional<double> c_gamma_a() const { return c_gamma_a_; }

  /// Solves the x-subproblem at (z, λ) with penalty β. `anchor` is the
  /// linearization point for the linearized model.
  SubproblemResult solve(const Vector& z, const Vector& lambda, double beta,
                         const Vector* anchor = nullptr,
                         std::optional<double> tol = std::nullopt) const;

  /// Value of the x-subproblem objective at x.
  double subproblem_value(const Vector& x, const Vector& z,
                          const Vector& lambda, double beta,
                          const Vector* anchor = nullptr) const;

 private:
  Vector smooth_part_gradient(const Vector& x, const Vector& z,
                              const Vector& lambda, double beta,
                              const Vector* anchor) const;
  const Eigen::LLT<Matrix>* factor_for(double beta) const;
  SubproblemResult solve_direct(const Vector& z, const Vector& lambda,
                                double beta, const Vector* anchor,
                                bool project_only) const;
  SubproblemResult solve_inner(const Vector& z, const Vector& lambda,
                               double beta, const Vector* anchor,
                               double tol) const;
  /// Minimal-norm element of the subproblem subdifferential at x for the
  /// quadratic models, given the gradient of its smooth part.
  Vector quadratic_residual(const Vector& x, const Vector& smooth_grad) const;

  Problem problem_;
  PenaltyPlan plan_;
  SubproblemOptions options_;
  SubproblemModel model_;
  std::optional<double> c_gamma_a_;
  double norm_a_sq_ = 0.0;
  double plan_beta_ = 0.0;
  /// Quadratic part of the subproblem model, excluding penalty and prox terms.
  std::optional<QuadraticForm> model_quadratic_;
  std::optional<Eigen::LLT<Matrix>> factor_;
};

double augmented_lagrangian(const EnvelopeContext& ctx, const Vector& x,
                            const Vector& lambda, double beta);

/// 𝒫_β(x, z, λ) = ℒ_β(x, λ) + ‖x − z‖²/(2γ).
double potential_P(const EnvelopeContext& ctx, const Vector& x, const Vector& z,
                   const Vector& lambda, double beta);

SubproblemResult solve_subproblem(const EnvelopeContext& ctx, const Vector& z,
                                  const Vector& lambda, double beta);

/// α_k = (β_k + β_{k+1} + γη(1 − η/2)) / (2 c β_k²).
double alpha_from_beta(const PenaltyPlan& plan, double beta_k, double beta_next,
                       double c_gamma_a);

/// Smallest β whose fixed-penalty α stays strictly below alpha_bar, inflated by
/// (1 + margin).
double beta_for_target_alpha(double alpha_bar, double gamma, double eta,
                             double c_gamma_a, double margin = 1e-6);

/// Constant β_k that makes α_k = α*/K exactly.
double horizon_beta(int horizon, double alpha_star, double gamma, double eta,
                    double c_gamma_a);

enum class CapVariant { kMealA, kMealB, kImealA, kImealB, kLimealA, kLimealB };

/// Admissible bound on α (or α*, α̂*, ᾱ*) for the given convergence regime.
double alpha_cap(const Problem& problem, const PenaltyPlan& plan,
                 CapVariant variant);

/// Upper bound on γ required by the linearized method's complexity result.
double limeal_gamma_bound(double rho_g, double lipschitz_h, double eta);

/// Prefix minima of a stream of gradient norms.
std::vector<double> stationarity_meal(const std::vector<double>& norms);

/// ‖∇φ_β(z^k, λ^k)‖ recovered from consecutive iterates.
double meal_gradient_norm(const Vector& z, const Vector& z_next,
                          const Vector& lambda, const Vector& lambda_next,
                          double gamma, double eta, double beta);

enum class LyapunovVariant { kMealS1, kMealS2, kImealS1, kImealS2, kLimealS1, kLimealS2 };

/// Current state with its predecessors; x_prev is needed by the LiMEAL
/// variants only.
struct LyapunovWindow {
  const IterateState* current = nullptr;
  const Vector* z_prev = nullptr;
  const Vector* x_prev = nullptr;
};

double lyapunov(const EnvelopeContext& ctx, LyapunovVariant variant,
                const LyapunovWindow& window, double beta_k, double alpha_k);

}  // namespace meal
