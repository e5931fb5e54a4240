#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <variant>
#include <vector>

#include <Eigen/Core>

namespace meal {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// Regularity class of the subgradient selection picked out by the Moreau
// envelope gradient. User-declared; see probe_implicit_class() for an
// empirical estimate.
struct UnknownClass {};
struct LipschitzSubgradient {
  double lipschitz;
};
struct BoundedSubgradient {
  double bound;
};
using ImplicitClass =
    std::variant<UnknownClass, LipschitzSubgradient, BoundedSubgradient>;

/// ½xᵀQx + rᵀx + c.
struct QuadraticForm {
  Matrix Q;
  Vector r;
  double c = 0.0;

  double value(const Vector& x) const { return 0.5 * x.dot(Q * x) + r.dot(x) + c; }
  Vector gradient(const Vector& x) const { return Q * x + r; }
};

struct Zero {};

/// Indicator of {ℓ ≤ x ≤ u}; ±kInf entries leave a side open.
struct BoxIndicator {
  Vector lower;
  Vector upper;
};

struct L1 {
  double weight;
};

struct Scad {
  double lambda;
  double a;
};

struct Mcp {
  double lambda;
  double a;
};

/// One piece of a pointwise minimum: a quadratic restricted to a box.
struct QuadraticPiece {
  QuadraticForm quad;
  BoxIndicator box;
};

struct PointwiseMin {
  std::vector<QuadraticPiece> pieces;
};

using ProxKind =
    std::variant<Zero, QuadraticForm, BoxIndicator, L1, Scad, Mcp, PointwiseMin>;

/// A weakly convex function with an exact proximal map.
///
/// Immutable after construction. The weak-convexity modulus defaults to the
/// tightest value known for the kind; prox() rejects γ ≥ 1/ρ.
class ProxFunction {
 public:
  static ProxFunction zero();
  static ProxFunction quadratic(Matrix Q, Vector r, double c = 0.0);
  static ProxFunction box(Vector lower, Vector upper);
  static ProxFunction l1(double weight);
  static ProxFunction scad(double lambda, double a);
  static ProxFunction mcp(double lambda, double a);
  /// ρ defaults to 2·max‖M_i‖₂ over the pieces.
  static ProxFunction pointwise_min(std::vector<QuadraticPiece> pieces);

  const ProxKind& kind() const { return kind_; }
  double weak_convexity() const { return rho_; }
  const ImplicitClass& implicit_class() const { return implicit_class_; }

  ProxFunction with_implicit_class(ImplicitClass cls) const;
  /// Overrides ρ; may only loosen the default.
  ProxFunction with_weak_convexity(double rho) const;

  bool is_convex() const { return rho_ == 0.0; }
  /// Zero, L1, SCAD and MCP act coordinate-wise and accept any dimension.
  bool is_separable() const;
  /// Fixed dimension for the non-separable kinds.
  std::optional<Eigen::Index> dimension() const;

  /// Value of g at x; kInf outside the domain.
  double value(const Vector& x) const;
  /// Scalar value of a separable kind.
  double scalar_value(double t) const;
  /// Unique minimizer of g(x) + ‖x − v‖²/(2γ). Throws kGammaTooLarge when
  /// γ ≥ 1/ρ.
  Vector prox(double gamma, const Vector& v) const;

  /// Largest γ accepted by prox(); kInf for convex kinds.
  double gamma_limit() const;

 private:
  ProxFunction(ProxKind kind, double rho);

  ProxKind kind_;
  double rho_;
  ImplicitClass implicit_class_{UnknownClass{}};
};

/// L_g for the implicit Lipschitz class: declared value, 0 for Zero, ‖Q‖₂
/// for a quadratic; nullopt otherwise.
std::optional<double> implicit_lipschitz(const ProxFunction& g);

struct MoreauResult {
  double value;
  Vector gradient;
  Vector prox_point;
};

Vector prox(const ProxFunction& g, double gamma, const Vector& v);

/// Moreau envelope of g at v with its gradient (v − p)/γ and the prox point.
MoreauResult moreau_value_grad(const ProxFunction& g, double gamma,
                               const Vector& v);

/// Smooth part h of a composite objective.
class SmoothFunction {
 public:
  using ValueFn = std::function<double(const Vector&)>;
  using GradientFn = std::function<Vector(const Vector&)>;

  SmoothFunction(ValueFn value, GradientFn gradient, double lipschitz);

  /// ½xᵀQx + rᵀx + c with L_h = ‖Q‖₂.
  static SmoothFunction quadratic(Matrix Q, Vector r, double c = 0.0);

  double value(const Vector& x) const { return value_(x); }
  Vector gradient(const Vector& x) const { return gradient_(x); }
  double lipschitz() const { return lipschitz_; }
  const std::optional<QuadraticForm>& quadratic_form() const { return quad_; }

 private:
  ValueFn value_;
  GradientFn gradient_;
  double lipschitz_;
  std::optional<QuadraticForm> quad_;
};

class LinearConstraint {
 public:
  LinearConstraint(Matrix A, Vector b);

  const Matrix& A() const { return A_; }
  const Vector& b() const { return b_; }
  Eigen::Index rows() const { return A_.rows(); }
  Eigen::Index cols() const { return A_.cols(); }

  double residual(const Vector& x) const { return (A_ * x - b_).norm(); }
  /// ‖A x_ls − b‖ for a least-squares solution x_ls.
  double feasibility_probe() const;
  bool is_feasible(double tol = 1e-8) const { return feasibility_probe() <= tol; }

 private:
  Matrix A_;
  Vector b_;
};

/// minimize f(x) subject to Ax = b, with f = h + g (composite) or f = g.
class Problem {
 public:
  Problem(LinearConstraint constraint, ProxFunction prox_part);
  Problem(LinearConstraint constraint, SmoothFunction smooth,
          ProxFunction prox_part);

  const LinearConstraint& constraint() const { return constraint_; }
  const Matrix& A() const { return constraint_.A(); }
  const Vector& b() const { return constraint_.b(); }
  Eigen::Index n() const { return constraint_.cols(); }
  Eigen::Index m() const { return constraint_.rows(); }

  bool composite() const { return smooth_.has_value(); }
  const std::optional<SmoothFunction>& smooth() const { return smooth_; }
  const ProxFunction& prox_part() const { return prox_part_; }

  /// ρ_g + L_h for composite objectives, ρ_g otherwise.
  double rho_total() const;

  /// Declared implicit class of the whole objective f.
  const ImplicitClass& objective_class() const { return objective_class_; }
  Problem with_objective_class(ImplicitClass cls) const;
  /// L_f: the declared value, else derived when f is differentiable with a
  /// known Lipschitz gradient.
  std::optional<double> objective_lipschitz() const;

  double objective(const Vector& x) const;
  /// ∇h(x), or zeros when no smooth part is present.
  Vector smooth_gradient(const Vector& x) const;

  /// Combined quadratic of h and g when both are quadratic (or absent).
  std::optional<QuadraticForm> quadratic_objective() const;

 private:
  LinearConstraint constraint_;
  std::optional<SmoothFunction> smooth_;
  ProxFunction prox_part_;
  ImplicitClass objective_class_{UnknownClass{}};
};

double objective_value(const Problem& p, const Vector& x);

/// Smallest eigenvalue of a symmetric PSD matrix that exceeds
/// rank_tol·λ_max. Throws kAllZeroMatrix when none does.
double smallest_positive_eigenvalue(const Matrix& M, double rank_tol = 1e-10);

/// Empirical estimates of the implicit Lipschitz / bounded constants of g at
/// a given γ, from random preimage pairs.
struct ImplicitProbe {
  double lipschitz_estimate;
  double bound_estimate;
};
ImplicitProbe probe_implicit_class(const ProxFunction& g, double gamma,
                                   Eigen::Index dim, int samples,
                                   std::uint64_t seed, double scale = 5.0);

}  // namespace meal
