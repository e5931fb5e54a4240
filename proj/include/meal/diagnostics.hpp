#pragma once

#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "meal/problem.hpp"
#include "meal/solvers.hpp"

namespace meal {

/// Grid argmin of g(t) + (t − v)²/(2γ) over [−range, range], refined by a
/// ternary search around the best grid point. Throws kRangeTooSmall when the
/// grid minimum sits on the boundary.
double grid_prox_oracle(const std::function<double(double)>& g, double gamma,
                        double v, double range = 10.0, double step = 1e-4);

struct QpStationaryPoint {
  Vector x;
  Vector lambda;
  double value = 0.0;
};

struct ActiveSetResult {
  /// Distinct stationary points in lexicographic pattern order.
  std::vector<QpStationaryPoint> points;
  /// Patterns whose KKT matrix was rank deficient.
  int singular_patterns = 0;
};

/// All KKT points of min ½xᵀQx + rᵀx s.t. Ax = b, ℓ ≤ x ≤ u, found by
/// enumerating the 3ⁿ free/lower/upper patterns.
ActiveSetResult active_set_qp_oracle(const Matrix& Q, const Vector& r,
                                     const Matrix& A, const Vector& b,
                                     const BoxIndicator& box, int max_dim = 8);

struct KktReport {
  /// Upper bound on dist(0, ∂f(x) + Aᵀλ).
  double stationarity_residual = 0.0;
  double feasibility = 0.0;
  /// Per coordinate: −1 at a lower bound, +1 at an upper bound, 0 otherwise.
  std::vector<int> active;
  /// Set when the bound is conservative (several pieces active).
  bool conservative = false;
};

KktReport kkt_residual(const Problem& problem, const Vector& x, const Vector& lambda);

/// Max over coordinates of |central difference − gradient|, relative to
/// max(‖gradient‖∞, 1).
double finite_diff_check(const std::function<double(const Vector&)>& field,
                         const std::function<Vector(const Vector&)>& gradient,
                         const Vector& point, double h = 1e-6);

enum class RateKind { kLinear, kSublinear };

struct RateFit {
  RateKind kind = RateKind::kLinear;
  /// τ for the linear kind, the exponent for the sublinear kind.
  double parameter = 0.0;
  double r2 = 0.0;
  double linear_r2 = 0.0;
  double sublinear_r2 = 0.0;
};

/// Fits log values against k (linear kind) and log k (sublinear kind) after
/// dropping the first burn_in entries; values[i] belongs to k = first_k + i.
RateFit rate_fit(const std::vector<double>& values, int burn_in, int first_k = 0);
/// Same fit on a trace column: objective, feasibility, stationarity,
/// lambda_norm or xz_gap.
RateFit rate_fit(const Trace& trace, std::string_view column, int burn_in);

std::string to_string(RateKind kind);

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Oracle certification of the closed forms and identities used by the
/// solvers.
std::vector<CheckResult> certification_suite(std::uint64_t seed = 7);

}  // namespace meal
