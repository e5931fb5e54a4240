#pragma once

#include "meal/problem.hpp"

namespace meal {

struct BoxQpResult {
  Vector x;
  int iterations = 0;
  bool converged = false;
};

/// Minimizes ½xᵀHx + cᵀx over ℓ ≤ x ≤ u for symmetric positive definite H.
///
/// Projected Newton with an Armijo search along the projection arc, finished
/// by an exact solve on the identified free set.
BoxQpResult solve_box_qp(const Matrix& H, const Vector& c, const Vector& lower,
                         const Vector& upper, const Vector* warm_start = nullptr);

/// Global minimizer of a possibly indefinite ½xᵀHx + cᵀx over a box by
/// enumerating every lower/upper/free pattern (3ⁿ, n ≤ 8). Throws
/// kSubproblemNonconvexUnsupported when n is too large or the objective is
/// unbounded along an open coordinate direction.
Vector global_box_qp_min(const Matrix& H, const Vector& c, const Vector& lower,
                         const Vector& upper, int max_dim = 8);

Vector clip(const Vector& v, const Vector& lower, const Vector& upper);

}  // namespace meal
