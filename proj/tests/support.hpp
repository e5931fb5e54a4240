#pragma once

#include <cmath>
#include <cstdint>

#include "meal/problem.hpp"
#include "meal/rng.hpp"

namespace meal::testing {

inline Matrix random_matrix(SplitMix64& rng, Eigen::Index rows, Eigen::Index cols,
                            double lo = -1.0, double hi = 1.0) {
  Matrix M(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) M(i, j) = rng.uniform(lo, hi);
  return M;
}

inline Vector random_vector(SplitMix64& rng, Eigen::Index n, double lo = -1.0,
                            double hi = 1.0) {
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = rng.uniform(lo, hi);
  return v;
}

/// Strictly convex QP data: Q = GᵀG/n + ½I.
struct QpData {
  Matrix Q;
  Vector r;
  Matrix A;
  Vector b;
};

inline QpData random_qp_data(SplitMix64& rng, int n, int m, bool convex = true) {
  QpData d;
  const Matrix G = random_matrix(rng, n, n);
  d.Q = convex ? Matrix(G.transpose() * G / n + 0.5 * Matrix::Identity(n, n))
               : Matrix(0.5 * (G + G.transpose()));
  d.r = random_vector(rng, n);
  d.A = random_matrix(rng, m, n);
  d.b = d.A * random_vector(rng, n, 0.0, 1.0);
  return d;
}

/// f = ½xᵀQx + rᵀx as the prox part, Ax = b.
inline Problem convex_qp(const QpData& d) {
  return Problem(LinearConstraint(d.A, d.b), ProxFunction::quadratic(d.Q, d.r));
}

/// h = ½xᵀQx + rᵀx, g = indicator of [0,1]ⁿ, Ax = b with a feasible interior point.
inline Problem box_qp(const QpData& d) {
  const auto n = d.Q.rows();
  return Problem(LinearConstraint(d.A, d.b), SmoothFunction::quadratic(d.Q, d.r),
                 ProxFunction::box(Vector::Zero(n), Vector::Ones(n)));
}

}  // namespace meal::testing
