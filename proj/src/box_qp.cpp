#include "meal/box_qp.hpp"

#include <algorithm>
#include <limits>
#include <string>
#include <cmath>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include "meal/errors.hpp"

namespace meal {

Vector clip(const Vector& v, const Vector& lower, const Vector& upper) {
  return v.cwiseMax(lower).cwiseMin(upper);
}

namespace {

double quad_value(const Matrix& H, const Vector& c, const Vector& x) {
  return 0.5 * x.dot(H * x) + c.dot(x);
}

// Solves H_FF x_F = -(c_F + H_FA x_A) with the other coordinates held fixed.
Vector solve_on_free(const Matrix& H, const Vector& c, const Vector& x,
                     const std::vector<Eigen::Index>& free) {
  Vector out = x;
  if (free.empty()) return out;
  const auto nf = static_cast<Eigen::Index>(free.size());
  Matrix Hff(nf, nf);
  Vector rhs(nf);
  Vector fixed = x;
  for (auto i : free) fixed(i) = 0.0;
  const Vector coupling = H * fixed + c;
  for (Eigen::Index a = 0; a < nf; ++a) {
    rhs(a) = -coupling(free[a]);
    for (Eigen::Index b = 0; b < nf; ++b) Hff(a, b) = H(free[a], free[b]);
  }
  const Vector xf = Hff.llt().solve(rhs);
  for (Eigen::Index a = 0; a < nf; ++a) out(free[a]) = xf(a);
  return out;
}

}  // namespace

BoxQpResult solve_box_qp(const Matrix& H, const Vector& c, const Vector& lower,
                         const Vector& upper, const Vector* warm_start) {
  const Eigen::Index n = c.size();
  BoxQpResult result;
  result.x = warm_start ? clip(*warm_start, lower, upper)
                        : clip(Vector::Zero(n), lower, upper);
  Vector& x = result.x;
  const double scale = 1.0 + c.lpNorm<Eigen::Infinity>() +
                       H.cwiseAbs().rowwise().sum().maxCoeff();
  constexpr double kSigma = 1e-4;

  for (int it = 0; it < 500; ++it) {
    result.iterations = it;
    const Vector g = H * x + c;
    const double pg = (x - clip(x - g, lower, upper)).lpNorm<Eigen::Infinity>();
    if (pg <= 1e-14 * scale) {
      result.converged = true;
      break;
    }
    const double eps = std::min(1e-8, pg);
    std::vector<Eigen::Index> free;
    std::vector<bool> is_free(static_cast<size_t>(n), false);
    for (Eigen::Index i = 0; i < n; ++i) {
      const bool at_lower = x(i) <= lower(i) + eps && g(i) > 0.0;
      const bool at_upper = x(i) >= upper(i) - eps && g(i) < 0.0;
      if (!at_lower && !at_upper) {
        free.push_back(i);
        is_free[static_cast<size_t>(i)] = true;
      }
    }
    // Newton on the free block, scaled gradient on the binding block.
    Vector d = solve_on_free(H, g, Vector::Zero(n), free);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!is_free[static_cast<size_t>(i)]) d(i) = -g(i) / H(i, i);
    }
    const double f0 = quad_value(H, c, x);
    double step = 1.0;
    Vector trial = x;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      trial = clip(x + step * d, lower, upper);
      double expected = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        expected += is_free[static_cast<size_t>(i)] ? -step * g(i) * d(i)
                                                    : g(i) * (x(i) - trial(i));
      }
      if (f0 - quad_value(H, c, trial) >= kSigma * expected) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted || (trial - x).lpNorm<Eigen::Infinity>() == 0.0) break;
    x = trial;
  }

  // Polish on the final active set so the result is exact to the linear
  // solve, keeping it only when it stays optimal.
  const Vector g = H * x + c;
  std::vector<Eigen::Index> free;
  for (Eigen::Index i = 0; i < n; ++i) {
    const bool at_lower = x(i) == lower(i) && g(i) >= 0.0;
    const bool at_upper = x(i) == upper(i) && g(i) <= 0.0;
    if (!at_lower && !at_upper) free.push_back(i);
  }
  const Vector polished = solve_on_free(H, c, x, free);
  if (polished.allFinite() &&
      (clip(polished, lower, upper) - polished).lpNorm<Eigen::Infinity>() == 0.0) {
    const Vector gp = H * polished + c;
    const double pg =
        (polished - clip(polished - gp, lower, upper)).lpNorm<Eigen::Infinity>();
    const double pg_old = (x - clip(x - g, lower, upper)).lpNorm<Eigen::Infinity>();
    if (pg <= pg_old) x = polished;
  }
  const Vector gf = H * x + c;
  result.converged =
      (x - clip(x - gf, lower, upper)).lpNorm<Eigen::Infinity>() <= 1e-10 * scale;
  return result;
}

Vector global_box_qp_min(const Matrix& H, const Vector& c, const Vector& lower,
                         const Vector& upper, int max_dim) {
  const Eigen::Index n = c.size();
  if (n > max_dim) {
    throw Error(ErrorCode::kSubproblemNonconvexUnsupported,
                "global box-QP enumeration limited to n <= " +
                    std::to_string(max_dim));
  }
  std::vector<Eigen::Index> open;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!std::isfinite(lower(i)) || !std::isfinite(upper(i))) open.push_back(i);
  }
  if (!open.empty()) {
    const auto no = static_cast<Eigen::Index>(open.size());
    Matrix sub(no, no);
    for (Eigen::Index a = 0; a < no; ++a)
      for (Eigen::Index b = 0; b < no; ++b) sub(a, b) = H(open[a], open[b]);
    Eigen::SelfAdjointEigenSolver<Matrix> es(sub, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -1e-12 * (1.0 + H.cwiseAbs().maxCoeff())) {
      throw Error(ErrorCode::kSubproblemNonconvexUnsupported,
                  "quadratic is unbounded below along an open coordinate");
    }
  }

  const double scale = 1.0 + H.cwiseAbs().maxCoeff() + c.cwiseAbs().maxCoeff();
  long patterns = 1;
  for (Eigen::Index i = 0; i < n; ++i) patterns *= 3;
  Vector best;
  double best_value = std::numeric_limits<double>::infinity();
  for (long code = 0; code < patterns; ++code) {
    Vector x = Vector::Zero(n);
    std::vector<Eigen::Index> free;
    std::vector<int> state(static_cast<size_t>(n));
    bool usable = true;
    long rest = code;
    for (Eigen::Index i = n - 1; i >= 0; --i) {
      state[static_cast<size_t>(i)] = static_cast<int>(rest % 3);
      rest /= 3;
    }
    for (Eigen::Index i = 0; i < n && usable; ++i) {
      switch (state[static_cast<size_t>(i)]) {
        case 0: free.push_back(i); break;
        case 1: usable = std::isfinite(lower(i)); x(i) = lower(i); break;
        default: usable = std::isfinite(upper(i)); x(i) = upper(i); break;
      }
    }
    if (!usable) continue;
    if (!free.empty()) {
      const auto nf = static_cast<Eigen::Index>(free.size());
      Matrix Hff(nf, nf);
      Vector rhs(nf);
      const Vector coupling = H * x + c;
      for (Eigen::Index a = 0; a < nf; ++a) {
        rhs(a) = -coupling(free[a]);
        for (Eigen::Index b = 0; b < nf; ++b) Hff(a, b) = H(free[a], free[b]);
      }
      const Vector xf = Hff.completeOrthogonalDecomposition().solve(rhs);
      if ((Hff * xf - rhs).norm() > 1e-9 * scale) continue;
      for (Eigen::Index a = 0; a < nf; ++a) x(free[a]) = xf(a);
      if ((clip(x, lower, upper) - x).lpNorm<Eigen::Infinity>() > 1e-12 * scale) continue;
      x = clip(x, lower, upper);
    }
    const Vector g = H * x + c;
    bool kkt = true;
    for (Eigen::Index i = 0; i < n && kkt; ++i) {
      const int s = state[static_cast<size_t>(i)];
      if (s == 1 && g(i) < -1e-9 * scale) kkt = false;
      if (s == 2 && g(i) > 1e-9 * scale) kkt = false;
    }
    if (!kkt) continue;
    const double value = 0.5 * x.dot(H * x) + c.dot(x);
    if (value < best_value - 1e-13 * scale) {
      best_value = value;
      best = x;
    }
  }
  if (best.size() == 0) {
    throw Error(ErrorCode::kSubproblemNonconvexUnsupported,
                "global box-QP enumeration found no stationary point");
  }
  return best;
}

}  // namespace meal
