#include "meal/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/QR>

#include "meal/errors.hpp"
#include "meal/rng.hpp"

namespace meal {

namespace {

void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) throw Error(code, what);
}

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

double box_coordinate_residual(double x, double w, double lower, double upper,
                               int* active) {
  const double tol = 1e-10;
  const bool at_lower = std::isfinite(lower) && x <= lower + tol * (1.0 + std::abs(lower));
  const bool at_upper = std::isfinite(upper) && x >= upper - tol * (1.0 + std::abs(upper));
  if (active) *active = at_lower ? -1 : (at_upper ? 1 : 0);
  if (at_lower && at_upper) return 0.0;
  if (at_lower) return std::min(w, 0.0);
  if (at_upper) return std::max(w, 0.0);
  return w;
}

// Minimal |w + s| over s in the limiting subdifferential of a separable kind at t.
double separable_residual(const ProxKind& kind, double t, double w) {
  auto interval_at_zero = [&](double radius) {
    return std::max(std::abs(w) - radius, 0.0);
  };
  return std::visit(
      Overloaded{
          [&](const Zero&) { return std::abs(w); },
          [&](const L1& l) {
            if (t == 0.0) return interval_at_zero(l.weight);
            return std::abs(w + l.weight * (t > 0 ? 1.0 : -1.0));
          },
          [&](const Scad& s) {
            if (t == 0.0) return interval_at_zero(s.lambda);
            const double a = std::abs(t);
            double d = 0.0;
            if (a <= s.lambda) {
              d = s.lambda;
            } else if (a <= s.a * s.lambda) {
              d = (s.a * s.lambda - a) / (s.a - 1.0);
            }
            return std::abs(w + d * (t > 0 ? 1.0 : -1.0));
          },
          [&](const Mcp& p) {
            if (t == 0.0) return interval_at_zero(p.lambda);
            const double a = std::abs(t);
            const double d = a <= p.a * p.lambda ? p.lambda - a / p.a : 0.0;
            return std::abs(w + d * (t > 0 ? 1.0 : -1.0));
          },
          [&](const auto&) -> double {
            throw Error(ErrorCode::kInvalidArgument, "kind is not separable");
          }},
      kind);
}

struct LineFit {
  double slope = 0.0;
  double r2 = 0.0;
};

LineFit least_squares_line(const std::vector<double>& xs, const std::vector<double>& ys) {
  const double n = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  LineFit fit;
  fit.slope = sxx > 0.0 ? sxy / sxx : 0.0;
  fit.r2 = (sxx > 0.0 && syy > 0.0) ? (sxy * sxy) / (sxx * syy) : 1.0;
  return fit;
}

}  // namespace

double grid_prox_oracle(const std::function<double(double)>& g, double gamma,
                        double v, double range, double step) {
  require(gamma > 0.0 && range > 0.0 && step > 0.0, ErrorCode::kInvalidArgument,
          "grid_prox_oracle: gamma, range and step must be positive");
  auto objective = [&](double t) { return g(t) + (t - v) * (t - v) / (2.0 * gamma); };
  const auto count = static_cast<long>(std::llround(2.0 * range / step));
  long best = 0;
  double best_value = objective(-range);
  for (long i = 1; i <= count; ++i) {
    const double value = objective(-range + static_cast<double>(i) * step);
    if (value < best_value) {
      best_value = value;
      best = i;
    }
  }
  if (best == 0 || best == count) {
    throw Error(ErrorCode::kRangeTooSmall,
                "grid_prox_oracle: argmin on the boundary of the search range");
  }
  const double center = -range + static_cast<double>(best) * step;
  double lo = center - step;
  double hi = center + step;
  for (int it = 0; it < 200 && hi - lo > 1e-15 * (1.0 + std::abs(center)); ++it) {
    const double m1 = lo + (hi - lo) / 3.0;
    const double m2 = hi - (hi - lo) / 3.0;
    if (objective(m1) <= objective(m2)) {
      hi = m2;
    } else {
      lo = m1;
    }
  }
  const double refined = 0.5 * (lo + hi);
  return objective(refined) <= best_value ? refined : center;
}

ActiveSetResult active_set_qp_oracle(const Matrix& Q_in, const Vector& r,
                                     const Matrix& A, const Vector& b,
                                     const BoxIndicator& box, int max_dim) {
  const auto n = Q_in.rows();
  const auto m = A.rows();
  require(Q_in.cols() == n && r.size() == n && A.cols() == n && b.size() == m &&
              box.lower.size() == n && box.upper.size() == n,
          ErrorCode::kDimensionMismatch, "active_set_qp_oracle: dimension mismatch");
  require(n <= max_dim, ErrorCode::kSubproblemNonconvexUnsupported,
          "active_set_qp_oracle: n exceeds the enumeration cap");
  const Matrix Q = 0.5 * (Q_in + Q_in.transpose());
  const double scale = 1.0 + Q.cwiseAbs().maxCoeff() + r.cwiseAbs().maxCoeff() +
                       (m > 0 ? A.cwiseAbs().maxCoeff() + b.cwiseAbs().maxCoeff() : 0.0);
  const double tol = 1e-8;

  ActiveSetResult result;
  long total = 1;
  for (Eigen::Index i = 0; i < n; ++i) total *= 3;
  std::vector<int> pattern(static_cast<std::size_t>(n));
  for (long code = 0; code < total; ++code) {
    long c = code;
    bool admissible = true;
    // Lexicographic order: the first coordinate varies slowest.
    for (Eigen::Index i = n - 1; i >= 0; --i) {
      pattern[static_cast<std::size_t>(i)] = static_cast<int>(c % 3);
      c /= 3;
    }
    Vector x = Vector::Zero(n);
    std::vector<Eigen::Index> free;
    for (Eigen::Index i = 0; i < n; ++i) {
      const int p = pattern[static_cast<std::size_t>(i)];
      if (p == 0) {
        free.push_back(i);
      } else {
        const double bound = p == 1 ? box.lower(i) : box.upper(i);
        if (!std::isfinite(bound)) admissible = false;
        x(i) = bound;
      }
    }
    if (!admissible) continue;
    const auto f = static_cast<Eigen::Index>(free.size());
    Matrix K = Matrix::Zero(f + m, f + m);
    Vector rhs(f + m);
    const Vector fixed_grad = Q * x + r;
    const Vector fixed_res = A * x - b;
    for (Eigen::Index i = 0; i < f; ++i) {
      for (Eigen::Index j = 0; j < f; ++j) K(i, j) = Q(free[i], free[j]);
      for (Eigen::Index j = 0; j < m; ++j) {
        K(i, f + j) = A(j, free[i]);
        K(f + j, i) = A(j, free[i]);
      }
      rhs(i) = -fixed_grad(free[i]);
    }
    for (Eigen::Index j = 0; j < m; ++j) rhs(f + j) = -fixed_res(j);
    Vector sol = Vector::Zero(f + m);
    if (f + m > 0) {
      Eigen::CompleteOrthogonalDecomposition<Matrix> cod(K);
      cod.setThreshold(1e-12);
      if (cod.rank() < f + m) ++result.singular_patterns;
      sol = cod.solve(rhs);
      if ((K * sol - rhs).norm() > tol * scale * (1.0 + sol.norm())) continue;
    }
    for (Eigen::Index i = 0; i < f; ++i) x(free[i]) = sol(i);
    const Vector lambda = sol.tail(m);

    bool ok = (A * x - b).norm() <= tol * scale;
    const Vector w = Q * x + r + A.transpose() * lambda;
    for (Eigen::Index i = 0; ok && i < n; ++i) {
      const double slack = tol * scale * (1.0 + std::abs(x(i)));
      if (x(i) < box.lower(i) - slack || x(i) > box.upper(i) + slack) ok = false;
      const int p = pattern[static_cast<std::size_t>(i)];
      if (p == 1 && w(i) < -tol * scale) ok = false;
      if (p == 2 && w(i) > tol * scale) ok = false;
    }
    if (!ok) continue;
    const bool duplicate = std::any_of(
        result.points.begin(), result.points.end(), [&](const QpStationaryPoint& q) {
          return (q.x - x).norm() <= 1e-9 * (1.0 + x.norm());
        });
    if (duplicate) continue;
    result.points.push_back({x, lambda, 0.5 * x.dot(Q * x) + r.dot(x)});
  }
  return result;
}

KktReport kkt_residual(const Problem& problem, const Vector& x, const Vector& lambda) {
  require(x.size() == problem.n() && lambda.size() == problem.m(),
          ErrorCode::kDimensionMismatch, "kkt_residual: dimension mismatch");
  KktReport report;
  report.feasibility = problem.constraint().residual(x);
  report.active.assign(static_cast<std::size_t>(x.size()), 0);
  const Vector w = problem.smooth_gradient(x) + problem.A().transpose() * lambda;
  const ProxFunction& g = problem.prox_part();

  report.stationarity_residual = std::visit(
      Overloaded{
          [&](const QuadraticForm& q) { return (w + q.gradient(x)).norm(); },
          [&](const BoxIndicator& box) {
            Vector res(x.size());
            for (Eigen::Index i = 0; i < x.size(); ++i) {
              if (x(i) < box.lower(i) - 1e-10 || x(i) > box.upper(i) + 1e-10) return kInf;
              res(i) = box_coordinate_residual(x(i), w(i), box.lower(i), box.upper(i),
                                               &report.active[static_cast<std::size_t>(i)]);
            }
            return res.norm();
          },
          [&](const PointwiseMin& pm) {
            double best_value = kInf;
            for (const auto& piece : pm.pieces) {
              if ((x.array() >= piece.box.lower.array()).all() &&
                  (x.array() <= piece.box.upper.array()).all()) {
                best_value = std::min(best_value, piece.quad.value(x));
              }
            }
            double best = kInf;
            int active_pieces = 0;
            for (const auto& piece : pm.pieces) {
              const bool inside = (x.array() >= piece.box.lower.array()).all() &&
                                  (x.array() <= piece.box.upper.array()).all();
              if (!inside) continue;
              const double value = piece.quad.value(x);
              if (value > best_value + 1e-9 * (1.0 + std::abs(best_value))) continue;
              ++active_pieces;
              const Vector wp = w + piece.quad.gradient(x);
              Vector res(x.size());
              for (Eigen::Index i = 0; i < x.size(); ++i) {
                res(i) = box_coordinate_residual(x(i), wp(i), piece.box.lower(i),
                                                 piece.box.upper(i), nullptr);
              }
              best = std::min(best, res.norm());
            }
            report.conservative = active_pieces > 1;
            return best;
          },
          [&](const auto&) {
            Vector res(x.size());
            for (Eigen::Index i = 0; i < x.size(); ++i) {
              res(i) = separable_residual(g.kind(), x(i), w(i));
            }
            return res.norm();
          }},
      g.kind());
  return report;
}

double finite_diff_check(const std::function<double(const Vector&)>& field,
                         const std::function<Vector(const Vector&)>& gradient,
                         const Vector& point, double h) {
  require(h > 0.0, ErrorCode::kInvalidArgument, "finite_diff_check: h must be positive");
  const Vector grad = gradient(point);
  require(grad.size() == point.size(), ErrorCode::kDimensionMismatch,
          "finite_diff_check: gradient dimension mismatch");
  const double denom = std::max(grad.cwiseAbs().maxCoeff(), 1.0);
  double worst = 0.0;
  Vector probe = point;
  for (Eigen::Index i = 0; i < point.size(); ++i) {
    probe(i) = point(i) + h;
    const double up = field(probe);
    probe(i) = point(i) - h;
    const double down = field(probe);
    probe(i) = point(i);
    const double fd = (up - down) / (2.0 * h);
    worst = std::max(worst, std::abs(fd - grad(i)) / denom);
  }
  return worst;
}

std::string to_string(RateKind kind) {
  return kind == RateKind::kLinear ? "Linear" : "Sublinear";
}

RateFit rate_fit(const std::vector<double>& values, int burn_in, int first_k) {
  require(burn_in >= 0, ErrorCode::kInvalidArgument, "rate_fit: burn_in must be >= 0");
  std::vector<double> ks, logk, logv_lin, logv_sub;
  for (std::size_t i = static_cast<std::size_t>(burn_in); i < values.size(); ++i) {
    const double v = values[i];
    if (!(v > 0.0) || !std::isfinite(v)) continue;
    const double k = static_cast<double>(first_k) + static_cast<double>(i);
    ks.push_back(k);
    logv_lin.push_back(std::log(v));
    if (k >= 1.0) {
      logk.push_back(std::log(k));
      logv_sub.push_back(std::log(v));
    }
  }
  if (ks.size() < 20 || logk.size() < 20) {
    throw Error(ErrorCode::kInsufficientData,
                "rate_fit: need at least 20 positive post-burn-in values");
  }
  const LineFit lin = least_squares_line(ks, logv_lin);
  const LineFit sub = least_squares_line(logk, logv_sub);
  RateFit fit;
  fit.linear_r2 = lin.r2;
  fit.sublinear_r2 = sub.r2;
  if (lin.r2 >= sub.r2) {
    fit.kind = RateKind::kLinear;
    fit.parameter = std::exp(lin.slope);
    fit.r2 = lin.r2;
  } else {
    fit.kind = RateKind::kSublinear;
    fit.parameter = sub.slope;
    fit.r2 = sub.r2;
  }
  return fit;
}

RateFit rate_fit(const Trace& trace, std::string_view column, int burn_in) {
  std::vector<double> values;
  values.reserve(trace.rows.size());
  for (const auto& row : trace.rows) {
    if (column == "objective") {
      values.push_back(row.objective);
    } else if (column == "feasibility") {
      values.push_back(row.feasibility);
    } else if (column == "stationarity") {
      values.push_back(row.stationarity);
    } else if (column == "lambda_norm") {
      values.push_back(row.lambda_norm);
    } else if (column == "xz_gap") {
      values.push_back(row.xz_gap);
    } else {
      throw Error(ErrorCode::kInvalidArgument,
                  "rate_fit: unknown column '" + std::string(column) + "'");
    }
  }
  return rate_fit(values, burn_in, trace.rows.empty() ? 0 : trace.rows.front().k);
}

std::vector<CheckResult> certification_suite(std::uint64_t seed) {
  std::vector<CheckResult> results;
  SplitMix64 rng(seed);
  auto format = [](double v) {
    std::ostringstream os;
    os.precision(3);
    os << std::scientific << v;
    return os.str();
  };

  struct Named {
    std::string name;
    ProxFunction g;
  };
  const std::vector<Named> separable = {
      {"l1", ProxFunction::l1(0.7)},
      {"scad", ProxFunction::scad(1.0, 3.7)},
      {"mcp", ProxFunction::mcp(1.0, 3.0)},
      {"zero", ProxFunction::zero()},
  };

  for (const auto& [name, g] : separable) {
    double worst = 0.0;
    const double gamma_hi = std::min(2.0, 0.95 * g.gamma_limit());
    for (int i = 0; i < 1000; ++i) {
      const double gamma = rng.uniform(0.05, gamma_hi);
      const double v = rng.uniform(-6.0, 6.0);
      const double oracle = grid_prox_oracle(
          [&g](double t) { return g.scalar_value(t); }, gamma, v, 10.0, 1e-3);
      const double closed = g.prox(gamma, Vector::Constant(1, v))(0);
      worst = std::max(worst, std::abs(oracle - closed));
    }
    results.push_back({"prox-grid-" + name, worst <= 1e-3, "max abs error " + format(worst)});
  }

  {
    double worst_step = 0.0;
    double worst_fd = 0.0;
    for (const auto& [name, g] : separable) {
      const double gamma = std::min(0.5, 0.5 * g.gamma_limit());
      for (int i = 0; i < 100; ++i) {
        Vector v(3);
        for (int j = 0; j < 3; ++j) v(j) = rng.uniform(-6.0, 6.0);
        const MoreauResult mr = moreau_value_grad(g, gamma, v);
        const double lhs = (mr.prox_point - v).norm();
        const double rhs = gamma * mr.gradient.norm();
        worst_step = std::max(worst_step, std::abs(lhs - rhs) / std::max(1.0, lhs));
        worst_fd = std::max(
            worst_fd,
            finite_diff_check(
                [&](const Vector& u) { return moreau_value_grad(g, gamma, u).value; },
                [&](const Vector& u) { return moreau_value_grad(g, gamma, u).gradient; },
                v));
      }
    }
    results.push_back({"step-identity", worst_step <= 1e-10, "max rel error " + format(worst_step)});
    results.push_back({"envelope-gradient-fd", worst_fd <= 1e-4, "max rel error " + format(worst_fd)});
  }

  {
    double worst = 0.0;
    std::size_t points = 0;
    for (int trial = 0; trial < 5; ++trial) {
      const int n = 4;
      const int m = 2;
      Matrix G(n, n);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) G(i, j) = rng.uniform(-1.0, 1.0);
      const Matrix Q = 0.5 * (G + G.transpose());
      Vector r(n);
      for (int i = 0; i < n; ++i) r(i) = rng.uniform(-1.0, 1.0);
      Matrix A(m, n);
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) A(i, j) = rng.uniform(-1.0, 1.0);
      Vector xt(n);
      for (int i = 0; i < n; ++i) xt(i) = rng.uniform(0.0, 1.0);
      const Vector b = A * xt;
      const BoxIndicator box{Vector::Zero(n), Vector::Ones(n)};
      const auto oracle = active_set_qp_oracle(Q, r, A, b, box);
      const Problem problem(LinearConstraint(A, b), SmoothFunction::quadratic(Q, r),
                            ProxFunction::box(box.lower, box.upper));
      for (const auto& pt : oracle.points) {
        const auto report = kkt_residual(problem, pt.x, pt.lambda);
        worst = std::max({worst, report.stationarity_residual, report.feasibility});
        ++points;
      }
    }
    results.push_back({"active-set-kkt", points > 0 && worst <= 1e-6,
                       std::to_string(points) + " points, max residual " + format(worst)});
  }

  {
    std::vector<double> geometric, power;
    for (int k = 0; k < 100; ++k) {
      geometric.push_back(std::pow(0.9, k));
      power.push_back(std::pow(static_cast<double>(k + 1), -0.5));
    }
    const RateFit lin = rate_fit(geometric, 5);
    const RateFit sub = rate_fit(power, 5, 1);
    results.push_back({"rate-fit-linear",
                       lin.kind == RateKind::kLinear && std::abs(lin.parameter - 0.9) <= 0.01 &&
                           lin.r2 >= 0.999,
                       "tau " + format(lin.parameter)});
    results.push_back({"rate-fit-sublinear",
                       sub.kind == RateKind::kSublinear &&
                           std::abs(sub.parameter + 0.5) <= 0.05,
                       "power " + format(sub.parameter)});
  }
  return results;
}

}  // namespace meal
