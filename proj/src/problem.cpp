#include "meal/problem.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <Eigen/QR>

#include "meal/box_qp.hpp"
#include "meal/errors.hpp"
#include "meal/rng.hpp"

namespace meal {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) throw Error(code, what);
}

double sign(double t) { return t > 0.0 ? 1.0 : (t < 0.0 ? -1.0 : 0.0); }

double spectral_norm(const Matrix& Q) {
  if (Q.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (Q + Q.transpose()),
                                           Eigen::EigenvaluesOnly);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

double negative_curvature(const Matrix& Q) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (Q + Q.transpose()),
                                           Eigen::EigenvaluesOnly);
  return std::max(0.0, -es.eigenvalues().minCoeff());
}

void check_quadratic(const QuadraticForm& q) {
  require(q.Q.rows() == q.Q.cols(), ErrorCode::kDimensionMismatch,
          "quadratic form: Q must be square");
  require(q.r.size() == q.Q.rows(), ErrorCode::kDimensionMismatch,
          "quadratic form: r must match Q");
  require(q.Q.allFinite() && q.r.allFinite() && std::isfinite(q.c),
          ErrorCode::kInvalidArgument, "quadratic form: entries must be finite");
}

void check_box(const BoxIndicator& box) {
  require(box.lower.size() == box.upper.size(), ErrorCode::kDimensionMismatch,
          "box: lower and upper must have equal length");
  for (Eigen::Index i = 0; i < box.lower.size(); ++i) {
    require(!std::isnan(box.lower(i)) && !std::isnan(box.upper(i)) &&
                box.lower(i) <= box.upper(i) && box.lower(i) < kInf &&
                box.upper(i) > -kInf,
            ErrorCode::kInvalidArgument, "box: need lower <= upper (nonempty)");
  }
}

bool in_box(const BoxIndicator& box, const Vector& x) {
  return (x.array() >= box.lower.array()).all() &&
         (x.array() <= box.upper.array()).all();
}

double scad_value(double t, const Scad& s) {
  const double at = std::abs(t);
  if (at <= s.lambda) return s.lambda * at;
  if (at <= s.a * s.lambda) {
    return (2.0 * s.a * s.lambda * at - at * at - s.lambda * s.lambda) /
           (2.0 * (s.a - 1.0));
  }
  return s.lambda * s.lambda * (s.a + 1.0) / 2.0;
}

double mcp_value(double t, const Mcp& p) {
  const double at = std::abs(t);
  if (at <= p.a * p.lambda) return p.lambda * at - at * at / (2.0 * p.a);
  return p.a * p.lambda * p.lambda / 2.0;
}

double scad_prox(double v, double gamma, const Scad& s) {
  const double av = std::abs(v);
  if (av <= s.lambda * (1.0 + gamma)) {
    return sign(v) * std::max(av - gamma * s.lambda, 0.0);
  }
  if (av <= s.a * s.lambda) {
    return sign(v) * ((s.a - 1.0) * av - gamma * s.a * s.lambda) /
           (s.a - 1.0 - gamma);
  }
  return v;
}

double mcp_prox(double v, double gamma, const Mcp& p) {
  const double av = std::abs(v);
  if (av <= gamma * p.lambda) return 0.0;
  if (av <= p.a * p.lambda) {
    return sign(v) * (av - gamma * p.lambda) / (1.0 - gamma / p.a);
  }
  return v;
}

double soft_threshold(double v, double tau) {
  return sign(v) * std::max(std::abs(v) - tau, 0.0);
}

}  // namespace

// ---------------------------------------------------------------------------
// ProxFunction

ProxFunction::ProxFunction(ProxKind kind, double rho)
    : kind_(std::move(kind)), rho_(rho) {}

ProxFunction ProxFunction::zero() { return ProxFunction(Zero{}, 0.0); }

ProxFunction ProxFunction::quadratic(Matrix Q, Vector r, double c) {
  QuadraticForm q{std::move(Q), std::move(r), c};
  check_quadratic(q);
  q.Q = 0.5 * (q.Q + q.Q.transpose());
  const double rho = negative_curvature(q.Q);
  return ProxFunction(std::move(q), rho);
}

ProxFunction ProxFunction::box(Vector lower, Vector upper) {
  BoxIndicator b{std::move(lower), std::move(upper)};
  check_box(b);
  require(b.lower.size() >= 1, ErrorCode::kDimensionMismatch, "box: empty");
  return ProxFunction(std::move(b), 0.0);
}

ProxFunction ProxFunction::l1(double weight) {
  require(weight >= 0.0 && std::isfinite(weight), ErrorCode::kInvalidArgument,
          "l1: weight must be finite and nonnegative");
  return ProxFunction(L1{weight}, 0.0);
}

ProxFunction ProxFunction::scad(double lambda, double a) {
  require(lambda > 0.0 && a > 2.0 && std::isfinite(lambda) && std::isfinite(a),
          ErrorCode::kInvalidArgument, "scad: need lambda > 0 and a > 2");
  return ProxFunction(Scad{lambda, a}, 1.0 / (a - 1.0));
}

ProxFunction ProxFunction::mcp(double lambda, double a) {
  require(lambda > 0.0 && a > 0.0 && std::isfinite(lambda) && std::isfinite(a),
          ErrorCode::kInvalidArgument, "mcp: need lambda > 0 and a > 0");
  return ProxFunction(Mcp{lambda, a}, 1.0 / a);
}

ProxFunction ProxFunction::pointwise_min(std::vector<QuadraticPiece> pieces) {
  require(!pieces.empty(), ErrorCode::kInvalidArgument,
          "pointwise_min: need at least one piece");
  const auto n = pieces.front().quad.Q.rows();
  double rho = 0.0;
  for (auto& piece : pieces) {
    check_quadratic(piece.quad);
    check_box(piece.box);
    require(piece.quad.Q.rows() == n && piece.box.lower.size() == n,
            ErrorCode::kDimensionMismatch,
            "pointwise_min: pieces must share one dimension");
    piece.quad.Q = 0.5 * (piece.quad.Q + piece.quad.Q.transpose());
    rho = std::max(rho, 2.0 * spectral_norm(piece.quad.Q));
  }
  return ProxFunction(PointwiseMin{std::move(pieces)}, rho);
}

ProxFunction ProxFunction::with_implicit_class(ImplicitClass cls) const {
  ProxFunction out = *this;
  out.implicit_class_ = cls;
  return out;
}

ProxFunction ProxFunction::with_weak_convexity(double rho) const {
  require(rho >= rho_ && std::isfinite(rho), ErrorCode::kInvalidArgument,
          "weak convexity modulus may only be loosened");
  ProxFunction out = *this;
  out.rho_ = rho;
  return out;
}

bool ProxFunction::is_separable() const {
  return std::holds_alternative<Zero>(kind_) ||
         std::holds_alternative<L1>(kind_) ||
         std::holds_alternative<Scad>(kind_) ||
         std::holds_alternative<Mcp>(kind_);
}

std::optional<Eigen::Index> ProxFunction::dimension() const {
  return std::visit(
      Overloaded{
          [](const QuadraticForm& q) -> std::optional<Eigen::Index> {
            return q.Q.rows();
          },
          [](const BoxIndicator& b) -> std::optional<Eigen::Index> {
            return b.lower.size();
          },
          [](const PointwiseMin& p) -> std::optional<Eigen::Index> {
            return p.pieces.front().quad.Q.rows();
          },
          [](const auto&) -> std::optional<Eigen::Index> {
            return std::nullopt;
          }},
      kind_);
}

double ProxFunction::gamma_limit() const {
  return rho_ == 0.0 ? kInf : 1.0 / rho_;
}

double ProxFunction::scalar_value(double t) const {
  return std::visit(
      Overloaded{[](const Zero&) { return 0.0; },
                 [t](const L1& l) { return l.weight * std::abs(t); },
                 [t](const Scad& s) { return scad_value(t, s); },
                 [t](const Mcp& p) { return mcp_value(t, p); },
                 [](const auto&) -> double {
                   throw Error(ErrorCode::kInvalidArgument,
                               "scalar_value: kind is not separable");
                 }},
      kind_);
}

double ProxFunction::value(const Vector& x) const {
  if (const auto dim = dimension()) {
    require(x.size() == *dim, ErrorCode::kDimensionMismatch,
            "prox function: dimension mismatch");
  }
  return std::visit(
      Overloaded{
          [](const Zero&) { return 0.0; },
          [&](const QuadraticForm& q) { return q.value(x); },
          [&](const BoxIndicator& b) { return in_box(b, x) ? 0.0 : kInf; },
          [&](const PointwiseMin& p) {
            double best = kInf;
            for (const auto& piece : p.pieces) {
              if (in_box(piece.box, x)) best = std::min(best, piece.quad.value(x));
            }
            return best;
          },
          [&](const auto&) {
            double total = 0.0;
            for (Eigen::Index i = 0; i < x.size(); ++i) total += scalar_value(x(i));
            return total;
          }},
      kind_);
}

Vector ProxFunction::prox(double gamma, const Vector& v) const {
  require(gamma > 0.0 && std::isfinite(gamma), ErrorCode::kInvalidArgument,
          "prox: gamma must be positive");
  require(gamma < gamma_limit(), ErrorCode::kGammaTooLarge,
          "prox: gamma must be below 1/rho = " + std::to_string(gamma_limit()));
  require(v.allFinite(), ErrorCode::kInvalidArgument, "prox: v must be finite");
  if (const auto dim = dimension()) {
    require(v.size() == *dim, ErrorCode::kDimensionMismatch,
            "prox: dimension mismatch");
  }
  return std::visit(
      Overloaded{
          [&](const Zero&) -> Vector { return v; },
          [&](const QuadraticForm& q) -> Vector {
            const Matrix M =
                Matrix::Identity(v.size(), v.size()) + gamma * q.Q;
            return M.partialPivLu().solve(v - gamma * q.r);
          },
          [&](const BoxIndicator& b) -> Vector { return clip(v, b.lower, b.upper); },
          [&](const L1& l) -> Vector {
            return v.unaryExpr(
                [&](double t) { return soft_threshold(t, gamma * l.weight); });
          },
          [&](const Scad& s) -> Vector {
            return v.unaryExpr([&](double t) { return scad_prox(t, gamma, s); });
          },
          [&](const Mcp& p) -> Vector {
            return v.unaryExpr([&](double t) { return mcp_prox(t, gamma, p); });
          },
          [&](const PointwiseMin& p) -> Vector {
            const auto n = v.size();
            Vector best_x;
            double best = kInf;
            for (const auto& piece : p.pieces) {
              const Matrix H =
                  piece.quad.Q + Matrix::Identity(n, n) / gamma;
              const Vector c = piece.quad.r - v / gamma;
              const auto sol = solve_box_qp(H, c, piece.box.lower, piece.box.upper);
              const double val = piece.quad.value(sol.x) +
                                 (sol.x - v).squaredNorm() / (2.0 * gamma);
              // Strict comparison: the lowest-index piece wins exact ties.
              if (val < best) {
                best = val;
                best_x = sol.x;
              }
            }
            return best_x;
          }},
      kind_);
}

std::optional<double> implicit_lipschitz(const ProxFunction& g) {
  if (const auto* l = std::get_if<LipschitzSubgradient>(&g.implicit_class())) {
    return l->lipschitz;
  }
  if (std::holds_alternative<Zero>(g.kind())) return 0.0;
  if (const auto* q = std::get_if<QuadraticForm>(&g.kind())) {
    return spectral_norm(q->Q);
  }
  return std::nullopt;
}

Vector prox(const ProxFunction& g, double gamma, const Vector& v) {
  return g.prox(gamma, v);
}

MoreauResult moreau_value_grad(const ProxFunction& g, double gamma,
                               const Vector& v) {
  Vector p = g.prox(gamma, v);
  const double value = g.value(p) + (p - v).squaredNorm() / (2.0 * gamma);
  Vector grad = (v - p) / gamma;
  return {value, std::move(grad), std::move(p)};
}

// ---------------------------------------------------------------------------
// SmoothFunction

SmoothFunction::SmoothFunction(ValueFn value, GradientFn gradient,
                               double lipschitz)
    : value_(std::move(value)), gradient_(std::move(gradient)),
      lipschitz_(lipschitz) {
  require(lipschitz_ >= 0.0 && std::isfinite(lipschitz_),
          ErrorCode::kInvalidArgument,
          "smooth function: Lipschitz constant must be finite and >= 0");
}

SmoothFunction SmoothFunction::quadratic(Matrix Q, Vector r, double c) {
  QuadraticForm q{std::move(Q), std::move(r), c};
  check_quadratic(q);
  q.Q = 0.5 * (q.Q + q.Q.transpose());
  SmoothFunction out([q](const Vector& x) { return q.value(x); },
                     [q](const Vector& x) { return q.gradient(x); },
                     spectral_norm(q.Q));
  out.quad_ = std::move(q);
  return out;
}

// ---------------------------------------------------------------------------
// LinearConstraint / Problem

LinearConstraint::LinearConstraint(Matrix A, Vector b)
    : A_(std::move(A)), b_(std::move(b)) {
  require(A_.rows() >= 1 && A_.cols() >= 1, ErrorCode::kDimensionMismatch,
          "constraint: A must be at least 1x1");
  require(b_.size() == A_.rows(), ErrorCode::kDimensionMismatch,
          "constraint: b must have one entry per row of A");
  require(A_.allFinite() && b_.allFinite(), ErrorCode::kInvalidArgument,
          "constraint: entries must be finite");
}

double LinearConstraint::feasibility_probe() const {
  const Vector x_ls = A_.completeOrthogonalDecomposition().solve(b_);
  return (A_ * x_ls - b_).norm();
}

Problem::Problem(LinearConstraint constraint, ProxFunction prox_part)
    : constraint_(std::move(constraint)), prox_part_(std::move(prox_part)) {
  if (const auto dim = prox_part_.dimension()) {
    require(*dim == n(), ErrorCode::kDimensionMismatch,
            "problem: prox part dimension must equal columns of A");
  }
}

Problem::Problem(LinearConstraint constraint, SmoothFunction smooth,
                 ProxFunction prox_part)
    : Problem(std::move(constraint), std::move(prox_part)) {
  if (const auto& q = smooth.quadratic_form()) {
    require(q->Q.rows() == n(), ErrorCode::kDimensionMismatch,
            "problem: smooth part dimension must equal columns of A");
  }
  smooth_ = std::move(smooth);
}

double Problem::rho_total() const {
  return prox_part_.weak_convexity() + (smooth_ ? smooth_->lipschitz() : 0.0);
}

Problem Problem::with_objective_class(ImplicitClass cls) const {
  Problem out = *this;
  out.objective_class_ = cls;
  return out;
}

std::optional<double> Problem::objective_lipschitz() const {
  if (const auto* l = std::get_if<LipschitzSubgradient>(&objective_class_)) {
    return l->lipschitz;
  }
  const double lh = smooth_ ? smooth_->lipschitz() : 0.0;
  if (std::holds_alternative<Zero>(prox_part_.kind())) return lh;
  if (const auto* q = std::get_if<QuadraticForm>(&prox_part_.kind())) {
    return lh + spectral_norm(q->Q);
  }
  if (!smooth_) {
    if (const auto* l =
            std::get_if<LipschitzSubgradient>(&prox_part_.implicit_class())) {
      return l->lipschitz;
    }
  }
  return std::nullopt;
}

double Problem::objective(const Vector& x) const {
  require(x.size() == n(), ErrorCode::kDimensionMismatch,
          "objective: dimension mismatch");
  const double g = prox_part_.value(x);
  if (!std::isfinite(g)) return g;
  return g + (smooth_ ? smooth_->value(x) : 0.0);
}

Vector Problem::smooth_gradient(const Vector& x) const {
  return smooth_ ? smooth_->gradient(x) : Vector::Zero(n());
}

std::optional<QuadraticForm> Problem::quadratic_objective() const {
  QuadraticForm q{Matrix::Zero(n(), n()), Vector::Zero(n()), 0.0};
  if (smooth_) {
    if (!smooth_->quadratic_form()) return std::nullopt;
    q.Q += smooth_->quadratic_form()->Q;
    q.r += smooth_->quadratic_form()->r;
    q.c += smooth_->quadratic_form()->c;
  }
  if (const auto* g = std::get_if<QuadraticForm>(&prox_part_.kind())) {
    q.Q += g->Q;
    q.r += g->r;
    q.c += g->c;
  } else if (!std::holds_alternative<Zero>(prox_part_.kind()) &&
             !std::holds_alternative<BoxIndicator>(prox_part_.kind())) {
    return std::nullopt;
  }
  return q;
}

double objective_value(const Problem& p, const Vector& x) {
  return p.objective(x);
}

double smallest_positive_eigenvalue(const Matrix& M, double rank_tol) {
  require(M.rows() == M.cols() && M.rows() >= 1, ErrorCode::kDimensionMismatch,
          "smallest_positive_eigenvalue: matrix must be square");
  require((M - M.transpose()).cwiseAbs().maxCoeff() <= 1e-12,
          ErrorCode::kNotSymmetric,
          "smallest_positive_eigenvalue: matrix must be symmetric");
  Eigen::SelfAdjointEigenSolver<Matrix> es(M, Eigen::EigenvaluesOnly);
  const Vector& ev = es.eigenvalues();
  const double largest = ev.maxCoeff();
  if (largest <= 0.0) {
    throw Error(ErrorCode::kAllZeroMatrix,
                "smallest_positive_eigenvalue: no positive eigenvalue");
  }
  const double threshold = rank_tol * largest;
  double best = kInf;
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev(i) > threshold) best = std::min(best, ev(i));
  }
  return best;
}

ImplicitProbe probe_implicit_class(const ProxFunction& g, double gamma,
                                   Eigen::Index dim, int samples,
                                   std::uint64_t seed, double scale) {
  SplitMix64 rng(seed);
  auto draw = [&] {
    Vector w(dim);
    for (Eigen::Index i = 0; i < dim; ++i) w(i) = rng.uniform(-scale, scale);
    return w;
  };
  ImplicitProbe out{0.0, 0.0};
  for (int s = 0; s < samples; ++s) {
    const auto a = moreau_value_grad(g, gamma, draw());
    const auto b = moreau_value_grad(g, gamma, draw());
    out.bound_estimate =
        std::max({out.bound_estimate, a.gradient.norm(), b.gradient.norm()});
    const double du = (a.prox_point - b.prox_point).norm();
    if (du > 1e-9) {
      out.lipschitz_estimate = std::max(
          out.lipschitz_estimate, (a.gradient - b.gradient).norm() / du);
    }
  }
  return out;
}

}  // namespace meal
