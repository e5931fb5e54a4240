#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "meal/envelope.hpp"
#include "meal/errors.hpp"
#include "meal/experiments.hpp"
#include "../support.hpp"

using namespace meal;

namespace {

Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v(i++) = x;
  return v;
}

template <class F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::kInvalidArgument;
}

Problem half_square_1d() {
  return Problem(LinearConstraint(Matrix::Ones(1, 1), vec({0})),
                 ProxFunction::quadratic(Matrix::Identity(1, 1), vec({0})));
}

}  // namespace

TEST_CASE("augmented Lagrangian on the 2-D example") {
  const EnvelopeContext ctx(build_exp1(), PenaltyPlan{FixedPenalty{50.0}, 0.25, 1.0},
                            SubproblemOptions{SubproblemPath::kDirectQP});
  CHECK(augmented_lagrangian(ctx, vec({1, 0}), vec({0}), 50.0) == doctest::Approx(26.0));
  CHECK(augmented_lagrangian(ctx, vec({2, 0}), vec({0}), 50.0) == kInf);
  CHECK(*ctx.c_gamma_a() == doctest::Approx(0.0625 * 2.0));
}

TEST_CASE("c_{gamma,A} of the 2-D example at gamma = 1/2") {
  const EnvelopeContext ctx(build_exp1(), PenaltyPlan{FixedPenalty{50.0}, 0.5, 1.0},
                            SubproblemOptions{SubproblemPath::kDirectQP},
                            SubproblemModel::kLinearized);
  CHECK(*ctx.c_gamma_a() == doctest::Approx(0.5));
}

TEST_CASE("potential adds the proximal term") {
  const EnvelopeContext ctx(
      Problem(LinearConstraint(Matrix::Ones(1, 1), vec({0})), ProxFunction::zero()),
      PenaltyPlan{FixedPenalty{1.0}, 0.5, 1.0}, SubproblemOptions{});
  CHECK(potential_P(ctx, vec({0}), vec({1}), vec({0}), 1.0) == doctest::Approx(1.0));
}

TEST_CASE("one-dimensional subproblem on every path") {
  for (auto path : {SubproblemPath::kDirectQP, SubproblemPath::kInnerProxGradient}) {
    const EnvelopeContext ctx(half_square_1d(), PenaltyPlan{FixedPenalty{1.0}, 0.5, 1.0},
                              SubproblemOptions{path});
    const auto sub = solve_subproblem(ctx, vec({3}), vec({0}), 1.0);
    CHECK(sub.x(0) == doctest::Approx(1.5).epsilon(1e-10));
    CHECK(sub.residual.norm() <= 1e-9);
  }
}

TEST_CASE("strong convexity certificate of the subproblem") {
  SplitMix64 rng(3);
  const Problem p = build_exp1();
  const EnvelopeContext ctx(p, PenaltyPlan{FixedPenalty{5.0}, 0.25, 1.0},
                            SubproblemOptions{SubproblemPath::kDirectQP});
  const double modulus = 1.0 / 0.25 - p.rho_total();
  for (int t = 0; t < 20; ++t) {
    const Vector z = testing::random_vector(rng, 2, -0.5, 0.5);
    const Vector lambda = testing::random_vector(rng, 1);
    const auto sub = ctx.solve(z, lambda, 5.0);
    const double base = ctx.subproblem_value(sub.x, z, lambda, 5.0);
    Vector d = testing::random_vector(rng, 2);
    d.normalize();
    const Vector probe = sub.x + 1e-3 * d;
    const double value = ctx.subproblem_value(probe, z, lambda, 5.0);
    if (std::isfinite(value)) CHECK(value - base >= 0.5 * modulus * 1e-6 - 1e-9);
  }
}

TEST_CASE("envelope gradient matches finite differences of the envelope") {
  SplitMix64 rng(4);
  const auto d = testing::random_qp_data(rng, 3, 1);
  const Problem p = testing::box_qp(d);
  const double gamma = 0.5 / p.smooth()->lipschitz();
  const double beta = 2.0;
  const EnvelopeContext ctx(p, PenaltyPlan{FixedPenalty{beta}, gamma, 1.0},
                            SubproblemOptions{SubproblemPath::kInnerProxGradient, 1e-12});
  const Vector lambda = testing::random_vector(rng, 1);
  auto envelope = [&](const Vector& z) {
    const auto sub = ctx.solve(z, lambda, beta);
    return ctx.subproblem_value(sub.x, z, lambda, beta);
  };
  for (int t = 0; t < 5; ++t) {
    const Vector z = testing::random_vector(rng, 3, 0.0, 1.0);
    const auto sub = ctx.solve(z, lambda, beta);
    const Vector grad = (z - sub.x) / gamma;
    for (int i = 0; i < 3; ++i) {
      Vector e = Vector::Zero(3);
      e(i) = 1e-5;
      const double fd = (envelope(z + e) - envelope(z - e)) / 2e-5;
      CHECK(std::abs(fd - grad(i)) <= 1e-4 * std::max(1.0, grad.cwiseAbs().maxCoeff()));
    }
  }
}

TEST_CASE("penalty calculus") {
  const PenaltyPlan plan{FixedPenalty{50.0}, 0.5, 1.0};
  CHECK(alpha_from_beta(plan, 50.0, 50.0, 0.5) == doctest::Approx(0.0401));
  CHECK(beta_for_target_alpha(0.04, 0.5, 1.0, 0.5, 0.0) ==
        doctest::Approx(50.1246890528022).epsilon(1e-12));
  const double beta = beta_for_target_alpha(0.04, 0.5, 1.0, 0.5);
  CHECK(alpha_from_beta(plan, beta, beta, 0.5) < 0.04);
  const double hb = horizon_beta(10, 0.3, 0.5, 1.5, 0.5);
  CHECK(alpha_from_beta(PenaltyPlan{FixedPenalty{hb}, 0.5, 1.5}, hb, hb, 0.5) ==
        doctest::Approx(0.03).epsilon(1e-12));
  CHECK(code_of([] { beta_for_target_alpha(-1.0, 0.5, 1.0, 0.5); }) ==
        ErrorCode::kNonPositiveAlpha);
}

TEST_CASE("alpha caps") {
  const Problem zero(LinearConstraint(Matrix::Ones(1, 1), vec({0})), ProxFunction::zero());
  const PenaltyPlan plan{FixedPenalty{1.0}, 0.5, 1.0};
  CHECK(alpha_cap(zero, plan, CapVariant::kMealA) == doctest::Approx(0.25));
  CHECK(alpha_cap(zero, plan, CapVariant::kMealB) == doctest::Approx(1.0 / 6.0));
  CHECK(alpha_cap(zero, plan, CapVariant::kImealA) == doctest::Approx(1.0 / 6.0));
  CHECK(alpha_cap(zero, plan, CapVariant::kImealB) == doctest::Approx(0.125));
  const Problem l1(LinearConstraint(Matrix::Ones(1, 1), vec({0})), ProxFunction::l1(1.0));
  CHECK(code_of([&] { alpha_cap(l1, plan, CapVariant::kMealA); }) ==
        ErrorCode::kMissingMetadata);
  const Problem scad(LinearConstraint(Matrix::Ones(1, 1), vec({0})), ProxFunction::scad(1, 3.7));
  CHECK(code_of([&] { alpha_cap(scad, PenaltyPlan{FixedPenalty{1.0}, 3.0, 1.0},
                                CapVariant::kMealB); }) == ErrorCode::kGammaTooLarge);
}

TEST_CASE("LiMEAL gamma bound and cap") {
  // L_h = 2, ρ_g = 0, η = 1: 2/(2(1 + √(1 + 2))) .
  CHECK(limeal_gamma_bound(0.0, 2.0, 1.0) == doctest::Approx(1.0 / (1.0 + std::sqrt(3.0))));
  const Problem p = build_exp1();
  CHECK(code_of([&] { alpha_cap(p, PenaltyPlan{FixedPenalty{1.0}, 0.5, 1.0},
                                CapVariant::kLimealB); }) == ErrorCode::kGammaTooLarge);
  const PenaltyPlan ok{FixedPenalty{1.0}, 0.2, 1.0};
  const double n = 1.0 - 0.2 * 2.0 - 0.5 * 0.04 * 4.0;
  CHECK(alpha_cap(p, ok, CapVariant::kLimealB) ==
        doctest::Approx(std::min(n / (8 * 0.2 * (1 + 0.04 * 4)), 1.0 / (16 * 0.2))));
}

TEST_CASE("prefix-minimum stationarity") {
  const auto xi = stationarity_meal({3.0, 1.0, 2.0});
  CHECK(xi == std::vector<double>{3.0, 1.0, 1.0});
  CHECK(meal_gradient_norm(vec({1}), vec({1}), vec({0}), vec({0}), 0.5, 1.0, 1.0) == 0.0);
  CHECK(meal_gradient_norm(vec({1}), vec({0}), vec({0}), vec({2}), 0.5, 1.0, 1.0) ==
        doctest::Approx(std::sqrt(4.0 + 4.0)));
}

TEST_CASE("Lyapunov variants") {
  const EnvelopeContext ctx(build_exp1(), PenaltyPlan{FixedPenalty{5.0}, 0.5, 1.0},
                            SubproblemOptions{SubproblemPath::kDirectQP},
                            SubproblemModel::kLinearized);
  const IterateState s{vec({0.2, 0.1}), vec({0.3, 0.0}), vec({0.5}), 3};
  const Vector z_prev = vec({0.1, 0.1});
  const Vector x_prev = vec({0.0, 0.4});
  const double P = potential_P(ctx, s.x, s.z, s.lambda, 5.0);
  const double dz = (s.z - z_prev).squaredNorm();
  const double dx = (s.x - x_prev).squaredNorm();
  const double a = 0.01;
  LyapunovWindow w{&s, &z_prev, &x_prev};
  CHECK(lyapunov(ctx, LyapunovVariant::kMealS1, w, 5.0, a) == doctest::Approx(P + 2 * a * dz));
  CHECK(lyapunov(ctx, LyapunovVariant::kMealS2, w, 5.0, a) -
            lyapunov(ctx, LyapunovVariant::kMealS1, w, 5.0, a) ==
        doctest::Approx(a * dz));
  CHECK(lyapunov(ctx, LyapunovVariant::kImealS2, w, 5.0, a) == doctest::Approx(P + 4 * a * dz));
  CHECK(lyapunov(ctx, LyapunovVariant::kLimealS1, w, 5.0, a) ==
        doctest::Approx(P + 3 * a * (dz + 0.25 * 4.0 * dx)));
  const Vector same_z = s.z;
  const Vector same_x = s.x;
  LyapunovWindow still{&s, &same_z, &same_x};
  CHECK(lyapunov(ctx, LyapunovVariant::kLimealS2, still, 5.0, a) == doctest::Approx(P));
  CHECK(code_of([&] { lyapunov(ctx, LyapunovVariant::kMealS1, LyapunovWindow{&s}, 5.0, a); }) ==
        ErrorCode::kWindowTooShort);
  CHECK(code_of([&] {
          lyapunov(ctx, LyapunovVariant::kLimealS1, LyapunovWindow{&s, &z_prev}, 5.0, a);
        }) == ErrorCode::kWindowTooShort);
}

TEST_CASE("context validation") {
  const Problem p = build_exp1();
  CHECK(code_of([&] {
          EnvelopeContext(p, PenaltyPlan{FixedPenalty{1.0}, 0.5, 1.0}, SubproblemOptions{});
        }) == ErrorCode::kGammaTooLarge);
  CHECK(code_of([&] {
          EnvelopeContext(p, PenaltyPlan{FixedPenalty{1.0}, 0.25, 2.0}, SubproblemOptions{});
        }) == ErrorCode::kInvalidArgument);
  CHECK(code_of([&] {
          EnvelopeContext(p, PenaltyPlan{FixedPenalty{-1.0}, 0.25, 1.0}, SubproblemOptions{});
        }) == ErrorCode::kInvalidArgument);
  const Problem scad(LinearConstraint(Matrix::Ones(1, 1), vec({0})), ProxFunction::scad(1, 3.7));
  CHECK(code_of([&] {
          EnvelopeContext(scad, PenaltyPlan{FixedPenalty{1.0}, 0.5, 1.0},
                          SubproblemOptions{SubproblemPath::kDirectQP});
        }) == ErrorCode::kUnsupportedSubproblemPath);
  CHECK(code_of([&] {
          EnvelopeContext(scad, PenaltyPlan{FixedPenalty{1.0}, 0.5, 1.0}, SubproblemOptions{},
                          SubproblemModel::kLinearized);
        }) == ErrorCode::kNotComposite);
}

TEST_CASE("inner solver handles nonsmooth separable parts") {
  const Problem p(LinearConstraint(Matrix::Ones(1, 2), vec({1})), ProxFunction::scad(1.0, 3.7));
  const EnvelopeContext ctx(p, PenaltyPlan{FixedPenalty{2.0}, 0.5, 1.0}, SubproblemOptions{});
  const auto sub = ctx.solve(vec({2.0, -0.3}), vec({0.1}), 2.0);
  CHECK_FALSE(sub.budget_exhausted);
  CHECK(sub.residual.norm() <= 1e-9);
}
