#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "l0opt/functions.hpp"
#include "oracles.hpp"

using namespace l0opt;

namespace {

struct Quad {
  SigmaAlgebra alg{ProbSpace::uniform(4), {{0, 1}, {2, 3}}};
  ModuleElement x{alg, (Eigen::MatrixXd(4, 1) << 1, 2, 3, 4).finished()};
};

StableConvexSet unit_box(const SigmaAlgebra& alg, int d) {
  const int n = alg.space().size();
  return StableConvexSet::box(alg, Eigen::MatrixXd::Zero(n, d), Eigen::MatrixXd::Ones(n, d));
}

/// Random smooth catalog member (quadratic / p-norm power / separable mix).
StableFunction random_smooth_function(const SigmaAlgebra& alg, int d, Rng& rng) {
  const double pick = rng.uniform();
  if (pick < 0.45) {
    AtomLayout layout(alg, d);
    std::vector<Eigen::MatrixXd> forms;
    for (int a = 0; a < alg.atom_count(); ++a) {
      const int n = layout.stacked_dim(a);
      Eigen::MatrixXd R(n, n);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) R(i, j) = rng.normal();
      forms.push_back(R.transpose() * R / n + 0.05 * Eigen::MatrixXd::Identity(n, n));
    }
    return StableFunction::quadratic(alg, d, std::move(forms),
                                     DualFunctional(oracles::random_element(alg, d, rng)));
  }
  if (pick < 0.75) {
    const double p = rng.uniform() < 0.5 ? 2.0 : 1.0 + rng.uniform(0.5, 2.0);
    return StableFunction::cond_pnorm_power(alg, d, p, oracles::random_rv(alg, rng, 0.2, 2.0));
  }
  return StableFunction::separable(alg, d, PlqFunction::huber(rng.uniform(0.3, 1.5)));
}

}  // namespace

TEST_CASE("PlqFunction basics") {
  PlqFunction sq = PlqFunction::square();
  CHECK(sq.value(3.0) == 9.0);
  CHECK(sq.prox(4.0, 0.5) == doctest::Approx(2.0));  // u + u = 4

  PlqFunction ab = PlqFunction::abs_value();
  CHECK(ab.value(-2.0) == 2.0);
  CHECK(ab.derivative_left(0.0) == -1.0);
  CHECK(ab.derivative_right(0.0) == 1.0);
  CHECK(ab.prox(3.0, 1.0) == doctest::Approx(2.0));
  CHECK(ab.prox(-0.5, 1.0) == doctest::Approx(0.0));
  CHECK_FALSE(ab.smooth());
  CHECK(PlqFunction::huber(1.0).smooth());

  // Convexity violations rejected.
  CHECK_THROWS_AS(PlqFunction({0.0}, {Eigen::Vector3d(0, 1, 0), Eigen::Vector3d(0, -1, 0)}),
                  std::invalid_argument);
  CHECK_THROWS_AS(PlqFunction({}, {Eigen::Vector3d(-1, 0, 0)}), std::invalid_argument);
  CHECK_THROWS_AS(PlqFunction({0.0}, {Eigen::Vector3d(0, -1, 5), Eigen::Vector3d(0, 1, 0)}),
                  std::invalid_argument);
}

TEST_CASE("evaluate: indicator, conditional variance, quadratic") {
  Quad q;
  StableConvexSet box = unit_box(q.alg, 1);
  StableFunction ind = StableFunction::indicator(box);
  ModuleElement interior(q.alg, Eigen::MatrixXd::Constant(4, 1, 0.5));
  CHECK(ind.evaluate(interior) == RandomVariable::constant(q.alg, 0.0));
  RandomVariable outside = ind.evaluate(q.x);  // (1,2) and (3,4) both leave [0,1]
  CHECK(outside[0].is_pos_inf());
  CHECK(outside[1].is_pos_inf());

  // Conditional variance of (1,2,3,4) on atoms {0,1},{2,3}: (0.25, 0.25).
  StableFunction var = StableFunction::cond_variance(q.alg, 1);
  RandomVariable v = var.evaluate(q.x);
  CHECK(v[0].value() == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(v[1].value() == doctest::Approx(0.25).epsilon(1e-12));

  // Quadratic with the identity pairing form equals E[|x|^2 | F].
  StableFunction sq = StableFunction::conditional_square_norm(q.alg, 1);
  RandomVariable s = sq.evaluate(q.x);
  CHECK(s[0].value() == doctest::Approx(2.5));
  CHECK(s[1].value() == doctest::Approx(12.5));

  // 0 * (+inf) = 0: a zero-scaled indicator vanishes.
  StableFunction zeroed = StableFunction::scaled(RandomVariable::constant(q.alg, 0.0), ind);
  CHECK(zeroed.evaluate(q.x) == RandomVariable::constant(q.alg, 0.0));
}

TEST_CASE("extend agrees with f on G and is +inf off the feasible atoms") {
  Quad q;
  StableConvexSet box = StableConvexSet::box(q.alg, -Eigen::MatrixXd::Ones(4, 1) * 1.5,
                                             Eigen::MatrixXd::Ones(4, 1) * 1.5);
  StableFunction f = StableFunction::conditional_square_norm(q.alg, 1);
  StableFunction fbar = extend(f, box);

  ModuleElement inside(q.alg, Eigen::MatrixXd::Constant(4, 1, 1.0));
  CHECK(fbar.evaluate(inside) == f.evaluate(inside));

  RandomVariable mixed = fbar.evaluate(q.x);  // (1,2,3,4): atom 0 has 2 > 1.5
  CHECK(mixed[0].is_pos_inf());
  CHECK(mixed[1].is_pos_inf());

  ModuleElement nowhere(q.alg, Eigen::MatrixXd::Constant(4, 1, 9.0));
  RandomVariable allinf = fbar.evaluate(nowhere);
  CHECK(allinf[0].is_pos_inf());
  CHECK(allinf[1].is_pos_inf());

  // f == 0 extends to the indicator.
  StableFunction zero = StableFunction::linear(DualFunctional::zero(q.alg, 1));
  StableFunction chi = extend(zero, box);
  StableFunction ind = StableFunction::indicator(box);
  for (const auto& probe : {inside, q.x, nowhere})
    CHECK(chi.evaluate(probe) == ind.evaluate(probe));

  // Requires the null element.
  StableConvexSet off = StableConvexSet::box(q.alg, Eigen::MatrixXd::Ones(4, 1) * 2.0,
                                             Eigen::MatrixXd::Ones(4, 1) * 3.0);
  CHECK_THROWS_AS(extend(f, off), std::invalid_argument);
}

TEST_CASE("gateaux: analytic values, quotient cross-check, zero direction") {
  Rng rng(101);
  for (int trial = 0; trial < 60; ++trial) {
    ProbSpace sp = oracles::random_space(5, rng);
    SigmaAlgebra alg = oracles::random_algebra(sp, 3, rng);
    const int d = 1 + static_cast<int>(rng.below(2));
    StableFunction f = random_smooth_function(alg, d, rng);
    ModuleElement x = oracles::random_element(alg, d, rng);
    ModuleElement y = oracles::random_element(alg, d, rng);

    RandomVariable analytic = f.gateaux(x, y);
    RandomVariable quotient = f.gateaux_quotient(x, y);
    for (int a = 0; a < alg.atom_count(); ++a) {
      const double scale = std::max(1.0, std::abs(analytic[a].value()));
      CHECK(std::abs(analytic[a].value() - quotient[a].value()) / scale <= 1e-6);
    }

    // Zero direction.
    RandomVariable z = f.gateaux(x, ModuleElement::zero(alg, d));
    for (int a = 0; a < alg.atom_count(); ++a) CHECK(z[a].value() == 0.0);

    // Difference quotients are nondecreasing in lambda for convex f.
    const double lam1 = 0.25, lam2 = 0.5;
    RandomVariable fx = f.evaluate(x);
    RandomVariable q1 = (1.0 / lam1) * (f.evaluate(x + lam1 * y) - fx);
    RandomVariable q2 = (1.0 / lam2) * (f.evaluate(x + lam2 * y) - fx);
    for (int a = 0; a < alg.atom_count(); ++a)
      CHECK(q1[a].value() <= q2[a].value() + 1e-9);
  }

  // A linear functional's derivative does not depend on the base point.
  SigmaAlgebra alg(ProbSpace::uniform(2), {{0}, {1}});
  Rng r2(7);
  DualFunctional l(oracles::random_element(alg, 1, r2));
  StableFunction lin = StableFunction::linear(l);
  ModuleElement x1 = oracles::random_element(alg, 1, r2);
  ModuleElement x2 = oracles::random_element(alg, 1, r2);
  ModuleElement y = oracles::random_element(alg, 1, r2);
  CHECK(lin.gateaux(x1, y) == lin.gateaux(x2, y));
  CHECK(lin.gateaux(x1, y) == l(y));
}

TEST_CASE("subgradient inequality and strict convexity") {
  Rng rng(113);
  for (int trial = 0; trial < 60; ++trial) {
    ProbSpace sp = oracles::random_space(4, rng);
    SigmaAlgebra alg = oracles::random_algebra(sp, 3, rng);
    StableFunction f = random_smooth_function(alg, 1, rng);
    ModuleElement x = oracles::random_element(alg, 1, rng);
    ModuleElement y = oracles::random_element(alg, 1, rng);
    CHECK(subgradient_check(f, x, y));
    CHECK(subgradient_check(f, x, x));  // equality case
  }

  // Strict inequality on atoms where the points differ.
  SigmaAlgebra alg(ProbSpace::uniform(2), {{0}, {1}});
  StableFunction f = StableFunction::conditional_square_norm(alg, 1);
  ModuleElement x(alg, (Eigen::MatrixXd(2, 1) << 1.0, 0.5).finished());
  ModuleElement y(alg, (Eigen::MatrixXd(2, 1) << 2.0, 0.5).finished());  // differs on atom 0
  RandomVariable gap = f.evaluate(y) - f.evaluate(x) - f.gateaux(x, y - x);
  CHECK(gap[0].value() > 1e-9);
  CHECK(gap[1].value() == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("derivative monotonicity across the smooth catalog") {
  Rng rng(127);
  for (int trial = 0; trial < 80; ++trial) {
    ProbSpace sp = oracles::random_space(5, rng);
    SigmaAlgebra alg = oracles::random_algebra(sp, 3, rng);
    const int d = 1 + static_cast<int>(rng.below(2));
    StableFunction f = random_smooth_function(alg, d, rng);
    ModuleElement x = oracles::random_element(alg, d, rng);
    ModuleElement y = oracles::random_element(alg, d, rng);
    RandomVariable m = pairing(f.gradient(x), x - y) - pairing(f.gradient(y), x - y);
    for (int a = 0; a < alg.atom_count(); ++a) CHECK(m[a].value() >= -1e-9);
  }
}

TEST_CASE("prox: indicator projects, soft threshold, identity") {
  SigmaAlgebra alg = SigmaAlgebra::full(ProbSpace::uniform(2));

  // prox of the indicator is the projection.
  StableConvexSet box = unit_box(alg, 1);
  StableFunction ind = StableFunction::indicator(box);
  ModuleElement x(alg, (Eigen::MatrixXd(2, 1) << 3.0, -0.5).finished());
  CHECK(ind.prox(x) == project(box, x));

  // lambda E[|u| | F] with lambda = 1: scenario-wise soft threshold.
  StableFunction l1 =
      StableFunction::cond_pnorm_power(alg, 1, 1.0, RandomVariable::constant(alg, 1.0));
  ModuleElement p = l1.prox(x);
  CHECK(p.data()(0, 0) == doctest::Approx(2.0));
  CHECK(p.data()(1, 0) == doctest::Approx(0.0));

  // phi == 0: prox is the identity.
  StableFunction zero = StableFunction::linear(DualFunctional::zero(alg, 1));
  CHECK(zero.prox(x) == x);

  // Separable |.| matches the p = 1 power on d = 1.
  StableFunction sep = StableFunction::separable(alg, 1, PlqFunction::abs_value());
  CHECK((sep.prox(x).data() - l1.prox(x).data()).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("prox: quadratic solve matches optimality condition, p-power scalar solves") {
  Rng rng(131);
  for (int trial = 0; trial < 60; ++trial) {
    ProbSpace sp = oracles::random_space(5, rng);
    SigmaAlgebra alg = oracles::random_algebra(sp, 3, rng);
    const int d = 1 + static_cast<int>(rng.below(2));
    StableFunction f = random_smooth_function(alg, d, rng);
    ModuleElement x = oracles::random_element(alg, d, rng);
    ModuleElement u = f.prox(x);
    // Optimality: gradient of (1/2)|||u - x|||^2 + f at u vanishes.
    ModuleElement resid = (u - x) + f.gradient(u).representer();
    CHECK(global_norm(resid, 2, std::numeric_limits<double>::infinity()) <= 1e-7);
  }
}

TEST_CASE("prox: Dykstra splitting for sums") {
  SigmaAlgebra alg = SigmaAlgebra::full(ProbSpace::uniform(2));
  StableConvexSet box = unit_box(alg, 1);
  StableFunction ind = StableFunction::indicator(box);
  StableFunction l1 =
      StableFunction::cond_pnorm_power(alg, 1, 1.0, RandomVariable::constant(alg, 0.5));
  StableFunction combo = StableFunction::sum({ind, l1});

  ModuleElement x(alg, (Eigen::MatrixXd(2, 1) << 3.0, 0.2).finished());
  ModuleElement u = combo.prox(x);
  // Scalar oracle per scenario: argmin over [0,1] of .5(u-x)^2 + 0.5|u|.
  auto scalar = [&](double xv) {
    double best = 0.0, bestval = 1e300;
    for (int i = 0; i <= 100000; ++i) {
      const double t = i / 100000.0;
      const double v = 0.5 * (t - xv) * (t - xv) + 0.5 * std::abs(t);
      if (v < bestval) {
        bestval = v;
        best = t;
      }
    }
    return best;
  };
  CHECK(u.data()(0, 0) == doctest::Approx(scalar(3.0)).epsilon(1e-4));
  CHECK(u.data()(1, 0) == doctest::Approx(scalar(0.2)).epsilon(1e-4));

  // An all-quadratic sum collapses to a single solve.
  StableFunction q1 = StableFunction::conditional_square_norm(alg, 1);
  StableFunction q2 = StableFunction::scaled(RandomVariable::constant(alg, 2.0),
                                             StableFunction::cond_variance(alg, 1));
  StableFunction qsum = StableFunction::sum({q1, q2});
  ModuleElement uq = qsum.prox(x);
  ModuleElement resid = (uq - x) + qsum.gradient(uq).representer();
  CHECK(resid.data().cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("prox stability, nonexpansiveness, and both optimality characterizations") {
  Rng rng(139);
  for (int trial = 0; trial < 60; ++trial) {
    ProbSpace sp = oracles::random_space(5, rng);
    SigmaAlgebra alg = oracles::random_algebra(sp, 4, rng);
    const int d = 1;
    // Mix of smooth and nonsmooth catalog members.
    StableFunction phi = [&]() -> StableFunction {
      const double pick = rng.uniform();
      if (pick < 0.3) return StableFunction::indicator(unit_box(alg, d));
      if (pick < 0.6)
        return StableFunction::cond_pnorm_power(alg, d, 1.0,
                                                oracles::random_rv(alg, rng, 0.1, 1.0));
      return random_smooth_function(alg, d, rng);
    }();
    ModuleElement x1 = oracles::random_element(alg, d, rng);
    ModuleElement x2 = oracles::random_element(alg, d, rng);
    ModuleElement u1 = phi.prox(x1);
    ModuleElement u2 = phi.prox(x2);

    // Stability under gluing.
    std::vector<int> atoms;
    for (int i = 0; i < alg.atom_count(); ++i)
      if (rng.uniform() < 0.5) atoms.push_back(i);
    IndicatorSet A(alg, atoms);
    CHECK(phi.prox(restrict_glue(A, x1, x2)) == restrict_glue(A, u1, u2));

    // Nonexpansiveness per atom in the conditional 2-norm.
    RandomVariable lhs = cond_norm(u1 - u2, 2), rhs = cond_norm(x1 - x2, 2);
    for (int a = 0; a < alg.atom_count(); ++a)
      CHECK(lhs[a].value() <= rhs[a].value() + 1e-7);

    // (u - x, v - u) + phi(v) - phi(u) >= 0 and the same with (v - x, v - u).
    RandomVariable pu = phi.evaluate(u1);
    for (int probe = 0; probe < 6; ++probe) {
      ModuleElement v = oracles::random_element(alg, d, rng);
      RandomVariable pv = phi.evaluate(v);
      RandomVariable ip1 = pairing(u1 - x1, v - u1);
      RandomVariable ip2 = pairing(v - x1, v - u1);
      for (int a = 0; a < alg.atom_count(); ++a) {
        const XReal r1 = ip1[a] + pv[a] - pu[a];
        const XReal r2 = ip2[a] + pv[a] - pu[a];
        CHECK(r1.as_double() >= -1e-7);
        CHECK(r2.as_double() >= -1e-7);
      }
    }
  }
}

TEST_CASE("stability identity for function values") {
  Rng rng(149);
  for (int trial = 0; trial < 60; ++trial) {
    ProbSpace sp = oracles::random_space(5, rng);
    SigmaAlgebra alg = oracles::random_algebra(sp, 4, rng);
    StableFunction f = random_smooth_function(alg, 1, rng);
    ModuleElement x = oracles::random_element(alg, 1, rng);
    ModuleElement y = oracles::random_element(alg, 1, rng);
    std::vector<int> atoms;
    for (int i = 0; i < alg.atom_count(); ++i)
      if (rng.uniform() < 0.5) atoms.push_back(i);
    IndicatorSet A(alg, atoms);
    RandomVariable glued = f.evaluate(restrict_glue(A, x, y));
    RandomVariable expected = restrict_glue(A, f.evaluate(x), f.evaluate(y));
    for (int a = 0; a < alg.atom_count(); ++a)
      CHECK(glued[a].value() == doctest::Approx(expected[a].value()).epsilon(1e-12));
  }
}

TEST_CASE("gateaux through the indicator boundary") {
  SigmaAlgebra alg = SigmaAlgebra::trivial(ProbSpace::uniform(1));
  StableConvexSet ball =
      StableConvexSet::ball(ModuleElement::zero(alg, 2), RandomVariable::constant(alg, 1.0));
  StableFunction ind = StableFunction::indicator(ball);
  ModuleElement x(alg, (Eigen::MatrixXd(1, 2) << 1.0, 0.0).finished());  // boundary
  ModuleElement inward(alg, (Eigen::MatrixXd(1, 2) << -1.0, 0.0).finished());
  ModuleElement outward(alg, (Eigen::MatrixXd(1, 2) << 1.0, 0.0).finished());
  CHECK(ind.gateaux(x, inward)[0].value() == 0.0);
  CHECK(ind.gateaux(x, outward)[0].is_pos_inf());
  ModuleElement far(alg, (Eigen::MatrixXd(1, 2) << 5.0, 0.0).finished());
  CHECK_THROWS_AS(ind.gateaux(far, inward), std::domain_error);
}

TEST_CASE("custom raw-callback functions work but are marked unverified") {
  SigmaAlgebra alg = SigmaAlgebra::full(ProbSpace::uniform(2));
  AtomLayout layout(alg, 1);
  // Hooks reproducing (1/2)|||u|||_2^2 so results can be cross-checked.
  StableFunction::CustomHooks hooks;
  hooks.evaluate = [layout](int atom, const Eigen::VectorXd& y) {
    return XReal::finite(0.5 * layout.inner(atom, y, y));
  };
  hooks.gradient = [](int, const Eigen::VectorXd& y) { return y; };
  hooks.prox = [](int, const Eigen::VectorXd& y, double tau) {
    return Eigen::VectorXd(y / (1.0 + tau));
  };
  StableFunction f = StableFunction::custom(alg, 1, hooks);
  CHECK_FALSE(f.hypotheses_verified());
  CHECK(f.smooth());

  StableFunction ref = StableFunction::scaled(
      RandomVariable::constant(alg, 0.5), StableFunction::conditional_square_norm(alg, 1));
  Rng rng(3);
  ModuleElement x = oracles::random_element(alg, 1, rng);
  ModuleElement y = oracles::random_element(alg, 1, rng);
  CHECK(as_sup_distance(f.evaluate(x), ref.evaluate(x)).value() <= 1e-12);
  CHECK(as_sup_distance(f.gateaux(x, y), ref.gateaux(x, y)).value() <= 1e-6);
  CHECK(global_norm(f.prox(x) - ref.prox(x), 2, std::numeric_limits<double>::infinity()) <=
        1e-12);

  // Sums containing a custom member are unverified too.
  CHECK_FALSE(StableFunction::sum({f, ref}).hypotheses_verified());
  CHECK(ref.hypotheses_verified());

  // Missing hooks surface as errors.
  StableFunction::CustomHooks eval_only;
  eval_only.evaluate = hooks.evaluate;
  StableFunction g = StableFunction::custom(alg, 1, eval_only);
  CHECK_FALSE(g.smooth());
  CHECK_THROWS_AS(g.prox(x), std::domain_error);
}

TEST_CASE("zero-scaled indicators vanish in derivatives too") {
  SigmaAlgebra alg = SigmaAlgebra::full(ProbSpace::uniform(2));
  StableConvexSet box = unit_box(alg, 1);
  StableFunction zeroed =
      StableFunction::scaled(RandomVariable::constant(alg, 0.0),
                             StableFunction::indicator(box));
  ModuleElement infeasible(alg, Eigen::MatrixXd::Constant(2, 1, 5.0));
  ModuleElement dir(alg, Eigen::MatrixXd::Constant(2, 1, 1.0));
  RandomVariable g = zeroed.gateaux(infeasible, dir);
  for (int a = 0; a < 2; ++a) CHECK(g[a].value() == 0.0);
}
