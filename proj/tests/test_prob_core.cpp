#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "l0opt/prob_core.hpp"
#include "oracles.hpp"

using namespace l0opt;

namespace {

SigmaAlgebra two_atoms() {
  return SigmaAlgebra(ProbSpace::uniform(2), {{0}, {1}});
}

RandomVariable rv(const SigmaAlgebra& alg, std::initializer_list<double> vals) {
  return RandomVariable::from_doubles(alg, std::vector<double>(vals));
}

}  // namespace

TEST_CASE("ProbSpace construction invariants") {
  CHECK_THROWS_AS(ProbSpace({0.5, 0.0, 0.5}), std::invalid_argument);
  CHECK_THROWS_AS(ProbSpace({0.5, -0.1, 0.6}), std::invalid_argument);
  CHECK_THROWS_AS(ProbSpace({0.5, 0.6}), std::invalid_argument);
  CHECK_THROWS_AS(ProbSpace({}), std::invalid_argument);

  // Renormalization to an exact sum of 1.
  ProbSpace p({0.3 + 1e-13, 0.7});
  double sum = 0.0;
  for (double w : p.weights()) sum += w;
  CHECK(sum == 1.0);
}

TEST_CASE("SigmaAlgebra canonical form and refinement") {
  ProbSpace space = ProbSpace::uniform(4);
  SigmaAlgebra a(space, {{2, 3}, {1, 0}});
  SigmaAlgebra b(space, {{0, 1}, {3, 2}});
  CHECK(a == b);
  CHECK(a.atom(0) == std::vector<int>{0, 1});
  CHECK(a.atom_of(3) == 1);
  CHECK(a.atom_prob(0) == doctest::Approx(0.5));

  CHECK(SigmaAlgebra::full(space).refines(a));
  CHECK(a.refines(SigmaAlgebra::trivial(space)));
  CHECK_FALSE(a.refines(SigmaAlgebra::full(space)));

  CHECK_THROWS_AS(SigmaAlgebra(space, {{0, 1}, {1, 2, 3}}), std::invalid_argument);
  CHECK_THROWS_AS(SigmaAlgebra(space, {{0, 1}}), std::invalid_argument);
  CHECK_THROWS_AS(SigmaAlgebra(space, {{0, 1}, {2, 3, 4}}), std::invalid_argument);
}

TEST_CASE("extended-real conventions") {
  const XReal pi = XReal::pos_inf();
  const XReal ni = XReal::neg_inf();
  CHECK((pi + ni).is_pos_inf());
  CHECK((ni + pi).is_pos_inf());
  CHECK((pi - pi).is_pos_inf());
  CHECK((0.0 * pi) == XReal::finite(0.0));
  CHECK((0.0 * ni) == XReal::finite(0.0));
  CHECK((-2.0 * pi).is_neg_inf());
  CHECK((XReal::finite(3.0) + XReal::finite(0.5)).value() == 3.5);
  CHECK(ni < XReal::finite(-1e300));
  CHECK(XReal::finite(1e300) < pi);
  CHECK(metric_abs_diff(pi, pi) == XReal::finite(0.0));
  CHECK(metric_abs_diff(pi, ni).is_pos_inf());
  CHECK_THROWS_AS(XReal::finite(std::numeric_limits<double>::infinity()), std::invalid_argument);
}

TEST_CASE("ess_sup / ess_inf examples") {
  SigmaAlgebra alg = two_atoms();
  CHECK(ess_sup({rv(alg, {1, 0}), rv(alg, {0, 1})}) == rv(alg, {1, 1}));
  CHECK(ess_sup({rv(alg, {2, -1})}) == rv(alg, {2, -1}));

  // Exhaustive per-atom scan oracle for the three-member family.
  std::vector<RandomVariable> family{rv(alg, {1, 2}), rv(alg, {3, -1}), rv(alg, {2, 2})};
  for (int a = 0; a < 2; ++a) {
    double mx = -1e300, mn = 1e300;
    for (const auto& f : family) {
      mx = std::max(mx, f[a].value());
      mn = std::min(mn, f[a].value());
    }
    CHECK(ess_sup(family)[a].value() == mx);
    CHECK(ess_inf(family)[a].value() == mn);
  }
  CHECK(ess_sup(family) == rv(alg, {3, 2}));
  CHECK(ess_inf(family) == rv(alg, {1, -1}));

  CHECK_THROWS_AS(ess_sup({}), std::invalid_argument);
  SigmaAlgebra other = SigmaAlgebra::trivial(ProbSpace::uniform(2));
  CHECK_THROWS_AS(ess_sup({rv(alg, {1, 0}), RandomVariable::constant(other, 0)}),
                  std::invalid_argument);
}

TEST_CASE("directed supremum returns a nondecreasing attaining selection") {
  SigmaAlgebra alg = two_atoms();
  // Chain plus an incomparable-looking pair dominated by the top element.
  std::vector<RandomVariable> family{rv(alg, {0, 0}), rv(alg, {1, 0}), rv(alg, {0, 1}),
                                     rv(alg, {1, 1}), rv(alg, {2, 1})};
  auto r = ess_sup_directed(family);
  CHECK(r.sup == rv(alg, {2, 1}));
  REQUIRE(r.selection.size() == family.size());
  for (size_t k = 1; k < r.selection.size(); ++k) {
    const auto& prev = family[static_cast<size_t>(r.selection[k - 1])];
    const auto& cur = family[static_cast<size_t>(r.selection[k])];
    for (int a = 0; a < 2; ++a) CHECK(prev[a] <= cur[a]);
  }
  CHECK(family[static_cast<size_t>(r.selection.back())] == r.sup);

  auto ri = ess_inf_directed(
      {rv(alg, {0, 0}), rv(alg, {-1, 0}), rv(alg, {0, -1}), rv(alg, {-1, -1})});
  CHECK(ri.sup == rv(alg, {-1, -1}));

  // Not directed: the pointwise max of the two members is not in the family.
  CHECK_THROWS_AS(ess_sup_directed({rv(alg, {1, 0}), rv(alg, {0, 1})}), std::invalid_argument);
}

TEST_CASE("restrict_glue examples and gluing algebra") {
  SigmaAlgebra alg = two_atoms();
  RandomVariable x = rv(alg, {5, 5});
  RandomVariable y = rv(alg, {0, 0});
  CHECK(restrict_glue(IndicatorSet::all(alg), x, y) == x);
  CHECK(restrict_glue(IndicatorSet::none(alg), x, y) == y);
  CHECK(restrict_glue(IndicatorSet(alg, {0}), x, y) == rv(alg, {5, 0}));

  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    ProbSpace sp = oracles::random_space(5, rng);
    SigmaAlgebra a = oracles::random_algebra(sp, 4, rng);
    RandomVariable u = oracles::random_rv(a, rng, -3, 3);
    RandomVariable v = oracles::random_rv(a, rng, -3, 3);
    std::vector<int> atoms;
    for (int i = 0; i < a.atom_count(); ++i)
      if (rng.uniform() < 0.5) atoms.push_back(i);
    IndicatorSet A(a, atoms);
    CHECK(restrict_glue(A, u, u) == u);
    CHECK(restrict_glue(A, restrict_glue(A, u, v), v) == restrict_glue(A, u, v));
  }
}

TEST_CASE("ky_fan_distance examples and metric properties") {
  SigmaAlgebra one = SigmaAlgebra::trivial(ProbSpace::uniform(1));
  CHECK(ky_fan_distance(rv(one, {0.7}), rv(one, {0.7})) == 0.0);
  CHECK(ky_fan_distance(rv(one, {1.0}), rv(one, {0.7})) == doctest::Approx(0.3));

  SigmaAlgebra alg = two_atoms();
  CHECK(ky_fan_distance(rv(alg, {1, 0}), rv(alg, {0, 0})) == doctest::Approx(0.5));

  RandomVariable xinf(alg, {XReal::pos_inf(), XReal::finite(0)});
  CHECK_THROWS_AS(ky_fan_distance(xinf, rv(alg, {0, 0})), std::invalid_argument);

  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    ProbSpace sp = oracles::random_space(4, rng);
    SigmaAlgebra a = oracles::random_algebra(sp, 4, rng);
    RandomVariable u = oracles::random_rv(a, rng, -2, 2);
    RandomVariable v = oracles::random_rv(a, rng, -2, 2);
    RandomVariable w = oracles::random_rv(a, rng, -2, 2);
    const double duv = ky_fan_distance(u, v);
    CHECK(duv == doctest::Approx(oracles::ky_fan_scan(u, v)).epsilon(1e-12));
    // Metric: symmetry, identity, triangle inequality.
    CHECK(ky_fan_distance(v, u) == doctest::Approx(duv));
    CHECK(ky_fan_distance(u, u) == 0.0);
    CHECK(duv <= ky_fan_distance(u, w) + ky_fan_distance(w, v) + 1e-12);
    // The uniform gauge dominates when both are <= 1.
    const XReal sup = as_sup_distance(u, v);
    if (sup.value() <= 1.0) CHECK(duv <= sup.value() + 1e-12);
  }
}

TEST_CASE("as_sup_distance examples") {
  SigmaAlgebra alg = two_atoms();
  CHECK(as_sup_distance(rv(alg, {1, 2}), rv(alg, {1, 2})) == XReal::finite(0.0));
  CHECK(as_sup_distance(rv(alg, {1, 0}), rv(alg, {0, 0})) == XReal::finite(1.0));
  SigmaAlgebra three = SigmaAlgebra::full(ProbSpace::uniform(3));
  CHECK(as_sup_distance(rv(three, {0.2, 0.7, 0.1}), rv(three, {0, 0, 0})) == XReal::finite(0.7));
  RandomVariable xinf(alg, {XReal::pos_inf(), XReal::finite(0)});
  CHECK(as_sup_distance(xinf, xinf) == XReal::finite(0.0));
  CHECK(as_sup_distance(xinf, rv(alg, {0, 0})).is_pos_inf());
}

TEST_CASE("lattice laws hold on random families") {
  Rng rng(23);
  for (int trial = 0; trial < 100; ++trial) {
    ProbSpace sp = oracles::random_space(6, rng);
    SigmaAlgebra a = oracles::random_algebra(sp, 5, rng);
    std::vector<RandomVariable> h1, h2;
    for (int i = 0; i < 3; ++i) h1.push_back(oracles::random_rv(a, rng, -5, 5));
    for (int i = 0; i < 2; ++i) h2.push_back(oracles::random_rv(a, rng, -5, 5));
    // Idempotence and commutativity.
    CHECK(ess_sup({h1[0], h1[0]}) == h1[0]);
    CHECK(ess_sup({h1[0], h1[1]}) == ess_sup({h1[1], h1[0]}));
    // Associativity over family unions.
    std::vector<RandomVariable> all = h1;
    all.insert(all.end(), h2.begin(), h2.end());
    CHECK(ess_sup(all) == ess_sup({ess_sup(h1), ess_sup(h2)}));
    // Sandwich: inf <= h <= sup per atom.
    RandomVariable lo = ess_inf(all), hi = ess_sup(all);
    for (const auto& h : all)
      for (int atom = 0; atom < a.atom_count(); ++atom) {
        CHECK(lo[atom] <= h[atom]);
        CHECK(h[atom] <= hi[atom]);
      }
  }
}
