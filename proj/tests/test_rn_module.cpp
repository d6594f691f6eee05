#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "l0opt/rn_module.hpp"
#include "oracles.hpp"

using namespace l0opt;

namespace {

const double kInf = std::numeric_limits<double>::infinity();

/// Uniform 4-scenario space with atoms {0,1}, {2,3}; x = (1,2,3,4), d = 1.
struct Quad {
  SigmaAlgebra alg{ProbSpace::uniform(4), {{0, 1}, {2, 3}}};
  ModuleElement x{alg, (Eigen::MatrixXd(4, 1) << 1, 2, 3, 4).finished()};
};

}  // namespace

TEST_CASE("cond_expectation: constants, weighted average, tower") {
  Quad q;
  auto ce = cond_expectation(q.x);
  CHECK(ce[0][0] == doctest::Approx(1.5));
  CHECK(ce[1][0] == doctest::Approx(3.5));

  ModuleElement c = ModuleElement::constant(q.alg, Eigen::VectorXd::Constant(1, 2.5));
  for (const auto& v : cond_expectation(c)) CHECK(v[0] == doctest::Approx(2.5));

  // Tower: E[E[x|F] | trivial] = E[x | trivial].
  SigmaAlgebra triv = SigmaAlgebra::trivial(q.alg.space());
  ModuleElement lifted(triv, broadcast(q.alg, ce).data());
  ModuleElement plain(triv, q.x.data());
  CHECK(cond_expectation(lifted)[0][0] == doctest::Approx(cond_expectation(plain)[0][0]));

  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    ProbSpace sp = oracles::random_space(8, rng);
    SigmaAlgebra fine = oracles::random_algebra(sp, 6, rng);
    // Coarsen by merging atoms at random.
    const int groups = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(fine.atom_count())));
    std::vector<std::vector<int>> merged(static_cast<size_t>(groups));
    for (int a = 0; a < fine.atom_count(); ++a) {
      auto& blk = merged[static_cast<size_t>(
          a < groups ? a : static_cast<int>(rng.below(static_cast<std::uint64_t>(groups))))];
      blk.insert(blk.end(), fine.atom(a).begin(), fine.atom(a).end());
    }
    SigmaAlgebra coarse(sp, std::move(merged));
    REQUIRE(fine.refines(coarse));

    ModuleElement x = oracles::random_element(fine, 2, rng);
    ModuleElement inner(coarse, broadcast(fine, cond_expectation(x)).data());
    ModuleElement direct(coarse, x.data());
    auto lhs = cond_expectation(inner);
    auto rhs = cond_expectation(direct);
    for (size_t a = 0; a < lhs.size(); ++a)
      CHECK((lhs[a] - rhs[a]).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("cond_norm examples") {
  Quad q;
  CHECK(cond_norm(ModuleElement::zero(q.alg, 1), 2) == RandomVariable::constant(q.alg, 0.0));
  RandomVariable n2 = cond_norm(q.x, 2);
  CHECK(n2[0].value() == doctest::Approx(std::sqrt(2.5)));
  CHECK(n2[1].value() == doctest::Approx(std::sqrt(12.5)));
  RandomVariable ninf = cond_norm(q.x, kInf);
  CHECK(ninf[0].value() == doctest::Approx(2.0));
  CHECK(ninf[1].value() == doctest::Approx(4.0));
  CHECK_THROWS_AS(cond_norm(q.x, 0.5), std::invalid_argument);
}

TEST_CASE("RN-module axioms for cond_norm, property-tested") {
  Rng rng(17);
  const double ps[] = {1.0, 2.0, kInf};
  for (int trial = 0; trial < 300; ++trial) {
    ProbSpace sp = oracles::random_space(6, rng);
    SigmaAlgebra alg = oracles::random_algebra(sp, 4, rng);
    const int d = 1 + static_cast<int>(rng.below(3));
    ModuleElement x = oracles::random_element(alg, d, rng);
    ModuleElement y = oracles::random_element(alg, d, rng);
    RandomVariable xi = oracles::random_rv(alg, rng, -2, 2);
    for (double p : ps) {
      RandomVariable nx = cond_norm(x, p);
      RandomVariable ny = cond_norm(y, p);
      RandomVariable nxy = cond_norm(x + y, p);
      RandomVariable nxix = cond_norm(xi * x, p);
      for (int a = 0; a < alg.atom_count(); ++a) {
        // RNM-1 homogeneity over L0 scalars.
        CHECK(nxix[a].value() ==
              doctest::Approx(std::abs(xi[a].value()) * nx[a].value()).epsilon(1e-12));
        // RNM-2 triangle inequality.
        CHECK(nxy[a].value() <= nx[a].value() + ny[a].value() + 1e-12);
        CHECK(nx[a].value() >= 0.0);
      }
    }
    // RNM-3 definiteness.
    for (double p : ps) {
      RandomVariable nz = cond_norm(ModuleElement::zero(alg, d), p);
      for (int a = 0; a < alg.atom_count(); ++a) CHECK(nz[a].value() == 0.0);
      bool all_zero = true;
      RandomVariable nx = cond_norm(x, p);
      for (int a = 0; a < alg.atom_count(); ++a)
        if (nx[a].value() > 0) all_zero = false;
      if (all_zero) CHECK(x.data().cwiseAbs().maxCoeff() == 0.0);
    }
    // Conditional power-mean monotonicity in p.
    RandomVariable n1 = cond_norm(x, 1), n2 = cond_norm(x, 2), n15 = cond_norm(x, 1.5),
                   ni = cond_norm(x, kInf);
    for (int a = 0; a < alg.atom_count(); ++a) {
      CHECK(n1[a].value() <= n15[a].value() + 1e-12);
      CHECK(n15[a].value() <= n2[a].value() + 1e-12);
      CHECK(n2[a].value() <= ni[a].value() + 1e-12);
    }
  }
}

TEST_CASE("global_norm") {
  SigmaAlgebra alg = SigmaAlgebra::full(ProbSpace::uniform(2));
  ModuleElement x(alg, (Eigen::MatrixXd(2, 1) << 3, 4).finished());
  CHECK(global_norm(ModuleElement::zero(alg, 1), 2, 2) == 0.0);
  CHECK(global_norm(x, 2, 2) == doctest::Approx(std::sqrt(12.5)));
  CHECK(global_norm(x, 2, kInf) == doctest::Approx(4.0));
  CHECK_THROWS_AS(global_norm(x, 0.0, 2.0), std::invalid_argument);
}

TEST_CASE("l0_convex_combination") {
  SigmaAlgebra alg(ProbSpace::uniform(2), {{0}, {1}});
  ModuleElement x(alg, (Eigen::MatrixXd(2, 1) << 1, 2).finished());
  ModuleElement y(alg, (Eigen::MatrixXd(2, 1) << -1, -2).finished());
  CHECK(l0_convex_combination(RandomVariable::constant(alg, 1.0), x, y) == x);
  CHECK(l0_convex_combination(RandomVariable::constant(alg, 0.0), x, y) == y);
  ModuleElement glued =
      l0_convex_combination(RandomVariable::from_doubles(alg, {1.0, 0.0}), x, y);
  CHECK(glued.data()(0, 0) == 1.0);
  CHECK(glued.data()(1, 0) == -2.0);
  CHECK_THROWS_AS(l0_convex_combination(RandomVariable::constant(alg, 1.5), x, y),
                  std::invalid_argument);
}

TEST_CASE("concatenate and sections") {
  SigmaAlgebra alg(ProbSpace::uniform(4), {{0, 1}, {2, 3}});
  ModuleElement u = ModuleElement::constant(alg, Eigen::VectorXd::Constant(1, 1.0));
  ModuleElement v = ModuleElement::constant(alg, Eigen::VectorXd::Constant(1, 2.0));
  CHECK(concatenate({IndicatorSet::all(alg)}, {u}) == u);

  IndicatorSet a0(alg, {0}), a1(alg, {1});
  ModuleElement g = concatenate({a0, a1}, {u, v});
  CHECK(g.data()(0, 0) == 1.0);
  CHECK(g.data()(3, 0) == 2.0);
  // Sections equal inputs on their atoms.
  CHECK(restrict_glue(a0, g, u) == u);
  CHECK(restrict_glue(a1, g, v) == v);

  CHECK_THROWS_AS(concatenate({a0, a0}, {u, v}), std::invalid_argument);
  CHECK_THROWS_AS(concatenate({a0}, {u}), std::invalid_argument);
}

TEST_CASE("pairing: examples, bilinearity, module-linearity") {
  SigmaAlgebra alg(ProbSpace::uniform(2), {{0, 1}});
  ModuleElement x(alg, (Eigen::MatrixXd(2, 1) << 1, 2).finished());
  CHECK(pairing(DualFunctional::zero(alg, 1), x) == RandomVariable::constant(alg, 0.0));
  CHECK(pairing(x, x)[0].value() == doctest::Approx(2.5));  // E[x^2 | F]

  Rng rng(29);
  for (int trial = 0; trial < 100; ++trial) {
    ProbSpace sp = oracles::random_space(5, rng);
    SigmaAlgebra a = oracles::random_algebra(sp, 4, rng);
    const int d = 1 + static_cast<int>(rng.below(3));
    ModuleElement f = oracles::random_element(a, d, rng);
    ModuleElement u = oracles::random_element(a, d, rng);
    ModuleElement v = oracles::random_element(a, d, rng);
    RandomVariable xi = oracles::random_rv(a, rng, -2, 2);
    RandomVariable lhs = pairing(f, u + v);
    RandomVariable rhs = pairing(f, u) + pairing(f, v);
    RandomVariable mlhs = pairing(f, xi * u);
    for (int atom = 0; atom < a.atom_count(); ++atom) {
      CHECK(lhs[atom].value() == doctest::Approx(rhs[atom].value()).epsilon(1e-12));
      CHECK(mlhs[atom].value() ==
            doctest::Approx(xi[atom].value() * pairing(f, u)[atom].value()).epsilon(1e-12));
    }
  }
}

TEST_CASE("fin_gen_decompose: examples and elimination oracle") {
  SigmaAlgebra alg(ProbSpace::uniform(2), {{0}, {1}});

  // Zero generator: A_0 = whole atom set.
  auto dz = fin_gen_decompose({ModuleElement::zero(alg, 2)});
  CHECK(dz.rank_sets[0].covers_all());
  CHECK(dz.atom_rank == std::vector<int>{0, 0});

  // p1 = (e1, e1), p2 = (e2, e1): rank 2 on atom 0, rank 1 on atom 1.
  ModuleElement p1(alg, (Eigen::MatrixXd(2, 2) << 1, 0, 1, 0).finished());
  ModuleElement p2(alg, (Eigen::MatrixXd(2, 2) << 0, 1, 1, 0).finished());
  auto d2 = fin_gen_decompose({p1, p2});
  CHECK(d2.atom_rank == std::vector<int>{2, 1});
  CHECK(d2.atom_basis[0] == std::vector<int>{0, 1});
  CHECK(d2.atom_basis[1].size() == 1);

  // Independent constant generators: A_n = whole atom set.
  ModuleElement e1 = ModuleElement::constant(alg, (Eigen::VectorXd(2) << 1, 0).finished());
  ModuleElement e2 = ModuleElement::constant(alg, (Eigen::VectorXd(2) << 0, 1).finished());
  auto df = fin_gen_decompose({e1, e2});
  CHECK(df.rank_sets[2].covers_all());

  // Non-measurable generator rejected.
  ModuleElement bad(SigmaAlgebra::trivial(ProbSpace::uniform(2)),
                    (Eigen::MatrixXd(2, 1) << 1, 2).finished());
  CHECK_THROWS_AS(fin_gen_decompose({bad}), std::invalid_argument);

  // Oracle agreement on random measurable generator sets.
  Rng rng(41);
  for (int trial = 0; trial < 100; ++trial) {
    ProbSpace sp = oracles::random_space(6, rng);
    SigmaAlgebra a = oracles::random_algebra(sp, 5, rng);
    const int d = 2 + static_cast<int>(rng.below(4));
    const int ngen = 1 + static_cast<int>(rng.below(5));
    std::vector<ModuleElement> gens;
    std::vector<Eigen::MatrixXd> per_atom_cols(static_cast<size_t>(a.atom_count()),
                                               Eigen::MatrixXd(d, ngen));
    for (int k = 0; k < ngen; ++k) {
      std::vector<Eigen::VectorXd> atom_vals;
      for (int atom = 0; atom < a.atom_count(); ++atom) {
        Eigen::VectorXd v(d);
        // Mix of structured (duplicated/zero) and generic columns.
        if (rng.uniform() < 0.3 && k > 0) {
          v = per_atom_cols[static_cast<size_t>(atom)].col(k - 1) * rng.uniform(-2, 2);
        } else if (rng.uniform() < 0.2) {
          v.setZero();
        } else {
          for (int j = 0; j < d; ++j) v[j] = rng.normal();
        }
        per_atom_cols[static_cast<size_t>(atom)].col(k) = v;
        atom_vals.push_back(v);
      }
      gens.push_back(broadcast(a, atom_vals));
    }
    auto dec = fin_gen_decompose(gens);
    int covered = 0;
    for (const auto& rs : dec.rank_sets) covered += static_cast<int>(rs.member_atoms().size());
    CHECK(covered == a.atom_count());
    for (int atom = 0; atom < a.atom_count(); ++atom) {
      CHECK(dec.atom_rank[static_cast<size_t>(atom)] ==
            oracles::elimination_rank(per_atom_cols[static_cast<size_t>(atom)]));
      // The pivot basis really spans: each generator is a combination of it.
      const auto& basis = dec.atom_basis[static_cast<size_t>(atom)];
      Eigen::MatrixXd B(d, static_cast<int>(basis.size()));
      for (size_t i = 0; i < basis.size(); ++i)
        B.col(static_cast<int>(i)) = per_atom_cols[static_cast<size_t>(atom)].col(basis[i]);
      for (int k = 0; k < ngen; ++k) {
        const Eigen::VectorXd g = per_atom_cols[static_cast<size_t>(atom)].col(k);
        if (basis.empty()) {
          CHECK(g.cwiseAbs().maxCoeff() <= 1e-9);
        } else {
          const Eigen::VectorXd resid = g - B * B.completeOrthogonalDecomposition().solve(g);
          CHECK(resid.cwiseAbs().maxCoeff() <= 1e-8);
        }
      }
    }
  }
}

TEST_CASE("module scalar action multiplies atomwise") {
  SigmaAlgebra alg(ProbSpace::uniform(4), {{0, 1}, {2, 3}});
  ModuleElement x(alg, (Eigen::MatrixXd(4, 1) << 1, 2, 3, 4).finished());
  RandomVariable xi = RandomVariable::from_doubles(alg, {2.0, -1.0});
  ModuleElement y = xi * x;
  CHECK(y.data()(0, 0) == 2.0);
  CHECK(y.data()(1, 0) == 4.0);
  CHECK(y.data()(2, 0) == -3.0);
  CHECK(y.data()(3, 0) == -4.0);
  CHECK(x.is_base_measurable() == false);
  CHECK(ModuleElement::constant(alg, Eigen::VectorXd::Constant(1, 3.0)).is_base_measurable());
}
