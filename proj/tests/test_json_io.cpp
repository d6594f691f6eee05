#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "l0opt/json_io.hpp"
#include "oracles.hpp"

using namespace l0opt;
using l0opt::io::json;

TEST_CASE("round trips for core types on seeded instances") {
  Rng rng(7);
  for (int trial = 0; trial < 60; ++trial) {
    ProbSpace sp = oracles::random_space(2 + static_cast<int>(rng.below(6)), rng);
    CHECK(io::decode_space(io::encode(sp)) == sp);

    SigmaAlgebra alg = oracles::random_algebra(sp, 4, rng);
    CHECK(io::decode_algebra(io::encode(alg), sp) == alg);

    RandomVariable rv = oracles::random_rv(alg, rng, -5, 5);
    CHECK(io::decode_rv(io::encode(rv), alg) == rv);

    const int d = 1 + static_cast<int>(rng.below(3));
    ModuleElement x = oracles::random_element(alg, d, rng, 2.0);
    CHECK(io::decode_element(io::encode(x), alg) == x);

    std::vector<int> atoms;
    for (int a = 0; a < alg.atom_count(); ++a)
      if (rng.uniform() < 0.5) atoms.push_back(a);
    IndicatorSet ind(alg, atoms);
    CHECK(io::decode_indicator(io::encode(ind), alg) == ind);
  }
}

TEST_CASE("extended-real sentinels survive the round trip") {
  SigmaAlgebra alg(ProbSpace::uniform(2), {{0}, {1}});
  RandomVariable rv(alg, {XReal::pos_inf(), XReal::neg_inf()});
  const json j = io::encode(rv);
  CHECK(j.at("values")[0] == "inf");
  CHECK(j.at("values")[1] == "-inf");
  CHECK(io::decode_rv(j, alg) == rv);
}

TEST_CASE("set round trip across descriptor kinds") {
  SigmaAlgebra alg(ProbSpace::uniform(4), {{0, 1}, {2, 3}});
  AtomLayout layout(alg, 2);

  BoxDesc box;
  box.lo = Eigen::VectorXd::Constant(4, -1.0);
  box.hi = Eigen::VectorXd::Constant(4, std::numeric_limits<double>::infinity());
  IntersectionDesc inter;
  BallDesc ball;
  ball.center = Eigen::VectorXd::Zero(4);
  ball.radius = 2.0;
  HalfspacesDesc hs;
  hs.A = Eigen::MatrixXd::Ones(1, 4);
  hs.b = Eigen::VectorXd::Constant(1, 1.0);
  inter.parts.push_back(ball);
  inter.parts.push_back(hs);

  StableConvexSet G(alg, 2, {box, inter});
  StableConvexSet back = io::decode_set(io::encode(G), alg);
  CHECK(back.dim() == 2);
  // Same membership behaviour on probes.
  Rng rng(13);
  for (int probe = 0; probe < 40; ++probe) {
    ModuleElement x = oracles::random_element(alg, 2, rng, 2.0);
    CHECK(membership(G, x).member == membership(back, x).member);
  }
}

TEST_CASE("functions and operators decode through the factories") {
  SigmaAlgebra alg(ProbSpace::uniform(2), {{0}, {1}});
  const json fj = {{"kind", "sum"},
                   {"terms",
                    {{{"kind", "cond_norm_p"},
                      {"d", 1},
                      {"p", 1.0},
                      {"lambda", {{"values", {1.0, 0.5}}}}},
                     {{"kind", "half_sqdist"},
                      {"x0", {{"d", 1}, {"data", {{3.0}, {-0.5}}}}}}}}};
  StableFunction f = io::decode_function(fj, alg);
  ModuleElement zero = ModuleElement::zero(alg, 1);
  // At the origin the p-norm term vanishes and only (1/2)|x0|^2 remains.
  CHECK(f.evaluate(zero)[0].value() == doctest::Approx(0.5 * 9.0));
  CHECK(f.evaluate(zero)[1].value() == doctest::Approx(0.5 * 0.25));

  const json oj = {{"kind", "linear"},
                   {"d", 1},
                   {"matrices", {{{2.0}}, {{1.0}}}},
                   {"alpha", {{"values", {1.0, 1.0}}}}};
  MonotoneOperator M = io::decode_operator(oj, alg);
  CHECK(M.monotonicity_spot_check());
  CHECK(M.strong_modulus()[0].value() == 1.0);
}

TEST_CASE("unknown fields are rejected with the offending name") {
  SigmaAlgebra alg(ProbSpace::uniform(2), {{0}, {1}});
  try {
    io::decode_rv(json{{"values", {1.0, 2.0}}, {"extra", 1}}, alg);
    FAIL("expected rejection");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("extra") != std::string::npos);
  }
  CHECK_THROWS_AS(io::decode_space(json{{"p", {0.5, 0.5}}, {"q", 1}}), std::invalid_argument);
  CHECK_THROWS_AS(
      io::decode_function(json{{"kind", "cond_variance"}, {"d", 1}, {"bogus", true}}, alg),
      std::invalid_argument);
  CHECK_THROWS_AS(io::decode_function(json{{"kind", "nope"}}, alg), std::invalid_argument);
}

TEST_CASE("canonical dump is deterministic and order-independent") {
  json a;
  a["beta"] = 0.1;
  a["alpha"] = json::array({1.0 / 3.0, 2, "inf"});
  json b;
  b["alpha"] = json::array({1.0 / 3.0, 2, "inf"});
  b["beta"] = 0.1;
  CHECK(io::dump_canonical(a) == io::dump_canonical(b));
  // 17 significant digits reparse to the identical double.
  const std::string s = io::dump_canonical(json(1.0 / 3.0));
  CHECK(json::parse(s).get<double>() == 1.0 / 3.0);
  const std::string tiny = io::dump_canonical(json(5e-324));
  CHECK(json::parse(tiny).get<double>() == 5e-324);
}

TEST_CASE("operator combinations with shifts decode") {
  SigmaAlgebra alg(ProbSpace::uniform(2), {{0}, {1}});
  const json oj = {{"kind", "combination"},
                   {"terms",
                    {{{"eta", {{"values", {2.0, 1.0}}}},
                      {"op", {{"kind", "linear"}, {"d", 1}, {"matrices", {{{1.0}}, {{3.0}}}}}}}}},
                   {"shift", {{"d", 1}, {"data", {{0.5}, {-0.5}}}}}};
  MonotoneOperator M = io::decode_operator(oj, alg);
  ModuleElement one = ModuleElement::constant(alg, Eigen::VectorXd::Ones(1));
  const ModuleElement out = M.apply(one).representer();
  CHECK(out.data()(0, 0) == doctest::Approx(2.5));   // 2*1*1 + 0.5
  CHECK(out.data()(1, 0) == doctest::Approx(2.5));   // 1*3*1 - 0.5
  CHECK(M.is_affine());
}
