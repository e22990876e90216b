#include <random>

#include "doctest.h"
#include "isred/canonical_games.hpp"
#include "isred/game_ops.hpp"

using namespace isred;

TEST_CASE("partial nestedness: forwarded info covers action precedents") {
  auto g = make_misaligned_target_game(1.0);
  auto rep = validate_partial_nestedness(g);
  CHECK(rep.nested);
  CHECK(rep.violations.empty());

  SUBCASE("no coupling is trivially nested") {
    g.obs[1].deps.clear();
    g.obs[1].D = MatrixXd(1, 0);
    g.obs[1].fwd.clear();
    CHECK(validate_partial_nestedness(g).nested);
  }
  SUBCASE("dropping the forward set breaks nestedness at the second DM") {
    g.obs[1].fwd.clear();
    auto bad = validate_partial_nestedness(g);
    CHECK_FALSE(bad.nested);
    REQUIRE(bad.violations.size() == 1);
    CHECK(bad.violations[0] == std::pair<int, int>{1, 0});
  }
  SUBCASE("cycles are rejected as structural errors") {
    g.obs[0].deps = {1};
    g.obs[0].D = MatrixXd::Identity(1, 1);
    CHECK_THROWS_AS(validate_partial_nestedness(g), SpecError);
  }
}

TEST_CASE("compose_actions: forward substitution in the Gaussian family") {
  auto g = make_spe_reduction_gap_game(0.5);

  SUBCASE("zero profile composes to the zero map") {
    auto map = compose_actions(g, zero_affine_profile(g));
    for (int m = 0; m < 2; ++m) {
      CHECK(map.gain[m].cwiseAbs().maxCoeff() == 0.0);
      CHECK(map.offset[m].cwiseAbs().maxCoeff() == 0.0);
    }
  }
  SUBCASE("profile (0,(0,I)) makes u1 track the second noise") {
    auto map = compose_actions(g, make_two_dm_profile(g, 1.0));
    CHECK(map.gain[0].cwiseAbs().maxCoeff() == 0.0);
    CHECK(map.gain[1](0, 0) == doctest::Approx(0.0));
    CHECK(map.gain[1](0, 1) == doctest::Approx(1.0));
    CHECK(map.offset[1](0) == doctest::Approx(0.0));
  }
}

TEST_CASE("composition is invariant under permuted topological orders") {
  // Two parallel DMs feeding a third: both {0,1,2} and {1,0,2} are valid.
  GameSpec g;
  g.variant = Variant::Dynamic;
  g.num_players = 2;
  g.primitives.family = Family::Gaussian;
  g.primitives.gaussian_blocks = {{"w0", 1}, {"a", 1}, {"b", 1}, {"c", 1}};
  g.primitives.mean = VectorXd::Zero(4);
  g.primitives.cov = MatrixXd::Identity(4, 4);
  g.dms = {{0, 0, 0}, {0, 1, 1}, {1, 0, 2}};
  g.action_dims = {1, 1, 1};
  ObsKernel k0, k1, k2;
  k0.G = MatrixXd::Identity(1, 1);
  k0.H = (MatrixXd(1, 4) << 1, 1, 0, 0).finished();
  k0.D = MatrixXd(1, 0);
  k1.G = MatrixXd::Identity(1, 1);
  k1.H = (MatrixXd(1, 4) << 0, 0, 1, 0).finished();
  k1.D = MatrixXd(1, 0);
  k2.deps = {0, 1};
  k2.fwd = {0, 1};
  k2.G = MatrixXd::Identity(1, 1);
  k2.H = (MatrixXd(1, 4) << 0, 0, 0, 1).finished();
  k2.D = (MatrixXd(1, 2) << -1, 0.25).finished();
  g.obs = {k0, k1, k2};
  g.costs.kind = CostSpec::Kind::Quadratic;
  g.costs.quad = {{MatrixXd::Identity(7, 7), VectorXd::Zero(7), 0.0},
                  {MatrixXd::Identity(7, 7), VectorXd::Zero(7), 0.0}};
  std::mt19937_64 rng(7);
  std::normal_distribution<double> nd;
  PolicyProfile p = zero_affine_profile(g);
  for (auto& pol : p.dm) {
    for (int i = 0; i < pol.affine.A.size(); ++i) pol.affine.A(i) = nd(rng);
    for (int i = 0; i < pol.affine.a.size(); ++i) pol.affine.a(i) = nd(rng);
  }
  auto a = compose_actions(g, p, {0, 1, 2});
  auto b = compose_actions(g, p, {1, 0, 2});
  for (int m = 0; m < 3; ++m) {
    CHECK((a.gain[m] - b.gain[m]).cwiseAbs().maxCoeff() <= 1e-14);
    CHECK((a.offset[m] - b.offset[m]).cwiseAbs().maxCoeff() <= 1e-14);
  }
}

TEST_CASE("compose rejects non-topological processing orders") {
  auto g = make_spe_reduction_gap_game(0.5);
  CHECK_THROWS_AS(compose_actions(g, zero_affine_profile(g), {1, 0}), SpecError);
}

TEST_CASE("compose_actions: finite table substitution") {
  // y0 = w0, y1 = u0; identity then flip.
  auto g = make_coordination_game();
  PolicyProfile p;
  p.variant = g.variant;
  p.dm.resize(2);
  p.dm[0].kind = Policy::Kind::Table;
  p.dm[0].table.act = {0, 1};  // identity on y0
  p.dm[1].kind = Policy::Kind::Table;
  p.dm[1].table.act = {1, 0};  // flip y1
  auto comp = compose_finite(g, p);
  CHECK(comp.act[0][0] == 0);
  CHECK(comp.act[0][1] == 1);
  CHECK(comp.act[1][0] == 1);
  CHECK(comp.act[1][1] == 0);
}

TEST_CASE("expected_cost: exact evaluation") {
  SUBCASE("zero cost matrix gives zero for all players") {
    auto g = make_misaligned_target_game(1.0);
    for (auto& q : g.costs.quad) {
      q.M.setZero();
      q.b.setZero();
      q.c = 0;
    }
    auto J = expected_cost(g, make_two_dm_profile(g, -1.0));
    CHECK(J[0] == doctest::Approx(0.0));
    CHECK(J[1] == doctest::Approx(0.0));
  }
  SUBCASE("tracking profile cancels the quadratic term") {
    auto g = make_spe_reduction_gap_game(0.5);
    auto J = expected_cost(g, make_two_dm_profile(g, 1.0));
    CHECK(J[0] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(J[1] == doctest::Approx(0.0).epsilon(1e-12));
  }
  SUBCASE("cancelling profile leaves the bias term") {
    auto g = make_misaligned_target_game(1.0);
    auto J = expected_cost(g, make_two_dm_profile(g, -1.0));
    CHECK(J[0] == doctest::Approx(1.0));
    CHECK(J[1] == doctest::Approx(0.0).epsilon(1e-12));
  }
}

TEST_CASE("expected_cost: Monte Carlo agrees with exact within 4 sigma") {
  SUBCASE("gaussian") {
    auto g = make_misaligned_target_game(0.7);
    PolicyProfile p = make_two_dm_profile(g, -0.5);
    p.dm[0].affine.A(0, 0) = 0.3;
    p.dm[0].affine.a(0) = 0.2;
    auto exact = expected_cost(g, p);
    auto mc = expected_cost_mc(g, p, kDefaultSeed, 200000);
    for (int i = 0; i < 2; ++i)
      CHECK(std::abs(mc.value[i] - exact[i]) <= 4.0 * mc.std_error[i] + 1e-12);
  }
  SUBCASE("finite") {
    auto g = make_xor_channel_game(0.3);
    PolicyProfile p;
    p.variant = g.variant;
    p.dm.resize(2);
    p.dm[0].kind = Policy::Kind::Table;
    p.dm[0].table.act = {0, 1};
    p.dm[1].kind = Policy::Kind::Table;
    p.dm[1].table.act = {0, 1, 1, 0};
    auto exact = expected_cost(g, p);
    auto mc = expected_cost_mc(g, p, 42, 200000);
    for (int i = 0; i < 2; ++i)
      CHECK(std::abs(mc.value[i] - exact[i]) <= 4.0 * mc.std_error[i] + 1e-12);
  }
  SUBCASE("zero samples is an argument error") {
    auto g = make_misaligned_target_game(1.0);
    CHECK_THROWS_AS(expected_cost_mc(g, zero_affine_profile(g), 1, 0), SpecError);
  }
}

TEST_CASE("zero-sum games evaluate to opposite costs") {
  auto g = make_spe_lift_gap_game(0.5, 2.0);
  std::mt19937_64 rng(11);
  std::normal_distribution<double> nd;
  for (int trial = 0; trial < 10; ++trial) {
    PolicyProfile p = zero_affine_profile(g);
    for (auto& pol : p.dm) {
      for (int i = 0; i < pol.affine.A.size(); ++i) pol.affine.A(i) = nd(rng);
      pol.affine.a(0) = nd(rng);
    }
    auto J = expected_cost(g, p);
    CHECK(std::abs(J[0] + J[1]) <= 1e-12 * std::max(1.0, std::abs(J[0])));
  }
}

TEST_CASE("compose coefficients do not depend on the topological order") {
  // Three-DM chain with vector-valued blocks.
  GameSpec g;
  g.variant = Variant::Dynamic;
  g.num_players = 2;
  g.primitives.family = Family::Gaussian;
  g.primitives.gaussian_blocks = {{"w0", 1}, {"a", 1}, {"b", 1}, {"c", 1}};
  g.primitives.mean = VectorXd::Zero(4);
  Eigen::MatrixXd cov = MatrixXd::Identity(4, 4);
  cov(0, 1) = cov(1, 0) = 0.3;
  g.primitives.cov = cov;
  g.dms = {{0, 0, 0}, {0, 1, 1}, {1, 0, 2}};
  g.action_dims = {1, 1, 1};
  ObsKernel k0, k1, k2;
  k0.G = MatrixXd::Identity(1, 1);
  k0.H = (MatrixXd(1, 4) << 1, 1, 0, 0).finished();
  k0.D = MatrixXd(1, 0);
  k1.deps = {0};
  k1.fwd = {0};
  k1.G = 2.0 * MatrixXd::Identity(1, 1);
  k1.H = (MatrixXd(1, 4) << 0, 0, 1, 0).finished();
  k1.D = (MatrixXd(1, 1) << 0.5).finished();
  k2.deps = {0, 1};
  k2.fwd = {1};
  k2.G = MatrixXd::Identity(1, 1);
  k2.H = (MatrixXd(1, 4) << 0, 0, 0, 1).finished();
  k2.D = (MatrixXd(1, 2) << -1, 0.25).finished();
  g.obs = {k0, k1, k2};
  g.costs.kind = CostSpec::Kind::Quadratic;
  g.costs.quad = {{MatrixXd::Identity(7, 7), VectorXd::Zero(7), 0.0},
                  {MatrixXd::Identity(7, 7), VectorXd::Zero(7), 0.0}};

  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd;
  PolicyProfile p = zero_affine_profile(g);
  for (auto& pol : p.dm) {
    for (int i = 0; i < pol.affine.A.size(); ++i) pol.affine.A(i) = nd(rng);
    pol.affine.a(0) = nd(rng);
  }
  auto a = compose_actions(g, p, {0, 1, 2});
  auto b = compose_actions(g, p, {0, 1, 2});
  // Only {0,1,2} is topological here (chain), so instead check the simulated
  // path against the composed coefficients on random draws.
  for (int t = 0; t < 20; ++t) {
    VectorXd zeta(4);
    for (int i = 0; i < 4; ++i) zeta[i] = nd(rng);
    VectorXd u = simulate_actions(g, p, zeta);
    for (int m = 0; m < 3; ++m) {
      const double um = (a.gain[m] * zeta + a.offset[m])(0);
      CHECK(u[g.action_offset(m)] == doctest::Approx(um).epsilon(1e-12));
      CHECK(b.gain[m].isApprox(a.gain[m], 1e-14));
    }
  }
}

TEST_CASE("condition (C): affine composite dependence on shared actions") {
  SUBCASE("affine profiles on affine kernels always pass") {
    auto g = make_spe_reduction_gap_game(0.5);
    auto rep = check_condition_C(g, make_two_dm_profile(g, -1.0));
    CHECK(rep.affine[0]);
    CHECK(rep.affine[1]);
    // gamma2 = -I on yhat2, yhat2 = w2 + u0: slope -1 on u0.
    CHECK(rep.coeff[1](0, 0) == doctest::Approx(-1.0));
  }
  SUBCASE("xor composite fails the affinity fit") {
    auto g = make_xor_channel_game(0.5);
    PolicyProfile p;
    p.variant = g.variant;
    p.dm.resize(2);
    p.dm[0].kind = Policy::Kind::Table;
    p.dm[0].table.act = {0, 1};
    p.dm[1].kind = Policy::Kind::Table;
    // u1 = y1 (= u0 xor bit): slope in u0 flips sign with the bit.
    p.dm[1].table.act = {0, 1, 0, 1};
    auto rep = check_condition_C(g, p);
    CHECK(rep.affine[0]);
    CHECK_FALSE(rep.affine[1]);
  }
  SUBCASE("finite composite with a fixed slope passes") {
    auto g = make_coordination_game();
    PolicyProfile p;
    p.variant = g.variant;
    p.dm.resize(2);
    p.dm[0].kind = Policy::Kind::Table;
    p.dm[0].table.act = {0, 1};
    p.dm[1].kind = Policy::Kind::Table;
    p.dm[1].table.act = {0, 1};  // copy y1 = u0
    auto rep = check_condition_C(g, p);
    CHECK(rep.affine[1]);
    CHECK(rep.coeff[1](0, 0) == doctest::Approx(1.0));
  }
}

TEST_CASE("validation catches malformed specifications") {
  auto g = make_misaligned_target_game(1.0);
  SUBCASE("asymmetric cost matrix") {
    g.costs.quad[0].M(0, 1) += 1.0;
    CHECK_THROWS_AS(validate_game(g), SpecError);
  }
  SUBCASE("non-positive-definite covariance") {
    g.primitives.cov(1, 1) = 0.0;
    CHECK_THROWS_AS(validate_game(g), SpecError);
  }
  SUBCASE("zero-sum flag with misaligned costs") {
    g.costs.zero_sum = true;
    CHECK_THROWS_AS(validate_game(g), SpecError);
  }
  SUBCASE("finite masses must sum to one") {
    auto f = make_coordination_game();
    f.primitives.finite_blocks[0].probs = {0.5, 0.6};
    CHECK_THROWS_AS(validate_game(f), SpecError);
  }
}
