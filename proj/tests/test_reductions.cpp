#include <random>

#include "doctest.h"
#include "isred/canonical_games.hpp"
#include "isred/reductions.hpp"

using namespace isred;

namespace {

PolicyProfile random_affine(const GameSpec& g, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  PolicyProfile p = zero_affine_profile(g);
  for (auto& pol : p.dm) {
    for (int i = 0; i < pol.affine.A.size(); ++i) pol.affine.A(i) = nd(rng);
    for (int i = 0; i < pol.affine.a.size(); ++i) pol.affine.a(i) = nd(rng);
  }
  return p;
}

PolicyProfile random_table(const GameSpec& g, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  PolicyProfile p;
  p.variant = g.variant;
  p.dm.resize(g.num_dms());
  for (int m = 0; m < g.num_dms(); ++m) {
    p.dm[m].kind = Policy::Kind::Table;
    const auto lay = info_layout(g, m);
    std::uniform_int_distribution<int> ad(0, g.action_card(m) - 1);
    for (std::int64_t i = 0; i < lay.card; ++i) p.dm[m].table.act.push_back(ad(rng));
  }
  return p;
}

// Three-DM Gaussian chain with nontrivial mixing and coupling.
GameSpec make_chain_game(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  auto coef = [&] { return 0.5 + std::abs(nd(rng)); };
  GameSpec g;
  g.variant = Variant::Dynamic;
  g.num_players = 2;
  g.primitives.family = Family::Gaussian;
  g.primitives.gaussian_blocks = {{"w0", 1}, {"n0", 1}, {"n1", 1}, {"n2", 1}};
  g.primitives.mean = VectorXd::Zero(4);
  g.primitives.cov = MatrixXd::Identity(4, 4);
  g.dms = {{0, 0, 0}, {0, 1, 1}, {1, 0, 2}};
  g.action_dims = {1, 1, 1};
  for (int m = 0; m < 3; ++m) {
    ObsKernel k;
    k.G = (MatrixXd(1, 1) << coef()).finished();
    k.H = MatrixXd::Zero(1, 4);
    k.H(0, 1 + m) = 1.0;
    k.H(0, 0) = nd(rng);
    if (m > 0) {
      for (int j = 0; j < m; ++j) {
        k.deps.push_back(j);
        k.fwd.push_back(j);
      }
      k.D = MatrixXd(1, m);
      for (int j = 0; j < m; ++j) k.D(0, j) = nd(rng);
    } else {
      k.D = MatrixXd(1, 0);
    }
    g.obs.push_back(k);
  }
  g.costs.kind = CostSpec::Kind::Quadratic;
  MatrixXd L = MatrixXd::Random(7, 7);
  MatrixXd M = L * L.transpose() + MatrixXd::Identity(7, 7);
  g.costs.quad = {{M, VectorXd::Zero(7), 0.0}, {-M, VectorXd::Zero(7), 0.0}};
  g.costs.zero_sum = true;
  return g;
}

}  // namespace

TEST_CASE("policy-independent reduction: finite identity case") {
  // Observation = a fair private coin: reference law already matches.
  GameSpec g;
  g.variant = Variant::Dynamic;
  g.num_players = 1;
  g.primitives.family = Family::Finite;
  g.primitives.finite_blocks = {{"w0", {0, 1}, {0.3, 0.7}},
                                {"coin", {0, 1}, {0.5, 0.5}}};
  g.dms = {{0, 0, 0}};
  g.action_values = {{0, 1}};
  ObsKernel k;
  k.card = 2;
  k.table = {0, 1, 0, 1};  // y = coin, z = (w0, coin)
  g.obs = {k};
  g.costs.kind = CostSpec::Kind::Table;
  std::vector<double> c(4 * 2);
  for (std::int64_t z = 0; z < 4; ++z)
    for (int a = 0; a < 2; ++a) c[z * 2 + a] = (z / 2) == a ? 0.25 : 1.5;
  g.costs.table = {c};

  auto red = policy_independent_reduce(g);
  for (double f : red.ratio.finite[0].table) CHECK(f == doctest::Approx(1.0));
  PolicyProfile p = random_table(g, 3);
  CHECK(reduced_expected_cost(red, p)[0] ==
        doctest::Approx(expected_cost(g, p)[0]).epsilon(1e-14));
}

TEST_CASE("policy-independent reduction: xor channel factors") {
  const double prob = 0.3;
  auto g = make_xor_channel_game(prob);
  auto red = policy_independent_reduce(g);
  const auto& f = red.ratio.finite[1];
  // f(y1 | u0) = 2 P(bit = y1 xor u0), independent of w0 and y0. Cells with
  // y0 != w0 have zero conditioning probability (y0 = w0 is deterministic)
  // and carry a zero factor.
  for (int w0 = 0; w0 < 2; ++w0)
    for (int u0 = 0; u0 < 2; ++u0)
      for (int y1 = 0; y1 < 2; ++y1) {
        const double expect = (y1 ^ u0) == 1 ? 2 * prob : 2 * (1 - prob);
        CHECK(f.at(w0, {w0}, {u0}, y1) == doctest::Approx(expect));
        CHECK(f.at(w0, {1 - w0}, {u0}, y1) == doctest::Approx(0.0));
      }

  SUBCASE("factors integrate to one on reachable conditioning cells") {
    for (int w0 = 0; w0 < 2; ++w0)
      for (int u0 = 0; u0 < 2; ++u0) {
        double s = 0.0;
        for (int y1 = 0; y1 < 2; ++y1) s += f.at(w0, {w0}, {u0}, y1) * 0.5;
        CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
      }
  }
}

TEST_CASE("measure-change cost identity is exact on finite games") {
  for (std::uint64_t seed : {11u, 12u, 13u, 14u, 15u}) {
    auto g = make_random_finite_game(seed);
    auto red = policy_independent_reduce(g);
    for (std::uint64_t ps : {1u, 2u, 3u}) {
      PolicyProfile p = random_table(g, 100 * seed + ps);
      auto jp = expected_cost(g, p);
      auto jq = reduced_expected_cost(red, p);
      for (int i = 0; i < g.num_players; ++i)
        CHECK(jq[i] == doctest::Approx(jp[i]).epsilon(1e-12));
    }
  }
}

namespace {

// Two-DM Gaussian game with an additive-noise channel yhat1 = u0 + v.
GameSpec make_gaussian_channel_game() {
  GameSpec g;
  g.variant = Variant::Dynamic;
  g.num_players = 2;
  g.primitives.family = Family::Gaussian;
  g.primitives.gaussian_blocks = {{"w0", 1}, {"v0", 1}, {"v1", 1}};
  g.primitives.mean = VectorXd::Zero(3);
  g.primitives.cov = MatrixXd::Identity(3, 3);
  g.dms = {{0, 0, 0}, {1, 0, 1}};
  g.action_dims = {1, 1};
  ObsKernel k0;
  k0.G = MatrixXd::Identity(1, 1);
  k0.H = (MatrixXd(1, 3) << 1, 1, 0).finished();  // y0 = w0 + v0
  k0.D = MatrixXd(1, 0);
  ObsKernel k1;
  k1.deps = {0};
  k1.fwd = {0};
  k1.G = MatrixXd::Identity(1, 1);
  k1.H = (MatrixXd(1, 3) << 0, 0, 1).finished();   // yhat1 = v1 + u0
  k1.D = MatrixXd::Identity(1, 1);
  g.obs = {k0, k1};
  g.costs.kind = CostSpec::Kind::Quadratic;
  VectorXd s(5);
  s << -1, 0, 0, 1, 1;  // u0 + u1 - w0
  g.costs.quad = {{s * s.transpose(), VectorXd::Zero(5), 0.0},
                  {s * s.transpose(), (VectorXd(5) << 0, 0, 0, 1, 0).finished(), 0.0}};
  return g;
}

}  // namespace

TEST_CASE("measure-change identity on the Gaussian channel") {
  auto g = make_gaussian_channel_game();
  auto red = policy_independent_reduce(g);

  SUBCASE("factor matches the density ratio of N(u,1) to N(0,1)") {
    const auto& f = red.ratio.gauss[1];
    CHECK(f.mean_w0(0, 0) == doctest::Approx(0.0));
    CHECK(f.mean_u[0](0, 0) == doctest::Approx(1.0));
    CHECK(f.mean0(0) == doctest::Approx(0.0));
    CHECK(f.cov(0, 0) == doctest::Approx(1.0));
  }
  SUBCASE("weighted Monte Carlo agrees with the exact cost within 4 sigma") {
    PolicyProfile p = random_affine(g, 77);
    auto exact = expected_cost(g, p);
    auto est = reduced_expected_cost_mc(red, p, kDefaultSeed, 200000);
    for (int i = 0; i < 2; ++i)
      CHECK(std::abs(est.value[i] - exact[i]) <= 4.0 * est.std_error[i]);
  }
  SUBCASE("noiseless channels are refused") {
    auto bad = g;
    bad.obs[1].H.setZero();  // yhat1 = u0, no dominating product measure
    CHECK_THROWS_WITH_AS(policy_independent_reduce(bad),
                         doctest::Contains("degenerate"), SpecError);
  }
}

TEST_CASE("policy-dependent reduction constructs the static policies") {
  SUBCASE("tracking profile keeps tracking the noise") {
    auto g = make_spe_reduction_gap_game(0.5);
    const double c = 0.7, d = -0.4, e = 1.3;
    PolicyProfile gd = zero_affine_profile(g);
    gd.dm[0].affine.A(0, 0) = c;
    gd.dm[1].affine.A(0, 0) = d;
    gd.dm[1].affine.A(0, 1) = e;
    auto gs = policy_dependent_reduce(g, gd);
    CHECK(gs.variant == Variant::Static);
    CHECK(gs.dm[0].affine.A(0, 0) == doctest::Approx(c));
    CHECK(gs.dm[1].affine.A(0, 0) == doctest::Approx(d + e * c));
    CHECK(gs.dm[1].affine.A(0, 1) == doctest::Approx(e));
  }
  SUBCASE("cancelling profile flips the forwarded gain sign") {
    auto g = make_misaligned_target_game(1.0);
    auto gs = policy_dependent_reduce(g, make_two_dm_profile(g, -1.0));
    CHECK(gs.dm[1].affine.A(0, 0) == doctest::Approx(0.0));
    CHECK(gs.dm[1].affine.A(0, 1) == doctest::Approx(-1.0));
  }
  SUBCASE("decoupled game reduces verbatim") {
    auto g = make_spe_reduction_gap_game(0.5);
    g.obs[1].D.setZero();
    PolicyProfile gd = random_affine(g, 5);
    auto gs = policy_dependent_reduce(g, gd);
    for (int m = 0; m < 2; ++m) {
      CHECK(gs.dm[m].affine.A.isApprox(gd.dm[m].affine.A, 1e-14));
      CHECK(gs.dm[m].affine.a.isApprox(gd.dm[m].affine.a, 1e-14));
    }
  }
  SUBCASE("costs are unaltered by the reduction") {
    auto g = make_chain_game(21);
    PolicyProfile gd = random_affine(g, 6);
    auto gs = policy_dependent_reduce(g, gd);
    auto jd = expected_cost(g, gd);
    auto js = expected_cost(with_variant(g, Variant::Static), gs);
    CHECK(js[0] == doctest::Approx(jd[0]).epsilon(1e-12));
    CHECK(js[1] == doctest::Approx(jd[1]).epsilon(1e-12));
  }
}

TEST_CASE("policy-dependent lift inverts the reduction") {
  SUBCASE("static gain on the first observation acquires a correction") {
    auto g = make_spe_lift_gap_game(0.5, 2.0);
    const double c = 0.9, d = 0.2, e = 1.0;
    PolicyProfile gs;
    gs.variant = Variant::Static;
    gs.dm.resize(2);
    gs.dm[0].affine = {(MatrixXd(1, 1) << c).finished(), VectorXd::Zero(1)};
    gs.dm[1].affine = {(MatrixXd(1, 2) << d, e).finished(), VectorXd::Zero(1)};
    auto gd = policy_dependent_lift(g, gs);
    CHECK(gd.variant == Variant::Dynamic);
    CHECK(gd.dm[1].affine.A(0, 0) == doctest::Approx(d - e * c));
    CHECK(gd.dm[1].affine.A(0, 1) == doctest::Approx(e));
  }
  SUBCASE("zero static profile lifts to zero") {
    auto g = make_spe_lift_gap_game(0.5, 2.0);
    PolicyProfile gs = zero_affine_profile(with_variant(g, Variant::Static));
    auto gd = policy_dependent_lift(g, gs);
    for (const auto& pol : gd.dm) {
      CHECK(pol.affine.A.cwiseAbs().maxCoeff() == 0.0);
      CHECK(pol.affine.a.cwiseAbs().maxCoeff() == 0.0);
    }
  }
  SUBCASE("round trips are the identity on random chains") {
    for (std::uint64_t seed : {31u, 32u, 33u}) {
      auto g = make_chain_game(seed);
      PolicyProfile gd = random_affine(g, seed + 100);
      auto back = policy_dependent_lift(g, policy_dependent_reduce(g, gd));
      for (int m = 0; m < 3; ++m) {
        CHECK((back.dm[m].affine.A - gd.dm[m].affine.A).cwiseAbs().maxCoeff() <=
              1e-12);
        CHECK((back.dm[m].affine.a - gd.dm[m].affine.a).cwiseAbs().maxCoeff() <=
              1e-12);
      }
      PolicyProfile gs = random_affine(with_variant(g, Variant::Static), seed + 200);
      auto fwd = policy_dependent_reduce(g, policy_dependent_lift(g, gs));
      for (int m = 0; m < 3; ++m)
        CHECK((fwd.dm[m].affine.A - gs.dm[m].affine.A).cwiseAbs().maxCoeff() <=
              1e-12);
    }
  }
  SUBCASE("singular mixing is refused") {
    auto g = make_chain_game(40);
    g.obs[1].G(0, 0) = 0.0;
    PolicyProfile gs = random_affine(with_variant(g, Variant::Static), 41);
    CHECK_THROWS_AS(policy_dependent_lift(g, gs), SpecError);
  }
}

TEST_CASE("control-sharing expansion and embedding") {
  SUBCASE("no precedence: expansion is the identity on layouts") {
    auto g = make_spe_reduction_gap_game(0.5);
    g.obs[1].deps.clear();
    g.obs[1].D = MatrixXd(1, 0);
    auto e = control_sharing_expand(g);
    CHECK(e.variant == Variant::DynamicCS);
    CHECK(info_layout(e, 1).dim == info_layout(g, 1).dim);
  }
  SUBCASE("expanded info holds the shared action between the observations") {
    auto g = make_misaligned_target_game(1.0);
    auto e = control_sharing_expand(g);
    const auto lay = info_layout(e, 1);
    REQUIRE(lay.segments.size() == 3);
    CHECK(lay.segments[0].kind == InfoSegment::Kind::Obs);
    CHECK(lay.segments[1].kind == InfoSegment::Kind::Act);
    CHECK(lay.segments[1].dm == 0);
    CHECK(lay.segments[2].kind == InfoSegment::Kind::Obs);
    CHECK(lay.segments[2].dm == 1);
  }
  SUBCASE("zero-padded embedding preserves expected cost exactly") {
    auto g = make_chain_game(50);
    auto e = control_sharing_expand(g);
    PolicyProfile p = random_affine(g, 51);
    auto pe = embed_profile_cs(e, p);
    auto j0 = expected_cost(g, p);
    auto j1 = expected_cost(e, pe);
    CHECK(j1[0] == doctest::Approx(j0[0]).epsilon(1e-14));
    CHECK(j1[1] == doctest::Approx(j0[1]).epsilon(1e-14));
  }
  SUBCASE("table embedding preserves expected cost exactly") {
    auto g = make_xor_channel_game(0.4);
    auto e = control_sharing_expand(g);
    PolicyProfile p = random_table(g, 52);
    auto pe = embed_profile_cs(e, p);
    auto j0 = expected_cost(g, p);
    auto j1 = expected_cost(e, pe);
    CHECK(j1[0] == doctest::Approx(j0[0]).epsilon(1e-14));
    CHECK(j1[1] == doctest::Approx(j0[1]).epsilon(1e-14));
  }
}

TEST_CASE("control-sharing reduction substitutes shared actions for mixing") {
  auto g = control_sharing_expand(make_chain_game(60));

  SUBCASE("gain arithmetic matches the substitution formula") {
    // Single-link check on the two-DM game with G2, D2 known.
    auto g2 = make_misaligned_target_game(1.0);
    g2.obs[1].G = (MatrixXd(1, 1) << 2.0).finished();
    g2.obs[1].D = (MatrixXd(1, 1) << 0.5).finished();
    auto e = control_sharing_expand(g2);
    PolicyProfile p = zero_affine_profile(e);
    const double P = 0.3, Q = -0.7, R = 1.1;
    p.dm[1].affine.A << P, Q, R;  // (y0, u0, yhat1)
    auto r = control_sharing_reduce(e, p);
    CHECK(r.variant == Variant::StaticCS);
    CHECK(r.dm[1].affine.A(0, 0) == doctest::Approx(P * 1.0));      // P G0
    CHECK(r.dm[1].affine.A(0, 1) == doctest::Approx(Q + R * 0.5));  // Q + R D
    CHECK(r.dm[1].affine.A(0, 2) == doctest::Approx(R * 2.0));      // R G
  }
  SUBCASE("output is bit-identical under precedent-policy replacement") {
    PolicyProfile p = random_affine(g, 61);
    PolicyProfile q = random_affine(g, 62);
    q.dm[2] = p.dm[2];  // same last DM, different precedents
    auto rp = control_sharing_reduce(g, p);
    auto rq = control_sharing_reduce(g, q);
    CHECK(rp.dm[2].affine.A == rq.dm[2].affine.A);
    CHECK(rp.dm[2].affine.a == rq.dm[2].affine.a);
  }
  SUBCASE("reduce and lift are mutually inverse") {
    PolicyProfile p = random_affine(g, 63);
    auto back = control_sharing_lift(g, control_sharing_reduce(g, p));
    for (int m = 0; m < g.num_dms(); ++m)
      CHECK((back.dm[m].affine.A - p.dm[m].affine.A).cwiseAbs().maxCoeff() <=
            1e-12);
  }
  SUBCASE("actions agree realization-wise after reduction") {
    PolicyProfile p = random_affine(g, 64);
    auto r = control_sharing_reduce(g, p);
    auto mapD = compose_actions(g, p);
    auto mapS = compose_actions(with_variant(g, Variant::StaticCS), r);
    for (int m = 0; m < g.num_dms(); ++m) {
      CHECK((mapD.gain[m] - mapS.gain[m]).cwiseAbs().maxCoeff() <= 1e-12);
      CHECK((mapD.offset[m] - mapS.offset[m]).cwiseAbs().maxCoeff() <= 1e-12);
    }
  }
}
