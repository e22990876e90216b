// Hand-built benchmark games: the two-DM counterexample games in which
// reductions break or preserve equilibria, small finite toys, and seeded
// random generators for the property suites.
#pragma once

#include <random>

#include "isred/types.hpp"

namespace isred {

namespace detail {

inline GameSpec two_dm_gaussian_shell() {
  GameSpec g;
  g.variant = Variant::Dynamic;
  g.num_players = 2;
  g.primitives.family = Family::Gaussian;
  g.primitives.gaussian_blocks = {{"w0", 0}, {"dm1", 1}, {"dm2", 1}};
  g.primitives.mean = VectorXd::Zero(2);
  g.primitives.cov = MatrixXd::Identity(2, 2);
  g.dms = {{0, 0, 0}, {1, 0, 1}};
  g.action_dims = {1, 1};

  // DM 0 observes its own noise; DM 1 sees DM 0's info plus noise + u0.
  ObsKernel k0;
  k0.G = MatrixXd::Identity(1, 1);
  k0.H = (MatrixXd(1, 2) << 1, 0).finished();
  k0.D = MatrixXd(1, 0);
  ObsKernel k1;
  k1.deps = {0};
  k1.fwd = {0};
  k1.G = MatrixXd::Identity(1, 1);
  k1.H = (MatrixXd(1, 2) << 0, 1).finished();
  k1.D = MatrixXd::Identity(1, 1);
  g.obs = {k0, k1};
  return g;
}

}  // namespace detail

// NZSG with costs (u0 + u1 - B + w)^2 and (u0 + u1 + w)^2, w the second DM's
// observation noise. The dynamic game has a DM-NE; its policy-dependent
// static reduction admits no stationary policy once B != 0.
inline GameSpec make_misaligned_target_game(double B) {
  GameSpec g = detail::two_dm_gaussian_shell();
  // z = (w1, w2, u0, u1); v = u0 + u1 + w2.
  VectorXd s(4);
  s << 0, 1, 1, 1;
  QuadraticCost c0{s * s.transpose(), -2.0 * B * s, B * B};
  QuadraticCost c1{s * s.transpose(), VectorXd::Zero(4), 0.0};
  g.costs.kind = CostSpec::Kind::Quadratic;
  g.costs.quad = {c0, c1};
  g.costs.zero_sum = false;
  return g;
}

// ZSG with cost alpha*(u0)^2 - (u0 - u1 + w)^2, minimizer first. The dynamic
// SPE fails to stay a saddle point after the policy-dependent reduction.
inline GameSpec make_spe_reduction_gap_game(double alpha) {
  GameSpec g = detail::two_dm_gaussian_shell();
  VectorXd e(4), r(4);
  e << 0, 0, 1, 0;  // u0
  r << 0, 1, 1, -1; // u0 - u1 + w2
  MatrixXd M = alpha * e * e.transpose() - r * r.transpose();
  g.costs.kind = CostSpec::Kind::Quadratic;
  g.costs.quad = {{M, VectorXd::Zero(4), 0.0}, {-M, VectorXd::Zero(4), 0.0}};
  g.costs.zero_sum = true;
  return g;
}

// ZSG with cost (u0 - u1 + w)^2 - alpha*(u0)^2 - beta*(u1 - w)^2. The static
// game has a SPE whose lift to the dynamic game stops being a saddle point.
inline GameSpec make_spe_lift_gap_game(double alpha, double beta) {
  GameSpec g = detail::two_dm_gaussian_shell();
  VectorXd e(4), r(4), q(4);
  e << 0, 0, 1, 0;
  r << 0, 1, 1, -1;
  q << 0, -1, 0, 1;  // u1 - w2
  MatrixXd M =
      r * r.transpose() - alpha * e * e.transpose() - beta * q * q.transpose();
  g.costs.kind = CostSpec::Kind::Quadratic;
  g.costs.quad = {{M, VectorXd::Zero(4), 0.0}, {-M, VectorXd::Zero(4), 0.0}};
  g.costs.zero_sum = true;
  return g;
}

// Profile (0, (0, g1)): first DM plays zero, second plays g1 * own
// observation (forwarded part ignored).
inline PolicyProfile make_two_dm_profile(const GameSpec& g, double g1) {
  PolicyProfile p = zero_affine_profile(g);
  p.dm[1].affine.A(0, 1) = g1;
  return p;
}

// Binary coordination game: y0 = w0, y1 = u0, both players pay 1{u0 != u1}.
// The second DM sees only the first action (16 pure profiles in total).
inline GameSpec make_coordination_game() {
  GameSpec g;
  g.variant = Variant::General;
  g.num_players = 2;
  g.primitives.family = Family::Finite;
  g.primitives.finite_blocks = {{"w0", {0, 1}, {0.5, 0.5}}};
  g.dms = {{0, 0, 0}, {1, 0, 1}};
  g.action_values = {{0, 1}, {0, 1}};
  ObsKernel k0;
  k0.card = 2;
  k0.table = {0, 1};  // y0 = w0
  ObsKernel k1;
  k1.deps = {0};
  k1.card = 2;
  k1.table = {0, 1, 0, 1};  // y1 = u0, for both w0 values
  g.obs = {k0, k1};
  g.costs.kind = CostSpec::Kind::Table;
  std::vector<double> c(2 * 4);
  for (int z = 0; z < 2; ++z)
    for (int a0 = 0; a0 < 2; ++a0)
      for (int a1 = 0; a1 < 2; ++a1) c[z * 4 + a0 * 2 + a1] = a0 != a1 ? 1.0 : 0.0;
  g.costs.table = {c, c};
  g.costs.zero_sum = false;
  return g;
}

// Single-DM matching game: y = w0, cost 1{u != w0}.
inline GameSpec make_matching_game() {
  GameSpec g;
  g.variant = Variant::Dynamic;
  g.num_players = 1;
  g.primitives.family = Family::Finite;
  g.primitives.finite_blocks = {{"w0", {0, 1}, {0.5, 0.5}}};
  g.dms = {{0, 0, 0}};
  g.action_values = {{0, 1}};
  ObsKernel k;
  k.card = 2;
  k.table = {0, 1};
  g.obs = {k};
  g.costs.kind = CostSpec::Kind::Table;
  g.costs.table = {{0, 1, 1, 0}};  // [w0=0: u=0 ok], [w0=1: u=1 ok]
  return g;
}

// Two-DM game whose second observation is u0 XOR a private bit with
// P(bit = 1) = p; used to exercise the change-of-measure factors.
inline GameSpec make_xor_channel_game(double p) {
  GameSpec g;
  g.variant = Variant::Dynamic;
  g.num_players = 2;
  g.primitives.family = Family::Finite;
  g.primitives.finite_blocks = {{"w0", {0, 1}, {0.5, 0.5}},
                                {"dm2bit", {0, 1}, {1 - p, p}}};
  g.dms = {{0, 0, 0}, {1, 0, 1}};
  g.action_values = {{0, 1}, {0, 1}};
  ObsKernel k0;
  k0.card = 2;
  k0.table = {0, 0, 1, 1};  // y0 = w0 (joint z = (w0, bit), block 0 major)
  ObsKernel k1;
  k1.deps = {0};
  k1.fwd = {0};
  k1.card = 2;
  std::vector<int> t(4 * 2);
  for (int w = 0; w < 2; ++w)
    for (int bit = 0; bit < 2; ++bit)
      for (int u0 = 0; u0 < 2; ++u0) t[(w * 2 + bit) * 2 + u0] = u0 ^ bit;
  k1.table = t;
  g.obs = {k0, k1};
  g.costs.kind = CostSpec::Kind::Table;
  std::vector<double> c0(4 * 4), c1(4 * 4);
  for (std::int64_t z = 0; z < 4; ++z)
    for (int a0 = 0; a0 < 2; ++a0)
      for (int a1 = 0; a1 < 2; ++a1) {
        const int w0 = static_cast<int>(z / 2);
        c0[z * 4 + a0 * 2 + a1] = (a0 ^ a1) == w0 ? 0.0 : 1.0;
        c1[z * 4 + a0 * 2 + a1] = a1 == w0 ? 0.0 : 0.5;
      }
  g.costs.table = {c0, c1};
  return g;
}

// Seeded random finite game: up to three DMs with binary alphabets, chained
// forwarding, and costs reading only the common block and the actions.
inline GameSpec make_random_finite_game(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto pick = [&](int lo, int hi) {
    return std::uniform_int_distribution<int>(lo, hi)(rng);
  };
  auto unif = [&] { return std::uniform_real_distribution<double>(0.1, 0.9)(rng); };

  GameSpec g;
  g.variant = Variant::Dynamic;
  const int M = pick(2, 3);
  g.num_players = 2;
  g.primitives.family = Family::Finite;
  const double q = unif();
  g.primitives.finite_blocks.push_back({"w0", {0, 1}, {q, 1 - q}});
  for (int m = 0; m < M; ++m) {
    const double pm = unif();
    g.primitives.finite_blocks.push_back(
        {"dm" + std::to_string(m), {0, 1}, {pm, 1 - pm}});
    g.dms.push_back({m < M - 1 ? 0 : 1, m < M - 1 ? m : 0, m});
    g.action_values.push_back({0, 1});
  }
  for (int m = 0; m < M; ++m) {
    ObsKernel k;
    k.card = 2;
    if (m > 0 && pick(0, 1) == 1) {
      k.deps = {m - 1};
      k.fwd = {m - 1};
    }
    std::int64_t dep_card = k.deps.empty() ? 1 : 2;
    const std::int64_t Z = g.primitives.joint_card();
    k.table.resize(Z * dep_card);
    for (std::int64_t z = 0; z < Z; ++z)
      for (std::int64_t a = 0; a < dep_card; ++a) {
        const int w0 = g.primitives.block_index_of(z, 0);
        const int own = g.primitives.block_index_of(z, 1 + m);
        // Mix of own noise, the common block, and (if wired) the precedent
        // action, with a random flavor per game.
        int y = own;
        switch (pick(0, 2)) {
          case 0: y = own ^ w0; break;
          case 1: y = own; break;
          case 2: y = k.deps.empty() ? own ^ w0 : own ^ static_cast<int>(a); break;
        }
        k.table[z * dep_card + a] = y;
      }
    g.obs.push_back(k);
  }
  g.costs.kind = CostSpec::Kind::Table;
  const std::int64_t Z = g.primitives.joint_card();
  const std::int64_t A = g.joint_action_card();
  std::uniform_real_distribution<double> cost_d(0.0, 1.0);
  for (int i = 0; i < 2; ++i) {
    std::vector<double> c(Z * A);
    // Depends on w0 and the actions only, constant across the noise blocks.
    std::vector<double> base(2 * A);
    for (auto& v : base) v = cost_d(rng);
    for (std::int64_t z = 0; z < Z; ++z)
      for (std::int64_t a = 0; a < A; ++a)
        c[z * A + a] = base[g.primitives.block_index_of(z, 0) * A + a];
    g.costs.table.push_back(std::move(c));
  }
  return g;
}

}  // namespace isred
