// Forward composition of policies along the precedence DAG, exact and
// Monte Carlo expected costs, and the Condition (C) affinity check.
#pragma once

#include <cmath>
#include <random>

#include "isred/types.hpp"

namespace isred {

// Everything in the game expressed as an affine function of zeta:
// observations, canonical info vectors, and actions, per DM.
struct ComposedAffine {
  std::vector<MatrixXd> obs_gain;
  std::vector<VectorXd> obs_off;
  std::vector<MatrixXd> info_gain;
  std::vector<VectorXd> info_off;
  std::vector<MatrixXd> act_gain;
  std::vector<VectorXd> act_off;
};

namespace detail {

inline void require_affine(const GameSpec& g, const PolicyProfile& p) {
  require(g.primitives.family == Family::Gaussian,
          "compose: affine composition needs the Gaussian family");
  for (const auto& pol : p.dm)
    require(pol.kind == Policy::Kind::Affine,
            "compose: non-affine policy in Gaussian family is unsupported");
}

}  // namespace detail

// Triangular substitution turning u into a measurable function of zeta alone.
// `process_order` may be any topological order of the precedence DAG; the
// result does not depend on it.
inline ComposedAffine compose_affine(const GameSpec& g, const PolicyProfile& p,
                                     const std::vector<int>& process_order = {}) {
  validate_profile(g, p);
  detail::require_affine(g, p);
  const int M = g.num_dms();
  const int dz = g.primitives.dim();
  ComposedAffine c;
  c.obs_gain.resize(M);
  c.obs_off.resize(M);
  c.info_gain.resize(M);
  c.info_off.resize(M);
  c.act_gain.resize(M);
  c.act_off.resize(M);

  std::vector<int> order = process_order;
  if (order.empty()) {
    order.resize(M);
    for (int m = 0; m < M; ++m) order[m] = m;
  }
  std::vector<char> done(M, 0);
  for (int m : order) {
    const auto& k = g.obs[m];
    for (int j : k.deps)
      detail::require(done[j], "compose: processing order is not topological");
    for (int j : k.fwd)
      detail::require(done[j], "compose: processing order is not topological");

    const int dy = k.obs_dim();
    if (variant_is_dynamic(g.variant)) {
      MatrixXd gain = k.G * k.H;
      VectorXd off = VectorXd::Zero(dy);
      int col = 0;
      for (int j : k.deps) {
        const int dj = g.action_dim(j);
        gain += k.D.middleCols(col, dj) * c.act_gain[j];
        off += k.D.middleCols(col, dj) * c.act_off[j];
        col += dj;
      }
      c.obs_gain[m] = gain;
      c.obs_off[m] = off;
    } else {
      c.obs_gain[m] = k.H;
      c.obs_off[m] = VectorXd::Zero(dy);
    }

    const auto lay = info_layout(g, m);
    MatrixXd ig(lay.dim, dz);
    VectorXd io(lay.dim);
    for (const auto& seg : lay.segments) {
      if (seg.kind == InfoSegment::Kind::Obs) {
        ig.middleRows(seg.offset, seg.size) = c.obs_gain[seg.dm];
        io.segment(seg.offset, seg.size) = c.obs_off[seg.dm];
      } else {
        ig.middleRows(seg.offset, seg.size) = c.act_gain[seg.dm];
        io.segment(seg.offset, seg.size) = c.act_off[seg.dm];
      }
    }
    c.info_gain[m] = ig;
    c.info_off[m] = io;
    c.act_gain[m] = p.dm[m].affine.A * ig;
    c.act_off[m] = p.dm[m].affine.A * io + p.dm[m].affine.a;
    done[m] = 1;
  }
  return c;
}

// Per-DM affine action maps u_m = gain[m] * zeta + offset[m].
struct AffineActionMap {
  std::vector<MatrixXd> gain;
  std::vector<VectorXd> offset;
};

inline AffineActionMap compose_actions(const GameSpec& g, const PolicyProfile& p,
                                       const std::vector<int>& process_order = {}) {
  auto c = compose_affine(g, p, process_order);
  return {std::move(c.act_gain), std::move(c.act_off)};
}

// Finite composition: per joint primitive realization, the realized
// observation symbols, info indices and action indices of every DM.
struct ComposedFinite {
  std::vector<std::vector<int>> obs;   // [z][m] symbol
  std::vector<std::vector<int>> act;   // [z][m] action index
  std::vector<std::vector<std::int64_t>> info;  // [z][m] joint info index
};

inline ComposedFinite compose_finite(const GameSpec& g, const PolicyProfile& p) {
  validate_profile(g, p);
  detail::require(g.primitives.family == Family::Finite,
                  "compose: finite composition needs the Finite family");
  const int M = g.num_dms();
  const std::int64_t Z = g.primitives.joint_card();
  ComposedFinite out;
  out.obs.assign(Z, std::vector<int>(M));
  out.act.assign(Z, std::vector<int>(M));
  out.info.assign(Z, std::vector<std::int64_t>(M));
  for (std::int64_t z = 0; z < Z; ++z) {
    for (int m = 0; m < M; ++m) {
      const auto& k = g.obs[m];
      std::int64_t dep_idx = 0;
      for (int j : k.deps) dep_idx = dep_idx * g.action_card(j) + out.act[z][j];
      std::int64_t dep_card = 1;
      for (int j : k.deps) dep_card *= g.action_card(j);
      out.obs[z][m] = k.table[z * dep_card + dep_idx];

      const auto lay = info_layout(g, m);
      std::int64_t idx = 0;
      for (const auto& seg : lay.segments) {
        if (seg.kind == InfoSegment::Kind::Obs)
          idx = idx * g.obs[seg.dm].card + out.obs[z][seg.dm];
        else
          idx = idx * g.action_card(seg.dm) + out.act[z][seg.dm];
      }
      out.info[z][m] = idx;
      out.act[z][m] = p.dm[m].table.act[idx];
    }
  }
  return out;
}

// One forward pass through the game at a fixed zeta (simulation path,
// independent of the composed-coefficient path).
inline VectorXd simulate_actions(const GameSpec& g, const PolicyProfile& p,
                                 const VectorXd& zeta) {
  const int M = g.num_dms();
  std::vector<VectorXd> yhat(M), act(M);
  for (int m = 0; m < M; ++m) {
    const auto& k = g.obs[m];
    if (variant_is_dynamic(g.variant)) {
      VectorXd y = k.G * (k.H * zeta);
      int col = 0;
      for (int j : k.deps) {
        y += k.D.middleCols(col, g.action_dim(j)) * act[j];
        col += g.action_dim(j);
      }
      yhat[m] = y;
    } else {
      yhat[m] = k.H * zeta;
    }
    const auto lay = info_layout(g, m);
    VectorXd info(lay.dim);
    for (const auto& seg : lay.segments)
      info.segment(seg.offset, seg.size) =
          seg.kind == InfoSegment::Kind::Obs ? yhat[seg.dm] : act[seg.dm];
    act[m] = p.dm[m].affine.A * info + p.dm[m].affine.a;
  }
  VectorXd u(g.total_action_dim());
  for (int m = 0; m < M; ++m) u.segment(g.action_offset(m), g.action_dim(m)) = act[m];
  return u;
}

namespace detail {

inline double cost_at(const GameSpec& g, int player, const VectorXd& zeta,
                      const VectorXd& u) {
  const auto& q = g.costs.quad[player];
  VectorXd z(g.z_dim());
  z << zeta, u;
  return z.dot(q.M * z) + q.b.dot(z) + q.c;
}

inline double finite_cost_at(const GameSpec& g, int player, std::int64_t z,
                             const std::vector<int>& act) {
  std::int64_t aidx = 0;
  for (int m = 0; m < g.num_dms(); ++m) aidx = aidx * g.action_card(m) + act[m];
  return g.costs.table[player][z * g.joint_action_card() + aidx];
}

}  // namespace detail

// Exact expected cost per player. Finite games sum over the support;
// Gaussian-quadratic games use the moments of the composed z = [zeta; u].
inline VectorXd expected_cost(const GameSpec& g, const PolicyProfile& p) {
  VectorXd J = VectorXd::Zero(g.num_players);
  if (g.primitives.family == Family::Finite) {
    auto comp = compose_finite(g, p);
    for (std::int64_t z = 0; z < g.primitives.joint_card(); ++z) {
      const double pz = g.primitives.joint_prob(z);
      for (int i = 0; i < g.num_players; ++i)
        J[i] += pz * detail::finite_cost_at(g, i, z, comp.act[z]);
    }
    return J;
  }
  detail::require(g.costs.kind == CostSpec::Kind::Quadratic,
                  "expected_cost: exact Gaussian evaluation needs quadratic costs");
  auto comp = compose_affine(g, p);
  const int dz = g.primitives.dim();
  const int du = g.total_action_dim();
  MatrixXd Z(dz + du, dz);
  VectorXd z0 = VectorXd::Zero(dz + du);
  Z.topRows(dz) = MatrixXd::Identity(dz, dz);
  for (int m = 0; m < g.num_dms(); ++m) {
    Z.middleRows(dz + g.action_offset(m), g.action_dim(m)) = comp.act_gain[m];
    z0.segment(dz + g.action_offset(m), g.action_dim(m)) = comp.act_off[m];
  }
  const VectorXd mu = Z * g.primitives.mean + z0;
  const MatrixXd Sig = Z * g.primitives.cov * Z.transpose();
  for (int i = 0; i < g.num_players; ++i) {
    const auto& q = g.costs.quad[i];
    J[i] = (q.M * Sig).trace() + mu.dot(q.M * mu) + q.b.dot(mu) + q.c;
  }
  return J;
}

struct CostEstimate {
  VectorXd value;
  VectorXd std_error;
  std::int64_t samples = 0;
};

inline VectorXd sample_zeta(const GameSpec& g, std::mt19937_64& rng,
                            const MatrixXd& chol) {
  std::normal_distribution<double> nd(0.0, 1.0);
  VectorXd e(g.primitives.dim());
  for (int i = 0; i < e.size(); ++i) e[i] = nd(rng);
  return g.primitives.mean + chol * e;
}

// Monte Carlo expected cost through the simulation path.
inline CostEstimate expected_cost_mc(const GameSpec& g, const PolicyProfile& p,
                                     std::uint64_t seed, std::int64_t n) {
  detail::require(n > 0, "expected_cost_mc: sample count must be positive");
  validate_profile(g, p);
  const int N = g.num_players;
  VectorXd sum = VectorXd::Zero(N), sumsq = VectorXd::Zero(N);
  std::mt19937_64 rng(seed);
  if (g.primitives.family == Family::Gaussian) {
    const MatrixXd chol = g.primitives.cov.llt().matrixL();
    for (std::int64_t s = 0; s < n; ++s) {
      const VectorXd zeta = sample_zeta(g, rng, chol);
      const VectorXd u = simulate_actions(g, p, zeta);
      for (int i = 0; i < N; ++i) {
        const double c = detail::cost_at(g, i, zeta, u);
        sum[i] += c;
        sumsq[i] += c * c;
      }
    }
  } else {
    auto comp = compose_finite(g, p);
    std::uniform_real_distribution<double> ud(0.0, 1.0);
    for (std::int64_t s = 0; s < n; ++s) {
      std::int64_t z = 0;
      for (const auto& blk : g.primitives.finite_blocks) {
        double r = ud(rng), acc = 0.0;
        int v = blk.card() - 1;
        for (int k = 0; k < blk.card(); ++k) {
          acc += blk.probs[k];
          if (r <= acc) {
            v = k;
            break;
          }
        }
        z = z * blk.card() + v;
      }
      for (int i = 0; i < N; ++i) {
        const double c = detail::finite_cost_at(g, i, z, comp.act[z]);
        sum[i] += c;
        sumsq[i] += c * c;
      }
    }
  }
  CostEstimate est;
  est.samples = n;
  est.value = sum / static_cast<double>(n);
  est.std_error = VectorXd::Zero(N);
  for (int i = 0; i < N; ++i) {
    const double var =
        std::max(0.0, sumsq[i] / n - est.value[i] * est.value[i]);
    est.std_error[i] = std::sqrt(var / static_cast<double>(n));
  }
  return est;
}

// Condition (C): the composite dependence of each DM's action on the actions
// shared into its observation is affine, with a linear coefficient that does
// not vary with the primitive realization.
struct ConditionCReport {
  std::vector<bool> affine;
  std::vector<MatrixXd> coeff;  // d/d(u_deps) of the composed action
};

inline ConditionCReport check_condition_C(const GameSpec& g, const PolicyProfile& p) {
  validate_profile(g, p);
  const int M = g.num_dms();
  ConditionCReport rep;
  rep.affine.assign(M, true);
  rep.coeff.resize(M);

  if (g.primitives.family == Family::Gaussian) {
    // Affine policies over affine kernels compose affinely; collect the exact
    // coefficient of u_deps(m) by differentiating the forward pass.
    for (int m = 0; m < M; ++m) {
      // d(yhat_j)/d(u_l) and d(u_j)/d(u_l) for the free actions l in deps(m).
      const auto& deps = g.obs[m].deps;
      int free_dim = 0;
      for (int l : deps) free_dim += g.action_dim(l);
      std::vector<MatrixXd> dy(M), du(M);
      for (int j = 0; j <= m; ++j) {
        const int dyj = g.obs[j].obs_dim();
        MatrixXd dyhat = MatrixXd::Zero(dyj, free_dim);
        if (variant_is_dynamic(g.variant)) {
          int col = 0;
          for (int l : g.obs[j].deps) {
            const int dl = g.action_dim(l);
            int fcol = 0;
            bool is_free = false;
            for (int f : deps) {
              if (f == l) {
                is_free = true;
                break;
              }
              fcol += g.action_dim(f);
            }
            if (is_free)
              dyhat.middleCols(fcol, dl) += g.obs[j].D.middleCols(col, dl);
            if (j > l)
              dyhat += g.obs[j].D.middleCols(col, dl) * du[l];
            col += dl;
          }
        }
        dy[j] = dyhat;
        if (j == m) break;
        const auto lay = info_layout(g, j);
        MatrixXd dinfo = MatrixXd::Zero(lay.dim, free_dim);
        for (const auto& seg : lay.segments) {
          if (seg.kind == InfoSegment::Kind::Obs)
            dinfo.middleRows(seg.offset, seg.size) = dy[seg.dm];
          else {
            int fcol = 0;
            for (int f : deps) {
              if (f == seg.dm)
                dinfo.block(seg.offset, fcol, seg.size, seg.size) +=
                    MatrixXd::Identity(seg.size, seg.size);
              fcol += g.action_dim(f);
            }
            dinfo.middleRows(seg.offset, seg.size) += du[seg.dm];
          }
        }
        du[j] = p.dm[j].affine.A * dinfo;
      }
      const auto lay = info_layout(g, m);
      MatrixXd dinfo = MatrixXd::Zero(lay.dim, free_dim);
      for (const auto& seg : lay.segments) {
        if (seg.kind == InfoSegment::Kind::Obs)
          dinfo.middleRows(seg.offset, seg.size) = dy[seg.dm];
        else {
          int fcol = 0;
          for (int f : deps) {
            if (f == seg.dm)
              dinfo.block(seg.offset, fcol, seg.size, seg.size) +=
                  MatrixXd::Identity(seg.size, seg.size);
            fcol += g.action_dim(f);
          }
          dinfo.middleRows(seg.offset, seg.size) += du[seg.dm];
        }
      }
      rep.coeff[m] = p.dm[m].affine.A * dinfo;
    }
    return rep;
  }

  // Finite family: exhaust the free precedent actions for every primitive
  // realization and fit one shared linear coefficient (intercepts may vary
  // with the realization); a nonzero residual refutes affinity.
  const std::int64_t Z = g.primitives.joint_card();
  for (int m = 0; m < M; ++m) {
    const auto& deps = g.obs[m].deps;
    if (deps.empty()) {
      rep.coeff[m] = MatrixXd::Zero(1, 0);
      continue;
    }
    std::int64_t grid = 1;
    for (int j : deps) grid *= g.action_card(j);
    const int nd = static_cast<int>(deps.size());
    // Rows: one sample per (z, grid point). Columns: slopes per dep, then one
    // intercept per z.
    const std::int64_t rows = Z * grid;
    MatrixXd X = MatrixXd::Zero(rows, nd + Z);
    VectorXd yv(rows);
    std::int64_t r = 0;
    for (std::int64_t z = 0; z < Z; ++z) {
      for (std::int64_t gpt = 0; gpt < grid; ++gpt) {
        // Decode grid point into per-dep action indices (first dep most
        // significant), then run the forward pass with free precedent actions.
        std::vector<int> free_act(g.num_dms(), 0);
        std::int64_t rem = gpt;
        for (int d = nd - 1; d >= 0; --d) {
          free_act[deps[d]] = static_cast<int>(rem % g.action_card(deps[d]));
          rem /= g.action_card(deps[d]);
        }
        // Forward pass: precedent DMs in deps use the forced actions, others
        // follow the profile.
        std::vector<int> obs_sym(m + 1), act_idx(m + 1);
        for (int j = 0; j <= m; ++j) {
          const auto& k = g.obs[j];
          std::int64_t dep_idx = 0, dep_card = 1;
          for (int l : k.deps) {
            dep_idx = dep_idx * g.action_card(l) + act_idx[l];
            dep_card *= g.action_card(l);
          }
          obs_sym[j] = k.table[z * dep_card + dep_idx];
          const auto lay = info_layout(g, j);
          std::int64_t idx = 0;
          for (const auto& seg : lay.segments)
            idx = seg.kind == InfoSegment::Kind::Obs
                      ? idx * g.obs[seg.dm].card + obs_sym[seg.dm]
                      : idx * g.action_card(seg.dm) + act_idx[seg.dm];
          const bool forced =
              std::find(deps.begin(), deps.end(), j) != deps.end();
          act_idx[j] = forced && j != m ? free_act[j] : p.dm[j].table.act[idx];
        }
        for (int d = 0; d < nd; ++d)
          X(r, d) = g.action_values[deps[d]][free_act[deps[d]]];
        X(r, nd + z) = 1.0;
        yv[r] = g.action_values[m][act_idx[m]];
        ++r;
      }
    }
    const VectorXd sol = X.completeOrthogonalDecomposition().solve(yv);
    const double resid = (X * sol - yv).cwiseAbs().maxCoeff();
    rep.affine[m] = resid <= 1e-9;
    rep.coeff[m] = sol.head(nd).transpose();
  }
  return rep;
}

}  // namespace isred
