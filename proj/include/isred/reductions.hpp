// The three reductions between information structures: policy-independent
// change of measure, policy-dependent static reduction (with its lift), and
// static measurements with control sharing. Certificates carry the
// invertibility and nestedness witnesses; density ratios carry the change of
// measure.
#pragma once

#include <cmath>

#include "isred/game_ops.hpp"

namespace isred {

inline constexpr double kConditionCap = 1e12;

// dP/dQ as a product of per-DM factors. Finite factors are exact tables over
// (w0, preceding observations and actions, own symbol); Gaussian factors are
// the log-density difference between the channel law and the standard-normal
// reference, stored through the conditional mean map and covariance.
struct FiniteFactor {
  // table[(((w0 * prodY + yPast) * prodU + uPast) * card + y)] with the
  // mixed-radix joints over DMs 0..m-1 (first DM most significant).
  std::vector<double> table;
  int w0_card = 1;
  std::vector<int> y_cards;  // cards of DMs 0..m-1
  std::vector<int> u_cards;
  int card = 1;

  double at(int w0, const std::vector<int>& y_past, const std::vector<int>& u_past,
            int y) const {
    std::int64_t yi = 0, ui = 0;
    for (size_t j = 0; j < y_cards.size(); ++j) yi = yi * y_cards[j] + y_past[j];
    for (size_t j = 0; j < u_cards.size(); ++j) ui = ui * u_cards[j] + u_past[j];
    std::int64_t prodU = 1;
    for (int c : u_cards) prodU *= c;
    std::int64_t prodY = 1;
    for (int c : y_cards) prodY *= c;
    return table[(((w0 * prodY + yi) * prodU + ui) * card) + y];
  }
};

struct GaussianFactor {
  MatrixXd mean_w0;               // conditional mean = mean_w0*w0 + sum dep terms + mean0
  std::vector<int> deps;          // DMs whose actions enter the mean
  std::vector<MatrixXd> mean_u;   // one per entry of deps
  VectorXd mean0;
  MatrixXd cov;                   // conditional covariance of the channel
};

struct DensityRatio {
  Family family = Family::Finite;
  std::vector<FiniteFactor> finite;
  std::vector<GaussianFactor> gauss;
};

struct InvertibilityWitness {
  std::vector<MatrixXd> G_inv;
  std::vector<double> condition_number;
};

struct ReductionCertificate {
  enum class Kind { PolicyIndependent, PolicyDependent, ControlSharing };
  Kind kind = Kind::PolicyDependent;
  NestednessReport nestedness;
  InvertibilityWitness invertibility;
  std::optional<DensityRatio> ratio;
};

inline const char* to_string(ReductionCertificate::Kind k) {
  switch (k) {
    case ReductionCertificate::Kind::PolicyIndependent: return "PolicyIndependent";
    case ReductionCertificate::Kind::PolicyDependent: return "PolicyDependent";
    case ReductionCertificate::Kind::ControlSharing: return "ControlSharing";
  }
  return "?";
}

namespace detail {

inline std::pair<MatrixXd, double> invert_with_condition(const MatrixXd& G,
                                                         int dm) {
  Eigen::JacobiSVD<MatrixXd> svd(G, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& s = svd.singularValues();
  const double cond =
      s.size() == 0 || s(s.size() - 1) <= 0.0
          ? std::numeric_limits<double>::infinity()
          : s(0) / s(s.size() - 1);
  require(cond < kConditionCap, "reduction: G of DM " + std::to_string(dm) +
                                    " is singular or ill conditioned");
  return {G.inverse(), cond};
}

}  // namespace detail

// Witnesses for the policy-dependent / control-sharing reductions: partial
// nestedness plus invertibility of every observation mixing matrix.
inline ReductionCertificate make_reduction_certificate(
    const GameSpec& g, ReductionCertificate::Kind kind) {
  ReductionCertificate cert;
  cert.kind = kind;
  cert.nestedness = validate_partial_nestedness(g);
  if (kind != ReductionCertificate::Kind::PolicyIndependent) {
    detail::require(cert.nestedness.nested,
                    "reduction: information structure is not partially nested");
    detail::require(g.primitives.family == Family::Gaussian,
                    "reduction: invertibility witnesses need affine kernels");
    for (int m = 0; m < g.num_dms(); ++m) {
      auto [inv, cond] = detail::invert_with_condition(g.obs[m].G, m);
      cert.invertibility.G_inv.push_back(std::move(inv));
      cert.invertibility.condition_number.push_back(cond);
    }
  }
  return cert;
}

// ---------------------------------------------------------------------------
// Policy-independent reduction (change of measure)

struct PiReduction {
  GameSpec reduced;      // observations independent with reference laws
  DensityRatio ratio;
  ReductionCertificate certificate;
};

namespace detail {

inline int dep_column_offset(const GameSpec& g, const ObsKernel& k, int j) {
  int off = 0;
  for (int d : k.deps) {
    if (d == j) return off;
    off += g.action_dim(d);
  }
  throw SpecError("reduction: dependency lookup failed");
}

inline PiReduction pi_reduce_finite(const GameSpec& g) {
  const int M = g.num_dms();
  const auto& pr = g.primitives;
  const int w0card = pr.finite_blocks[0].card();

  // Costs must read only the common block and the actions.
  const std::int64_t A = g.joint_action_card();
  const std::int64_t noise = pr.joint_card() / w0card;
  for (int i = 0; i < g.num_players; ++i)
    for (std::int64_t z = 0; z < pr.joint_card(); ++z) {
      const std::int64_t zrep =
          static_cast<std::int64_t>(pr.block_index_of(z, 0)) * noise;
      for (std::int64_t a = 0; a < A; ++a)
        require(std::abs(g.costs.table[i][z * A + a] -
                         g.costs.table[i][zrep * A + a]) <= 1e-12,
                "pi-reduce: cost depends on a private noise block");
    }

  PiReduction out;
  out.ratio.family = Family::Finite;
  out.certificate.kind = ReductionCertificate::Kind::PolicyIndependent;
  out.certificate.nestedness = validate_partial_nestedness(g);

  // Conditional factors against uniform references, by enumerating the noise
  // blocks for every (w0, forced action) cell.
  std::vector<FiniteFactor> factors(M);
  for (int m = 0; m < M; ++m) {
    FiniteFactor f;
    f.w0_card = w0card;
    f.card = g.obs[m].card;
    for (int j = 0; j < m; ++j) {
      f.y_cards.push_back(g.obs[j].card);
      f.u_cards.push_back(g.action_card(j));
    }
    std::int64_t prodY = 1, prodU = 1;
    for (int c : f.y_cards) prodY *= c;
    for (int c : f.u_cards) prodU *= c;
    f.table.assign(static_cast<size_t>(w0card) * prodY * prodU * f.card, 0.0);

    for (int w0 = 0; w0 < w0card; ++w0)
      for (std::int64_t up = 0; up < prodU; ++up) {
        std::vector<int> u(m);
        std::int64_t rem = up;
        for (int j = m - 1; j >= 0; --j) {
          u[j] = static_cast<int>(rem % f.u_cards[j]);
          rem /= f.u_cards[j];
        }
        // joint law of (y_0..y_m) given w0 and the forced actions
        std::vector<double> joint(prodY * f.card, 0.0);
        for (std::int64_t z = 0; z < pr.joint_card(); ++z) {
          if (pr.block_index_of(z, 0) != w0) continue;
          double pz = 1.0;
          for (int b = 1; b < pr.num_blocks(); ++b)
            pz *= pr.finite_blocks[b].probs[pr.block_index_of(z, b)];
          std::int64_t yidx = 0;
          int ym = 0;
          for (int j = 0; j <= m; ++j) {
            const auto& k = g.obs[j];
            std::int64_t dep_idx = 0, dep_card = 1;
            for (int l : k.deps) {
              dep_idx = dep_idx * g.action_card(l) + u[l];
              dep_card *= g.action_card(l);
            }
            const int sym = k.table[z * dep_card + dep_idx];
            if (j < m)
              yidx = yidx * g.obs[j].card + sym;
            else
              ym = sym;
          }
          joint[yidx * f.card + ym] += pz;
        }
        for (std::int64_t yp = 0; yp < prodY; ++yp) {
          double denom = 0.0;
          for (int y = 0; y < f.card; ++y) denom += joint[yp * f.card + y];
          for (int y = 0; y < f.card; ++y) {
            const double val =
                denom > 0.0 ? f.card * joint[yp * f.card + y] / denom : 0.0;
            f.table[(((static_cast<std::int64_t>(w0) * prodY + yp) * prodU + up) *
                     f.card) +
                    y] = val;
          }
        }
      }
    factors[m] = std::move(f);
  }
  out.ratio.finite = factors;

  // Reduced game: primitives (w0, y_0..y_{M-1} uniform), identity
  // observation kernels on the y blocks, tilted cost tables.
  GameSpec r;
  r.variant = Variant::Static;
  r.num_players = g.num_players;
  r.primitives.family = Family::Finite;
  r.primitives.finite_blocks.push_back(pr.finite_blocks[0]);
  for (int m = 0; m < M; ++m) {
    FiniteBlock b;
    b.name = "y" + std::to_string(m);
    for (int s = 0; s < g.obs[m].card; ++s) {
      b.support.push_back(s);
      b.probs.push_back(1.0 / g.obs[m].card);
    }
    r.primitives.finite_blocks.push_back(b);
  }
  r.dms = g.dms;
  r.action_values = g.action_values;
  for (int m = 0; m < M; ++m) {
    ObsKernel k;
    k.fwd = g.obs[m].fwd;
    k.card = g.obs[m].card;
    k.table.resize(r.primitives.joint_card());
    for (std::int64_t z = 0; z < r.primitives.joint_card(); ++z)
      k.table[z] = r.primitives.block_index_of(z, 1 + m);
    r.obs.push_back(k);
  }
  r.costs.kind = CostSpec::Kind::Table;
  r.costs.zero_sum = g.costs.zero_sum;
  const std::int64_t Zr = r.primitives.joint_card();
  for (int i = 0; i < g.num_players; ++i) {
    std::vector<double> c(Zr * A);
    for (std::int64_t z = 0; z < Zr; ++z) {
      const int w0 = r.primitives.block_index_of(z, 0);
      std::vector<int> y(M);
      for (int m = 0; m < M; ++m) y[m] = r.primitives.block_index_of(z, 1 + m);
      const std::int64_t zrep = static_cast<std::int64_t>(w0) * noise;
      for (std::int64_t a = 0; a < A; ++a) {
        std::vector<int> u(M);
        std::int64_t rem = a;
        for (int m = M - 1; m >= 0; --m) {
          u[m] = static_cast<int>(rem % g.action_card(m));
          rem /= g.action_card(m);
        }
        double w = 1.0;
        for (int m = 0; m < M; ++m) {
          std::vector<int> yp(y.begin(), y.begin() + m);
          std::vector<int> up(u.begin(), u.begin() + m);
          w *= factors[m].at(w0, yp, up, y[m]);
          if (w == 0.0) break;
        }
        c[z * A + a] = g.costs.table[i][zrep * A + a] * w;
      }
    }
    r.costs.table.push_back(std::move(c));
  }
  out.reduced = r;
  out.certificate.ratio = out.ratio;
  return out;
}

inline PiReduction pi_reduce_gaussian(const GameSpec& g) {
  require(!variant_is_cs(g.variant),
          "pi-reduce: control-sharing variants are not supported in the "
          "Gaussian family");
  const auto& pr = g.primitives;
  const int M = g.num_dms();
  require(pr.num_blocks() == 1 + M,
          "pi-reduce: Gaussian family needs one private block per DM");

  // All blocks must be mutually independent.
  for (int a = 0; a < pr.num_blocks(); ++a)
    for (int b = 0; b < a; ++b) {
      const auto blk = pr.cov.block(pr.block_offset(a), pr.block_offset(b),
                                    pr.block_dim(a), pr.block_dim(b));
      require(blk.cwiseAbs().maxCoeff() <= 1e-12,
              "pi-reduce: primitive blocks are correlated");
    }

  // Costs must not read the private noise blocks.
  const int d0 = pr.block_dim(0);
  const int dz = pr.dim();
  for (const auto& q : g.costs.quad)
    for (int b = 1; b <= M; ++b) {
      const int off = pr.block_offset(b), dim = pr.block_dim(b);
      require(q.M.middleRows(off, dim).cwiseAbs().maxCoeff() <= 1e-12 &&
                  q.M.middleCols(off, dim).cwiseAbs().maxCoeff() <= 1e-12 &&
                  q.b.segment(off, dim).cwiseAbs().maxCoeff() <= 1e-12,
              "pi-reduce: cost depends on a private noise block");
    }

  PiReduction out;
  out.ratio.family = Family::Gaussian;
  out.certificate.kind = ReductionCertificate::Kind::PolicyIndependent;
  out.certificate.nestedness = validate_partial_nestedness(g);

  for (int m = 0; m < M; ++m) {
    const auto& k = g.obs[m];
    const MatrixXd W = variant_is_dynamic(g.variant) ? MatrixXd(k.G * k.H) : k.H;
    const int own = 1 + m;
    const int own_off = pr.block_offset(own), own_dim = pr.block_dim(own);
    for (int b = 1; b <= M; ++b) {
      if (b == own) continue;
      require(W.middleCols(pr.block_offset(b), pr.block_dim(b))
                      .cwiseAbs()
                      .maxCoeff() <= 1e-12,
              "pi-reduce: channel of DM " + std::to_string(m) +
                  " reads another DM's private block");
    }
    const MatrixXd E = W.middleCols(own_off, own_dim);
    const MatrixXd S =
        E * pr.cov.block(own_off, own_off, own_dim, own_dim) * E.transpose();
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(S);
    require(es.eigenvalues().minCoeff() >
                1e-10 * std::max(1.0, es.eigenvalues().maxCoeff()),
            "pi-reduce: degenerate (noiseless) observation channel at DM " +
                std::to_string(m) + ", no dominating product measure");
    GaussianFactor f;
    f.mean_w0 = W.leftCols(d0);
    f.deps = k.deps;
    if (variant_is_dynamic(g.variant)) {
      int col = 0;
      for (int j : k.deps) {
        f.mean_u.push_back(k.D.middleCols(col, g.action_dim(j)));
        col += g.action_dim(j);
      }
    } else {
      for (int j : k.deps)
        f.mean_u.push_back(MatrixXd::Zero(W.rows(), g.action_dim(j)));
    }
    f.mean0 = E * pr.mean.segment(own_off, own_dim);
    f.cov = S;
    out.ratio.gauss.push_back(std::move(f));
  }

  // Reduced game over (w0, y_0..y_{M-1}) with standard-normal references.
  GameSpec r;
  r.variant = Variant::Static;
  r.num_players = g.num_players;
  r.primitives.family = Family::Gaussian;
  r.primitives.gaussian_blocks.push_back(pr.gaussian_blocks[0]);
  int dsum = d0;
  for (int m = 0; m < M; ++m) {
    r.primitives.gaussian_blocks.push_back(
        {"y" + std::to_string(m), g.obs[m].obs_dim()});
    dsum += g.obs[m].obs_dim();
  }
  r.primitives.mean = VectorXd::Zero(dsum);
  r.primitives.mean.head(d0) = pr.mean.head(d0);
  r.primitives.cov = MatrixXd::Identity(dsum, dsum);
  r.primitives.cov.topLeftCorner(d0, d0) = pr.cov.topLeftCorner(d0, d0);
  r.dms = g.dms;
  r.action_dims = g.action_dims;
  int yoff = d0;
  for (int m = 0; m < M; ++m) {
    ObsKernel k;
    k.fwd = g.obs[m].fwd;
    const int dy = g.obs[m].obs_dim();
    k.G = MatrixXd::Identity(dy, dy);
    k.H = MatrixXd::Zero(dy, dsum);
    k.H.middleCols(yoff, dy) = MatrixXd::Identity(dy, dy);
    k.D = MatrixXd(dy, 0);
    yoff += dy;
    r.obs.push_back(k);
  }
  // Untilted costs carried over; the tilt lives in the density ratio and is
  // applied by the weighted evaluator.
  r.costs.kind = CostSpec::Kind::Quadratic;
  r.costs.zero_sum = g.costs.zero_sum;
  const int du = g.total_action_dim();
  std::vector<int> keep(d0);
  for (int i = 0; i < d0; ++i) keep[i] = i;
  for (int i = 0; i < du; ++i) keep.push_back(dz + i);
  for (const auto& q : g.costs.quad) {
    QuadraticCost nq;
    nq.M = MatrixXd::Zero(dsum + du, dsum + du);
    nq.b = VectorXd::Zero(dsum + du);
    nq.c = q.c;
    auto newpos = [&](int oldk) {
      return oldk < d0 ? oldk : dsum + (oldk - dz);
    };
    for (int a : keep) {
      nq.b[newpos(a)] = q.b[a];
      for (int b : keep) nq.M(newpos(a), newpos(b)) = q.M(a, b);
    }
    r.costs.quad.push_back(std::move(nq));
  }
  out.reduced = r;
  out.certificate.ratio = out.ratio;
  return out;
}

}  // namespace detail

// Change of measure making every observation an independent draw from its
// reference law (uniform / standard normal), with the cost tilted by dP/dQ.
// Expected costs are preserved: exactly for finite games, and as the weighted
// expectation computed by reduced_expected_cost_mc for Gaussian channels.
inline PiReduction policy_independent_reduce(const GameSpec& g) {
  validate_game(g);
  return g.primitives.family == Family::Finite ? detail::pi_reduce_finite(g)
                                               : detail::pi_reduce_gaussian(g);
}

// E_Q of the tilted cost for a finite reduction (exact sum).
inline VectorXd reduced_expected_cost(const PiReduction& red,
                                      const PolicyProfile& profile) {
  detail::require(red.reduced.primitives.family == Family::Finite,
                  "reduced_expected_cost: exact evaluation is finite-only; use "
                  "the Monte Carlo form for Gaussian channels");
  PolicyProfile p = profile;
  p.variant = red.reduced.variant;
  return expected_cost(red.reduced, p);
}

// E_Q[c * dP/dQ] for a Gaussian reduction, by importance-weighted sampling of
// the independent reference measurements.
inline CostEstimate reduced_expected_cost_mc(const PiReduction& red,
                                             const PolicyProfile& profile,
                                             std::uint64_t seed, std::int64_t n) {
  detail::require(n > 0, "reduced_expected_cost_mc: sample count must be positive");
  const GameSpec& r = red.reduced;
  detail::require(r.primitives.family == Family::Gaussian,
                  "reduced_expected_cost_mc: Gaussian reductions only");
  PolicyProfile p = profile;
  p.variant = r.variant;
  validate_profile(r, p);

  const int M = r.num_dms();
  const int d0 = r.primitives.block_dim(0);
  std::vector<Eigen::LLT<MatrixXd>> llts;
  std::vector<double> logdets;
  for (const auto& f : red.ratio.gauss) {
    llts.emplace_back(f.cov);
    double ld = 0.0;
    const MatrixXd L = llts.back().matrixL();
    for (int i = 0; i < L.rows(); ++i) ld += 2.0 * std::log(L(i, i));
    logdets.push_back(ld);
  }

  std::mt19937_64 rng(seed);
  const MatrixXd chol = r.primitives.cov.llt().matrixL();
  const int N = r.num_players;
  VectorXd sum = VectorXd::Zero(N), sumsq = VectorXd::Zero(N);
  for (std::int64_t s = 0; s < n; ++s) {
    const VectorXd zeta = sample_zeta(r, rng, chol);
    const VectorXd u = simulate_actions(r, p, zeta);
    double logw = 0.0;
    for (int m = 0; m < M; ++m) {
      const auto& f = red.ratio.gauss[m];
      const VectorXd y =
          zeta.segment(r.primitives.block_offset(1 + m), r.primitives.block_dim(1 + m));
      VectorXd mean = f.mean_w0 * zeta.head(d0) + f.mean0;
      for (size_t j = 0; j < f.mean_u.size(); ++j) {
        const int dep = f.deps[j];
        mean += f.mean_u[j] * u.segment(r.action_offset(dep), r.action_dim(dep));
      }
      const VectorXd diff = y - mean;
      logw += -0.5 * diff.dot(llts[m].solve(diff)) - 0.5 * logdets[m] +
              0.5 * y.squaredNorm();
    }
    const double w = std::exp(logw);
    for (int i = 0; i < N; ++i) {
      const double c = detail::cost_at(r, i, zeta, u) * w;
      sum[i] += c;
      sumsq[i] += c * c;
    }
  }
  CostEstimate est;
  est.samples = n;
  est.value = sum / static_cast<double>(n);
  est.std_error = VectorXd::Zero(N);
  for (int i = 0; i < N; ++i) {
    const double var = std::max(0.0, sumsq[i] / n - est.value[i] * est.value[i]);
    est.std_error[i] = std::sqrt(var / static_cast<double>(n));
  }
  return est;
}

// ---------------------------------------------------------------------------
// Policy-dependent static reduction and its lift (affine-Gaussian)

namespace detail {

struct AffineInStack {
  MatrixXd K;
  VectorXd k;
};

// Offsets of each closure member inside DM m's stacked static observations.
inline std::vector<int> stack_offsets(const GameSpec& g,
                                      const std::vector<int>& closure, int* dim) {
  std::vector<int> off(g.num_dms(), -1);
  int d = 0;
  for (int p : closure) {
    off[p] = d;
    d += g.obs[p].obs_dim();
  }
  *dim = d;
  return off;
}

}  // namespace detail

// gamma^S from gamma^D: actions agree realization by realization, obtained by
// reconstructing the dynamic observations from the static ones along the
// precedence order. Requires pure affine policies and a PolicyDependent
// certificate (partial nestedness + invertible mixing).
inline PolicyProfile policy_dependent_reduce(const GameSpec& g,
                                             const PolicyProfile& gammaD) {
  detail::require(variant_is_dynamic(g.variant) && !variant_is_cs(g.variant),
                  "pd-reduce: expects a dynamic non-control-sharing game");
  validate_profile(g, gammaD);
  for (const auto& pol : gammaD.dm)
    detail::require(pol.kind == Policy::Kind::Affine,
                    "pd-reduce: the policies must be deterministic (pure) and "
                    "affine in this family");
  make_reduction_certificate(g, ReductionCertificate::Kind::PolicyDependent);

  PolicyProfile out;
  out.variant = Variant::Static;
  out.dm.resize(g.num_dms());
  for (int m = 0; m < g.num_dms(); ++m) {
    const auto closure = info_closure(g, m);
    int dim = 0;
    const auto off = detail::stack_offsets(g, closure, &dim);
    std::vector<detail::AffineInStack> ydyn(g.num_dms()), uhat(g.num_dms());
    for (int p : closure) {
      const auto& k = g.obs[p];
      detail::AffineInStack y;
      y.K = MatrixXd::Zero(k.obs_dim(), dim);
      y.K.middleCols(off[p], k.obs_dim()) = k.G;
      y.k = VectorXd::Zero(k.obs_dim());
      for (int j : k.deps) {
        const int col = detail::dep_column_offset(g, k, j);
        y.K += k.D.middleCols(col, g.action_dim(j)) * uhat[j].K;
        y.k += k.D.middleCols(col, g.action_dim(j)) * uhat[j].k;
      }
      ydyn[p] = std::move(y);

      const auto lay = info_layout(g, p);
      MatrixXd IK(lay.dim, dim);
      VectorXd Ik(lay.dim);
      for (const auto& seg : lay.segments) {
        IK.middleRows(seg.offset, seg.size) = ydyn[seg.dm].K;
        Ik.segment(seg.offset, seg.size) = ydyn[seg.dm].k;
      }
      uhat[p].K = gammaD.dm[p].affine.A * IK;
      uhat[p].k = gammaD.dm[p].affine.A * Ik + gammaD.dm[p].affine.a;
    }
    out.dm[m].kind = Policy::Kind::Affine;
    out.dm[m].affine.A = uhat[m].K;
    out.dm[m].affine.a = uhat[m].k;
  }
  return out;
}

// gamma^D from gamma^S (the relation read right to left): recover the static
// observations by inverting each mixing matrix and subtracting the precedent
// action terms, then apply the static policies.
inline PolicyProfile policy_dependent_lift(const GameSpec& g,
                                           const PolicyProfile& gammaS) {
  detail::require(variant_is_dynamic(g.variant) && !variant_is_cs(g.variant),
                  "pd-lift: expects a dynamic non-control-sharing game");
  const GameSpec gs = with_variant(g, Variant::Static);
  validate_profile(gs, gammaS);
  for (const auto& pol : gammaS.dm)
    detail::require(pol.kind == Policy::Kind::Affine,
                    "pd-lift: static policies must be affine");
  const auto cert =
      make_reduction_certificate(g, ReductionCertificate::Kind::PolicyDependent);

  PolicyProfile out;
  out.variant = g.variant;
  out.dm.resize(g.num_dms());
  for (int m = 0; m < g.num_dms(); ++m) {
    const auto closure = info_closure(g, m);
    int dim = 0;
    const auto off = detail::stack_offsets(g, closure, &dim);
    std::vector<detail::AffineInStack> ystat(g.num_dms()), uhat(g.num_dms());
    for (int p : closure) {
      const auto& k = g.obs[p];
      detail::AffineInStack y;
      y.K = MatrixXd::Zero(k.obs_dim(), dim);
      y.K.middleCols(off[p], k.obs_dim()) = MatrixXd::Identity(k.obs_dim(), k.obs_dim());
      y.k = VectorXd::Zero(k.obs_dim());
      for (int j : k.deps) {
        const int col = detail::dep_column_offset(g, k, j);
        y.K -= k.D.middleCols(col, g.action_dim(j)) * uhat[j].K;
        y.k -= k.D.middleCols(col, g.action_dim(j)) * uhat[j].k;
      }
      y.K = cert.invertibility.G_inv[p] * y.K;
      y.k = cert.invertibility.G_inv[p] * y.k;
      ystat[p] = std::move(y);

      const auto lay = info_layout(gs, p);
      MatrixXd IK(lay.dim, dim);
      VectorXd Ik(lay.dim);
      for (const auto& seg : lay.segments) {
        IK.middleRows(seg.offset, seg.size) = ystat[seg.dm].K;
        Ik.segment(seg.offset, seg.size) = ystat[seg.dm].k;
      }
      uhat[p].K = gammaS.dm[p].affine.A * IK;
      uhat[p].k = gammaS.dm[p].affine.A * Ik + gammaS.dm[p].affine.a;
    }
    out.dm[m].kind = Policy::Kind::Affine;
    out.dm[m].affine.A = uhat[m].K;
    out.dm[m].affine.a = uhat[m].k;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Control sharing

// Expand the information structure so that every DM also sees the actions
// feeding the observations it holds. Requires partial nestedness.
inline GameSpec control_sharing_expand(const GameSpec& g) {
  const auto rep = validate_partial_nestedness(g);
  detail::require(rep.nested, "cs-expand: information structure is not partially nested");
  GameSpec out = g;
  switch (g.variant) {
    case Variant::General:
    case Variant::Dynamic:
      out.variant = Variant::DynamicCS;
      break;
    case Variant::Static:
      out.variant = Variant::StaticCS;
      break;
    default:
      break;  // already control-sharing
  }
  return out;
}

// Canonical embedding of a profile into the expanded control-sharing space:
// zero gains on the appended action blocks (affine), or replication across
// the appended coordinates (tables).
inline PolicyProfile embed_profile_cs(const GameSpec& expanded,
                                      const PolicyProfile& p) {
  detail::require(variant_is_cs(expanded.variant),
                  "cs-embed: target game is not control-sharing");
  const Variant base = expanded.variant == Variant::DynamicCS ? Variant::Dynamic
                                                              : Variant::Static;
  detail::require(p.variant == base || p.variant == Variant::General,
                  "cs-embed: profile is not in the corresponding base variant");
  const GameSpec gb = with_variant(expanded, base);
  validate_profile(gb, p);

  PolicyProfile out;
  out.variant = expanded.variant;
  out.dm.resize(expanded.num_dms());
  for (int m = 0; m < expanded.num_dms(); ++m) {
    const auto lay_new = info_layout(expanded, m);
    const auto lay_old = info_layout(gb, m);
    if (p.dm[m].kind == Policy::Kind::Affine) {
      MatrixXd A = MatrixXd::Zero(expanded.action_dim(m), lay_new.dim);
      size_t so = 0;
      for (const auto& seg : lay_new.segments) {
        if (seg.kind != InfoSegment::Kind::Obs) continue;
        const auto& old_seg = lay_old.segments[so++];
        A.middleCols(seg.offset, seg.size) =
            p.dm[m].affine.A.middleCols(old_seg.offset, old_seg.size);
      }
      out.dm[m].kind = Policy::Kind::Affine;
      out.dm[m].affine = {A, p.dm[m].affine.a};
    } else {
      out.dm[m].kind = Policy::Kind::Table;
      out.dm[m].table.act.resize(lay_new.card);
      for (std::int64_t idx = 0; idx < lay_new.card; ++idx) {
        // Decode the new joint index, keep the observation coordinates.
        std::vector<int> vals(lay_new.segments.size());
        std::int64_t rem = idx;
        for (int s = static_cast<int>(lay_new.segments.size()) - 1; s >= 0; --s) {
          const auto& seg = lay_new.segments[s];
          const int card = seg.kind == InfoSegment::Kind::Obs
                               ? expanded.obs[seg.dm].card
                               : expanded.action_card(seg.dm);
          vals[s] = static_cast<int>(rem % card);
          rem /= card;
        }
        std::int64_t old_idx = 0;
        for (size_t s = 0; s < lay_new.segments.size(); ++s)
          if (lay_new.segments[s].kind == InfoSegment::Kind::Obs)
            old_idx = old_idx * expanded.obs[lay_new.segments[s].dm].card + vals[s];
        out.dm[m].table.act[idx] = p.dm[m].table.act[old_idx];
      }
    }
  }
  return out;
}

// gamma^CS from gamma^{D,CS}: substitute each dynamic observation by its
// static counterpart and the shared actions. The construction never reads
// any other DM's policy, so it is policy-independent.
inline PolicyProfile control_sharing_reduce(const GameSpec& g,
                                            const PolicyProfile& gammaDCS) {
  detail::require(g.variant == Variant::DynamicCS,
                  "cs-reduce: expects a DynamicCS game");
  detail::require(g.primitives.family == Family::Gaussian,
                  "cs-reduce: affine kernels only");
  validate_profile(g, gammaDCS);
  make_reduction_certificate(g, ReductionCertificate::Kind::ControlSharing);

  PolicyProfile out;
  out.variant = Variant::StaticCS;
  out.dm.resize(g.num_dms());
  for (int m = 0; m < g.num_dms(); ++m) {
    const auto lay = info_layout(g, m);
    const auto& A = gammaDCS.dm[m].affine.A;
    MatrixXd B = MatrixXd::Zero(A.rows(), A.cols());
    // Act segment column ranges, for accumulating the substitution terms.
    std::vector<std::pair<int, int>> act_cols(g.num_dms(), {-1, 0});
    for (const auto& seg : lay.segments)
      if (seg.kind == InfoSegment::Kind::Act)
        act_cols[seg.dm] = {seg.offset, seg.size};
    for (const auto& seg : lay.segments) {
      if (seg.kind == InfoSegment::Kind::Act) {
        B.middleCols(seg.offset, seg.size) += A.middleCols(seg.offset, seg.size);
        continue;
      }
      const auto& k = g.obs[seg.dm];
      const auto Ap = A.middleCols(seg.offset, seg.size);
      B.middleCols(seg.offset, seg.size) += Ap * k.G;
      for (int j : k.deps) {
        const int col = detail::dep_column_offset(g, k, j);
        detail::require(act_cols[j].first >= 0,
                        "cs-reduce: shared action for DM " + std::to_string(j) +
                            " missing from the layout");
        B.middleCols(act_cols[j].first, act_cols[j].second) +=
            Ap * k.D.middleCols(col, g.action_dim(j));
      }
    }
    out.dm[m].kind = Policy::Kind::Affine;
    out.dm[m].affine = {B, gammaDCS.dm[m].affine.a};
  }
  return out;
}

// Inverse substitution, gamma^{D,CS} from gamma^CS.
inline PolicyProfile control_sharing_lift(const GameSpec& g,
                                          const PolicyProfile& gammaCS) {
  detail::require(g.variant == Variant::DynamicCS,
                  "cs-lift: expects a DynamicCS game");
  detail::require(g.primitives.family == Family::Gaussian,
                  "cs-lift: affine kernels only");
  const GameSpec gs = with_variant(g, Variant::StaticCS);
  validate_profile(gs, gammaCS);
  const auto cert =
      make_reduction_certificate(g, ReductionCertificate::Kind::ControlSharing);

  PolicyProfile out;
  out.variant = Variant::DynamicCS;
  out.dm.resize(g.num_dms());
  for (int m = 0; m < g.num_dms(); ++m) {
    const auto lay = info_layout(g, m);
    const auto& A = gammaCS.dm[m].affine.A;
    MatrixXd B = MatrixXd::Zero(A.rows(), A.cols());
    std::vector<std::pair<int, int>> act_cols(g.num_dms(), {-1, 0});
    for (const auto& seg : lay.segments)
      if (seg.kind == InfoSegment::Kind::Act)
        act_cols[seg.dm] = {seg.offset, seg.size};
    for (const auto& seg : lay.segments) {
      if (seg.kind == InfoSegment::Kind::Act) {
        B.middleCols(seg.offset, seg.size) += A.middleCols(seg.offset, seg.size);
        continue;
      }
      const auto& k = g.obs[seg.dm];
      const MatrixXd ApGinv =
          A.middleCols(seg.offset, seg.size) * cert.invertibility.G_inv[seg.dm];
      B.middleCols(seg.offset, seg.size) += ApGinv;
      for (int j : k.deps) {
        const int col = detail::dep_column_offset(g, k, j);
        B.middleCols(act_cols[j].first, act_cols[j].second) -=
            ApGinv * k.D.middleCols(col, g.action_dim(j));
      }
    }
    out.dm[m].kind = Policy::Kind::Affine;
    out.dm[m].affine = {B, gammaCS.dm[m].affine.a};
  }
  return out;
}

}  // namespace isred
