// Equilibrium verification: exact affine best responses (closed form, via the
// quadratic dependence of the expected cost on policy coordinates),
// single-coordinate polynomial probes, exhaustive checks for finite games,
// the brute-force equilibrium oracle, ordered-interchangeability checks, and
// action-level policy equivalence.
#pragma once

#include "isred/reductions.hpp"
#include "isred/stationary.hpp"

namespace isred {

enum class Concept { PlNe, DmNe, PlSpe, DmSpe, Stationary };
enum class Verdict { Certified, Refuted, Inconclusive };

inline const char* to_string(Concept c) {
  switch (c) {
    case Concept::PlNe: return "pl-ne";
    case Concept::DmNe: return "dm-ne";
    case Concept::PlSpe: return "pl-spe";
    case Concept::DmSpe: return "dm-spe";
    case Concept::Stationary: return "stationary";
  }
  return "?";
}

inline std::optional<Concept> concept_from_string(const std::string& s) {
  if (s == "pl-ne") return Concept::PlNe;
  if (s == "dm-ne") return Concept::DmNe;
  if (s == "pl-spe") return Concept::PlSpe;
  if (s == "dm-spe") return Concept::DmSpe;
  if (s == "stationary") return Concept::Stationary;
  return std::nullopt;
}

inline const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::Certified: return "Certified";
    case Verdict::Refuted: return "Refuted";
    case Verdict::Inconclusive: return "Inconclusive";
  }
  return "?";
}

struct DeviationClass {
  enum class Kind { Exhaustive, AffineBasis };
  Kind kind = Kind::AffineBasis;
  int poly_degree = 3;  // 0 disables the polynomial probes

  std::string label() const {
    if (kind == Kind::Exhaustive) return "Exhaustive";
    return poly_degree > 0 ? "AffineBasis+Poly" + std::to_string(poly_degree)
                           : "AffineBasis";
  }
};

struct DeviationWitness {
  int player = -1;
  int dm = -1;
  double improvement = 0.0;
  std::string description;
  std::optional<PolicyProfile> profile;  // full deviated profile when affine/tabular
};

struct EquilibriumReport {
  Concept what = Concept::DmNe;
  Verdict verdict = Verdict::Inconclusive;
  VectorXd value;       // per-player expected cost at the submitted profile
  VectorXd residual;    // per-DM stationarity residuals (Gaussian families)
  double max_improvement = 0.0;
  std::optional<DeviationWitness> witness;
  double tol = 1e-6;
  std::string deviation_class;
  std::string note;
};

namespace detail {

inline double gaussian_raw_moment(double mean, double var, int k) {
  // m_k = mean*m_{k-1} + (k-1)*var*m_{k-2}
  double m0 = 1.0, m1 = mean;
  if (k == 0) return m0;
  for (int i = 2; i <= k; ++i) {
    const double m2 = mean * m1 + (i - 1) * var * m0;
    m0 = m1;
    m1 = m2;
  }
  return m1;
}

// Exact quadratic form of the owner's expected cost over the stacked policy
// coordinates of a deviation scope. Coordinates of scope DM m are
// vec([W_m, w_m]) against a fixed affine info map i_m(zeta).
struct DeviationObjective {
  double c0 = 0.0;  // cost when every scope DM plays zero
  VectorXd g;
  MatrixXd H;
  std::vector<int> dms;
  std::vector<MatrixXd> T;  // info maps of the coordinates
  std::vector<VectorXd> t;
  std::vector<int> off;     // theta offset per scope DM
  int dim = 0;

  double eval(const VectorXd& th) const {
    return c0 + g.dot(th) + th.dot(H * th);
  }
  int block_size(const GameSpec& game, size_t s) const {
    return game.action_dim(dms[s]) * (static_cast<int>(T[s].rows()) + 1);
  }
};

inline DeviationObjective build_deviation_objective(
    const GameSpec& g, const PolicyProfile& p, int player,
    const std::vector<int>& scope, const std::vector<MatrixXd>& T,
    const std::vector<VectorXd>& toff) {
  const int dz = g.primitives.dim();
  const int du = g.total_action_dim();
  const auto& q = g.costs.quad[player];
  const auto& Sig = g.primitives.cov;
  const auto& mu = g.primitives.mean;

  PolicyProfile zeroed = p;
  for (int m : scope) {
    zeroed.dm[m].affine.A.setZero();
    zeroed.dm[m].affine.a.setZero();
  }
  const auto base = compose_affine(g, zeroed);
  const MatrixXd L = response_matrix(g, zeroed);

  MatrixXd Zb(dz + du, dz);
  VectorXd zb0 = VectorXd::Zero(dz + du);
  Zb.topRows(dz) = MatrixXd::Identity(dz, dz);
  for (int j = 0; j < g.num_dms(); ++j) {
    Zb.middleRows(dz + g.action_offset(j), g.action_dim(j)) = base.act_gain[j];
    zb0.segment(dz + g.action_offset(j), g.action_dim(j)) = base.act_off[j];
  }

  DeviationObjective o;
  o.dms = scope;
  o.T = T;
  o.t = toff;
  {
    const VectorXd mz = Zb * mu + zb0;
    const MatrixXd Sz = Zb * Sig * Zb.transpose();
    o.c0 = (q.M * Sz).trace() + mz.dot(q.M * mz) + q.b.dot(mz) + q.c;
  }
  for (size_t s = 0; s < scope.size(); ++s) {
    o.off.push_back(o.dim);
    o.dim += o.block_size(g, s);
  }
  o.g = VectorXd::Zero(o.dim);
  o.H = MatrixXd::Zero(o.dim, o.dim);

  std::vector<MatrixXd> Phi(scope.size());
  for (size_t s = 0; s < scope.size(); ++s) {
    Phi[s] = MatrixXd::Zero(dz + du, g.action_dim(scope[s]));
    Phi[s].middleRows(dz, du) =
        L.middleCols(g.action_offset(scope[s]), g.action_dim(scope[s]));
  }
  for (size_t s = 0; s < scope.size(); ++s) {
    const int dus = g.action_dim(scope[s]);
    const int ks = static_cast<int>(T[s].rows());
    const VectorXd mus = T[s] * mu + toff[s];
    // linear term: E[psi itilde'] with psi = 2 Phi'(M z_base + b/2)
    const MatrixXd Psi = 2.0 * Phi[s].transpose() * q.M * Zb;
    const VectorXd psi0 =
        2.0 * Phi[s].transpose() * (q.M * zb0 + 0.5 * q.b);
    const VectorXd psibar = Psi * mu + psi0;
    MatrixXd lin(dus, ks + 1);
    lin.leftCols(ks) = Psi * Sig * T[s].transpose() + psibar * mus.transpose();
    lin.col(ks) = psibar;
    o.g.segment(o.off[s], o.block_size(g, s)) = vec(lin);
    for (size_t r = 0; r < scope.size(); ++r) {
      const int dur = g.action_dim(scope[r]);
      const int kr = static_cast<int>(T[r].rows());
      const VectorXd mur = T[r] * mu + toff[r];
      const MatrixXd Xi = Phi[s].transpose() * q.M * Phi[r];
      MatrixXd Mir(ks + 1, kr + 1);  // E[itilde_s itilde_r']
      Mir.topLeftCorner(ks, kr) =
          T[s] * Sig * T[r].transpose() + mus * mur.transpose();
      Mir.topRightCorner(ks, 1) = mus;
      Mir.bottomLeftCorner(1, kr) = mur.transpose();
      Mir(ks, kr) = 1.0;
      o.H.block(o.off[s], o.off[r], o.block_size(g, s), o.block_size(g, r)) =
          kron(Mir, Xi);
    }
  }
  o.H = 0.5 * (o.H + o.H.transpose()).eval();
  return o;
}

struct MinimizeResult {
  bool bounded = true;
  VectorXd argmin;
  double value = 0.0;
};

inline MinimizeResult minimize_quadratic(const DeviationObjective& o) {
  MinimizeResult r;
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(o.H);
  const VectorXd lam = es.eigenvalues();
  const double scale = std::max(1.0, lam.cwiseAbs().maxCoeff());
  const double tol = 1e-9 * scale;
  if (lam.minCoeff() < -tol) {
    r.bounded = false;
    return r;
  }
  VectorXd inv = lam;
  for (int i = 0; i < inv.size(); ++i) inv[i] = inv[i] > tol ? 1.0 / inv[i] : 0.0;
  // Linear escape along a flat direction?
  for (int i = 0; i < lam.size(); ++i) {
    if (lam[i] <= tol &&
        std::abs(es.eigenvectors().col(i).dot(o.g)) >
            1e-9 * std::max(1.0, o.g.cwiseAbs().maxCoeff())) {
      r.bounded = false;
      return r;
    }
  }
  r.argmin = -0.5 * es.eigenvectors() * inv.asDiagonal() *
             es.eigenvectors().transpose() * o.g;
  r.value = o.eval(r.argmin);
  return r;
}

// Deterministic unit probes from the current coordinates: offsets first, then
// gains, positive sign before negative, scope DMs in order.
struct ProbeResult {
  double improvement = -std::numeric_limits<double>::infinity();
  VectorXd theta;
  std::string description;
};

inline ProbeResult best_unit_probe(const GameSpec& g, const DeviationObjective& o,
                                   const VectorXd& theta_cur) {
  ProbeResult best;
  const double jcur = o.eval(theta_cur);
  auto consider = [&](int idx, double sgn, const std::string& what) {
    VectorXd th = theta_cur;
    th[idx] += sgn;
    const double imp = jcur - o.eval(th);
    if (imp > best.improvement + 1e-15) {
      best.improvement = imp;
      best.theta = th;
      best.description = what;
    }
  };
  for (size_t s = 0; s < o.dms.size(); ++s) {
    const int dus = g.action_dim(o.dms[s]);
    const int ks = static_cast<int>(o.T[s].rows());
    for (int r = 0; r < dus; ++r)
      for (double sgn : {1.0, -1.0})
        consider(o.off[s] + ks * dus + r, sgn,
                 "unit offset probe at DM " + std::to_string(o.dms[s]));
  }
  for (size_t s = 0; s < o.dms.size(); ++s) {
    const int dus = g.action_dim(o.dms[s]);
    const int ks = static_cast<int>(o.T[s].rows());
    for (int c = 0; c < ks; ++c)
      for (int r = 0; r < dus; ++r)
        for (double sgn : {1.0, -1.0})
          consider(o.off[s] + c * dus + r, sgn,
                   "unit gain probe at DM " + std::to_string(o.dms[s]));
  }
  return best;
}

// Improvement from single-coordinate monomial probes u_m += t e_r v^d where
// v is one coordinate of DM m's realized information vector.
struct PolyProbeResult {
  double improvement = 0.0;
  std::string description;
};

inline PolyProbeResult poly_probe(const GameSpec& g, const PolicyProfile& p,
                                  const ComposedAffine& comp, const MatrixXd& L,
                                  int m, int max_degree) {
  const int dz = g.primitives.dim();
  const int du = g.total_action_dim();
  const auto& q = g.costs.quad[g.dms[m].player];
  const auto& Sig = g.primitives.cov;
  const auto& mu = g.primitives.mean;

  MatrixXd Zc(dz + du, dz);
  VectorXd zc0 = VectorXd::Zero(dz + du);
  Zc.topRows(dz) = MatrixXd::Identity(dz, dz);
  for (int j = 0; j < g.num_dms(); ++j) {
    Zc.middleRows(dz + g.action_offset(j), g.action_dim(j)) = comp.act_gain[j];
    zc0.segment(dz + g.action_offset(j), g.action_dim(j)) = comp.act_off[j];
  }
  MatrixXd Phi = MatrixXd::Zero(dz + du, g.action_dim(m));
  Phi.middleRows(dz, du) = L.middleCols(g.action_offset(m), g.action_dim(m));

  PolyProbeResult best;
  const MatrixXd T = comp.info_gain[m];
  const VectorXd toff = comp.info_off[m];
  for (int r = 0; r < g.action_dim(m); ++r) {
    // phi = d/dt of the cost at t=0 per unit v^d, before taking moments
    const VectorXd e = Phi.col(r);
    const Eigen::RowVectorXd kap = 2.0 * e.transpose() * q.M * Zc;
    const double kap0 = 2.0 * e.dot(q.M * zc0) + e.dot(q.b);
    const double curv = e.dot(q.M * e);
    for (int s = 0; s < T.rows(); ++s) {
      const double mv = (T.row(s) * mu).value() + toff[s];
      const double vv = (T.row(s) * Sig * T.row(s).transpose()).value();
      const double mphi = (kap * mu).value() + kap0;
      const double cphv = (kap * Sig * T.row(s).transpose()).value();
      const double c1 = vv > 1e-14 ? cphv / vv : 0.0;
      for (int d = 2; d <= max_degree; ++d) {
        const double md = gaussian_raw_moment(mv, vv, d);
        const double md1 = gaussian_raw_moment(mv, vv, d + 1);
        const double m2d = gaussian_raw_moment(mv, vv, 2 * d);
        const double a = mphi * md + c1 * (md1 - mv * md);
        const double b = curv * m2d;
        double imp = 0.0, tstar = 0.0;
        const double btol = 1e-12 * std::max(1.0, std::abs(curv) * m2d);
        if (b > btol) {
          tstar = -a / (2.0 * b);
          imp = a * a / (4.0 * b);
        } else if (b < -btol || std::abs(a) > 1e-10) {
          tstar = a > 0 ? -1.0 : 1.0;  // unit probe on an unbounded direction
          imp = -(a * tstar + b * tstar * tstar);
        }
        if (imp > best.improvement) {
          best.improvement = imp;
          best.description = "monomial probe deg " + std::to_string(d) +
                             " on info coord " + std::to_string(s) +
                             ", action coord " + std::to_string(r) + " of DM " +
                             std::to_string(m) + " (t=" + std::to_string(tstar) +
                             ")";
        }
      }
    }
  }
  return best;
}

// Project composed action maps of the scope DMs onto their static stacks.
// Returns false if an action map is not measurable in its stack.
inline bool project_to_stack(const GameSpec& g, const ComposedAffine& comp,
                             const std::vector<int>& scope,
                             const std::vector<MatrixXd>& V, VectorXd* theta,
                             const DeviationObjective& o) {
  const auto& Sig = g.primitives.cov;
  const auto& mu = g.primitives.mean;
  *theta = VectorXd::Zero(o.dim);
  for (size_t s = 0; s < scope.size(); ++s) {
    const int m = scope[s];
    const MatrixXd Sv = V[s] * Sig * V[s].transpose();
    const MatrixXd W = comp.act_gain[m] * Sig * V[s].transpose() * psd_pinv(Sv);
    const MatrixXd R = comp.act_gain[m] - W * V[s];
    if ((R * Sig * R.transpose()).cwiseAbs().maxCoeff() > 1e-18) return false;
    const VectorXd w = comp.act_off[m] + R * mu;
    MatrixXd Wt(g.action_dim(m), V[s].rows() + 1);
    Wt.leftCols(V[s].rows()) = W;
    Wt.col(V[s].rows()) = w;
    theta->segment(o.off[s], o.block_size(g, s)) = vec(Wt);
  }
  return true;
}

}  // namespace detail

// ---------------------------------------------------------------------------

// Materialize a player-scope deviation given in static-stack coordinates as a
// full profile in the game's own variant.
namespace detail {

inline PolicyProfile materialize_player_deviation(const GameSpec& g,
                                                  const PolicyProfile& p,
                                                  int player,
                                                  const DeviationObjective& o,
                                                  const VectorXd& theta) {
  StaticCoords coords;
  coords.W.resize(g.num_dms());
  coords.w.resize(g.num_dms());
  // Scope DMs from theta.
  for (size_t s = 0; s < o.dms.size(); ++s) {
    const int m = o.dms[s];
    const int k = static_cast<int>(o.T[s].rows());
    const MatrixXd Wt =
        unvec(theta.segment(o.off[s], o.block_size(g, s)), g.action_dim(m), k + 1);
    coords.W[m] = Wt.leftCols(k);
    coords.w[m] = Wt.col(k);
  }
  if (g.variant == Variant::Static || g.variant == Variant::StaticCS) {
    PolicyProfile out = p;
    // Remaining DMs keep their policies; scope DMs get the zero-padded form.
    StaticCoords full = coords;
    for (int m = 0; m < g.num_dms(); ++m)
      if (full.W[m].size() == 0) {
        full.W[m] = MatrixXd::Zero(g.action_dim(m), static_stack(g, m).rows());
        full.w[m] = VectorXd::Zero(g.action_dim(m));
      }
    PolicyProfile padded = coords_to_profile(g, full);
    for (int m : o.dms) out.dm[m] = padded.dm[m];
    return out;
  }
  // Dynamic variants: reduce the others, splice, lift back.
  if (g.variant == Variant::DynamicCS) {
    PolicyProfile reduced = control_sharing_reduce(g, p);
    const GameSpec gs = with_variant(g, Variant::StaticCS);
    StaticCoords full = coords;
    PolicyProfile spliced = reduced;
    for (size_t s = 0; s < o.dms.size(); ++s) {
      StaticCoords one;
      one.W.assign(g.num_dms(), MatrixXd());
      one.w.assign(g.num_dms(), VectorXd());
      for (int m = 0; m < g.num_dms(); ++m) {
        one.W[m] = MatrixXd::Zero(g.action_dim(m), static_stack(g, m).rows());
        one.w[m] = VectorXd::Zero(g.action_dim(m));
      }
      one.W[o.dms[s]] = coords.W[o.dms[s]];
      one.w[o.dms[s]] = coords.w[o.dms[s]];
      PolicyProfile tmp = coords_to_profile(gs, one);
      spliced.dm[o.dms[s]] = tmp.dm[o.dms[s]];
    }
    PolicyProfile lifted = control_sharing_lift(g, spliced);
    PolicyProfile out = p;
    for (int m : o.dms) out.dm[m] = lifted.dm[m];
    return out;
  }
  PolicyProfile reduced = policy_dependent_reduce(g, p);
  const GameSpec gs = with_variant(g, Variant::Static);
  PolicyProfile spliced = reduced;
  for (size_t s = 0; s < o.dms.size(); ++s) {
    const int m = o.dms[s];
    Policy pol;
    pol.kind = Policy::Kind::Affine;
    pol.affine.A = coords.W[m];
    pol.affine.a = coords.w[m];
    spliced.dm[m] = pol;
  }
  PolicyProfile lifted = policy_dependent_lift(g, spliced);
  PolicyProfile out = p;
  for (int m : o.dms) out.dm[m] = lifted.dm[m];
  return out;
}

// Exhaustive deviation scan for finite games over one scope (list of DMs that
// may deviate jointly). Returns the best improvement and deviated profile.
inline std::pair<double, PolicyProfile> finite_best_deviation(
    const GameSpec& g, const PolicyProfile& p, int player,
    const std::vector<int>& scope) {
  const double jcur = expected_cost(g, p)[player];
  double best = 0.0;
  PolicyProfile best_profile = p;
  std::vector<std::int64_t> sizes;
  std::int64_t total = 1;
  for (int m : scope) {
    std::int64_t tsz = 1;
    const auto lay = info_layout(g, m);
    for (std::int64_t i = 0; i < lay.card; ++i) tsz *= g.action_card(m);
    sizes.push_back(tsz);
    total *= tsz;
  }
  require(total <= 10'000'000, "finite deviation scan exceeds the size guard");
  PolicyProfile q = p;
  for (std::int64_t code = 0; code < total; ++code) {
    std::int64_t rem = code;
    for (size_t s = 0; s < scope.size(); ++s) {
      const int m = scope[s];
      std::int64_t tcode = rem % sizes[s];
      rem /= sizes[s];
      auto& tab = q.dm[m].table.act;
      const auto lay = info_layout(g, m);
      for (std::int64_t i = 0; i < lay.card; ++i) {
        tab[i] = static_cast<int>(tcode % g.action_card(m));
        tcode /= g.action_card(m);
      }
    }
    const double j = expected_cost(g, q)[player];
    if (jcur - j > best) {
      best = jcur - j;
      best_profile = q;
    }
  }
  return {best, best_profile};
}

}  // namespace detail

// Verify a candidate profile against a solution concept. Gaussian games get
// exact affine best responses per scope (DM or player) plus monomial probes
// up to the configured degree; finite games are checked exhaustively.
inline EquilibriumReport verify_equilibrium(const GameSpec& g,
                                            const PolicyProfile& p,
                                            Concept what,
                                            DeviationClass dev = {},
                                            double tol = 1e-6) {
  validate_profile(g, p);
  EquilibriumReport rep;
  rep.what = what;
  rep.tol = tol;
  rep.value = expected_cost(g, p);

  const bool spe = what == Concept::PlSpe || what == Concept::DmSpe;
  if (spe)
    detail::require(g.costs.zero_sum,
                    "verify: saddle-point concepts need a zero-sum game");

  if (what == Concept::Stationary) {
    rep.residual = stationarity_residual(g, p);
    rep.deviation_class = "Stationarity";
    rep.max_improvement = rep.residual.maxCoeff();
    rep.verdict = rep.max_improvement <= tol ? Verdict::Certified : Verdict::Refuted;
    return rep;
  }

  const bool player_scope = what == Concept::PlNe || what == Concept::PlSpe;

  if (g.primitives.family == Family::Finite) {
    rep.deviation_class = "Exhaustive";
    double worst = 0.0;
    std::optional<DeviationWitness> witness;
    for (int i = 0; i < g.num_players; ++i) {
      std::vector<std::vector<int>> scopes;
      if (player_scope)
        scopes.push_back(g.dms_of_player(i));
      else
        for (int m : g.dms_of_player(i)) scopes.push_back({m});
      for (const auto& scope : scopes) {
        auto [imp, prof] = detail::finite_best_deviation(g, p, i, scope);
        if (imp > worst) {
          worst = imp;
          DeviationWitness w;
          w.player = i;
          w.dm = scope.size() == 1 ? scope[0] : -1;
          w.improvement = imp;
          w.description = "exhaustive table deviation";
          w.profile = prof;
          witness = w;
        }
      }
    }
    rep.max_improvement = worst;
    if (worst > tol) {
      rep.verdict = Verdict::Refuted;
      rep.witness = witness;
    } else {
      rep.verdict = Verdict::Certified;
    }
    return rep;
  }

  rep.deviation_class = dev.label();
  try {
    rep.residual = stationarity_residual(g, p);
  } catch (const SpecError&) {
  }
  const auto comp = compose_affine(g, p);
  const MatrixXd L = response_matrix(g, p);

  double worst = 0.0;
  std::optional<DeviationWitness> witness;
  auto record = [&](double imp, const DeviationWitness& w) {
    if (imp > worst + 1e-15) {
      worst = imp;
      witness = w;
    }
  };

  for (int i = 0; i < g.num_players; ++i) {
    std::vector<std::vector<int>> scopes;
    if (player_scope)
      scopes.push_back(g.dms_of_player(i));
    else
      for (int m : g.dms_of_player(i)) scopes.push_back({m});

    for (const auto& scope : scopes) {
      std::vector<MatrixXd> T;
      std::vector<VectorXd> toff;
      const bool use_stack = player_scope;
      for (int m : scope) {
        if (use_stack) {
          T.push_back(detail::static_stack(g, m));
          toff.push_back(VectorXd::Zero(T.back().rows()));
        } else {
          T.push_back(comp.info_gain[m]);
          toff.push_back(comp.info_off[m]);
        }
      }
      auto obj = detail::build_deviation_objective(g, p, i, scope, T, toff);
      VectorXd theta_cur;
      if (use_stack) {
        std::vector<MatrixXd> V = T;
        if (!detail::project_to_stack(g, comp, scope, V, &theta_cur, obj)) {
          rep.verdict = Verdict::Inconclusive;
          rep.note = "profile actions are not measurable w.r.t. their static "
                     "information; player-scope check unavailable";
          return rep;
        }
        if (variant_is_dynamic(g.variant)) {
          // The exact player best response runs in static coordinates, which
          // is faithful exactly when the reduction certificate exists.
          make_reduction_certificate(
              g, variant_is_cs(g.variant)
                     ? ReductionCertificate::Kind::ControlSharing
                     : ReductionCertificate::Kind::PolicyDependent);
        }
      } else {
        const int m = scope[0];
        const int k = static_cast<int>(T[0].rows());
        MatrixXd Wt(g.action_dim(m), k + 1);
        Wt.leftCols(k) = p.dm[m].affine.A;
        Wt.col(k) = p.dm[m].affine.a;
        theta_cur = detail::vec(Wt);
      }
      const double jcur = obj.eval(theta_cur);

      const auto minres = detail::minimize_quadratic(obj);
      if (minres.bounded) {
        const double imp = jcur - minres.value;
        if (imp > tol) {
          DeviationWitness w;
          w.player = i;
          w.dm = scope.size() == 1 ? scope[0] : -1;
          w.improvement = imp;
          w.description = "exact affine best response";
          try {
            w.profile = player_scope
                            ? detail::materialize_player_deviation(g, p, i, obj,
                                                                   minres.argmin)
                            : [&] {
                                PolicyProfile q = p;
                                const int m = scope[0];
                                const int k = static_cast<int>(T[0].rows());
                                const MatrixXd Wt = detail::unvec(
                                    minres.argmin, g.action_dim(m), k + 1);
                                q.dm[m].affine.A = Wt.leftCols(k);
                                q.dm[m].affine.a = Wt.col(k);
                                return q;
                              }();
          } catch (const SpecError&) {
          }
          record(imp, w);
        }
      } else {
        const auto probe = detail::best_unit_probe(g, obj, theta_cur);
        DeviationWitness w;
        w.player = i;
        w.dm = scope.size() == 1 ? scope[0] : -1;
        w.improvement = probe.improvement;
        w.description = probe.description + " (objective unbounded)";
        try {
          w.profile = player_scope
                          ? detail::materialize_player_deviation(g, p, i, obj,
                                                                 probe.theta)
                          : [&] {
                              PolicyProfile q = p;
                              const int m = scope[0];
                              const int k = static_cast<int>(T[0].rows());
                              const MatrixXd Wt = detail::unvec(
                                  probe.theta, g.action_dim(m), k + 1);
                              q.dm[m].affine.A = Wt.leftCols(k);
                              q.dm[m].affine.a = Wt.col(k);
                              return q;
                            }();
        } catch (const SpecError&) {
        }
        record(probe.improvement, w);
      }
    }
    if (dev.poly_degree >= 2) {
      for (int m : g.dms_of_player(i)) {
        const auto pr = detail::poly_probe(g, p, comp, L, m, dev.poly_degree);
        if (pr.improvement > tol) {
          DeviationWitness w;
          w.player = i;
          w.dm = m;
          w.improvement = pr.improvement;
          w.description = pr.description;
          record(pr.improvement, w);
        }
      }
    }
  }
  rep.max_improvement = worst;
  if (worst > tol) {
    rep.verdict = Verdict::Refuted;
    rep.witness = witness;
  } else {
    rep.verdict = Verdict::Certified;
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Brute-force oracle for finite games

// All pure profiles satisfying the concept, by exhaustive deviation checks,
// in lexicographic table order.
inline std::vector<PolicyProfile> brute_force_equilibria(
    const GameSpec& g, Concept what, std::int64_t guard = 10'000'000) {
  detail::require(g.primitives.family == Family::Finite,
                  "brute force: finite games only");
  const bool spe = what == Concept::PlSpe || what == Concept::DmSpe;
  if (spe)
    detail::require(g.costs.zero_sum, "brute force: saddle-point concepts need zero-sum");
  const bool player_scope = what == Concept::PlNe || what == Concept::PlSpe;
  const int M = g.num_dms();

  std::vector<std::int64_t> tsize(M);
  std::int64_t total = 1;
  for (int m = 0; m < M; ++m) {
    tsize[m] = 1;
    for (std::int64_t i = 0; i < info_layout(g, m).card; ++i)
      tsize[m] *= g.action_card(m);
    total *= tsize[m];
    detail::require(total <= guard, "brute force: profile count exceeds the guard");
  }

  auto decode = [&](std::int64_t code) {
    PolicyProfile p;
    p.variant = g.variant;
    p.dm.resize(M);
    for (int m = 0; m < M; ++m) {
      std::int64_t tcode = code % tsize[m];
      code /= tsize[m];
      p.dm[m].kind = Policy::Kind::Table;
      const auto lay = info_layout(g, m);
      p.dm[m].table.act.resize(lay.card);
      for (std::int64_t i = 0; i < lay.card; ++i) {
        p.dm[m].table.act[i] = static_cast<int>(tcode % g.action_card(m));
        tcode /= g.action_card(m);
      }
    }
    return p;
  };

  std::vector<PolicyProfile> out;
  for (std::int64_t code = 0; code < total; ++code) {
    PolicyProfile p = decode(code);
    bool ok = true;
    for (int i = 0; ok && i < g.num_players; ++i) {
      std::vector<std::vector<int>> scopes;
      if (player_scope)
        scopes.push_back(g.dms_of_player(i));
      else
        for (int m : g.dms_of_player(i)) scopes.push_back({m});
      for (const auto& scope : scopes) {
        auto [imp, prof] = detail::finite_best_deviation(g, p, i, scope);
        (void)prof;
        if (imp > 1e-12) {
          ok = false;
          break;
        }
      }
    }
    if (ok) out.push_back(std::move(p));
  }
  return out;
}

inline bool same_profile_tables(const PolicyProfile& a, const PolicyProfile& b) {
  if (a.dm.size() != b.dm.size()) return false;
  for (size_t m = 0; m < a.dm.size(); ++m)
    if (a.dm[m].table.act != b.dm[m].table.act) return false;
  return true;
}

// ---------------------------------------------------------------------------
// Interchangeability and action-level equivalence

struct InterchangeabilityReport {
  int n = 0;
  std::vector<EquilibriumReport> cross;  // row-major (first component, second)
  bool all_certified = true;
  double max_value_gap = 0.0;
};

// Ordered interchangeability of multiple saddle points: every mix of player-1
// and player-2 components from certified SPE profiles stays a certified SPE
// with the same value.
inline InterchangeabilityReport interchangeability_check(
    const GameSpec& g, const std::vector<PolicyProfile>& spe_list,
    DeviationClass dev = {}, double tol = 1e-6) {
  detail::require(g.costs.zero_sum, "interchangeability: zero-sum games only");
  detail::require(g.num_players == 2, "interchangeability: two players");
  InterchangeabilityReport out;
  out.n = static_cast<int>(spe_list.size());
  double value0 = 0.0;
  bool have0 = false;
  for (int a = 0; a < out.n; ++a)
    for (int b = 0; b < out.n; ++b) {
      PolicyProfile mix = spe_list[a];
      for (int m : g.dms_of_player(1)) mix.dm[m] = spe_list[b].dm[m];
      auto rep = verify_equilibrium(g, mix, Concept::PlSpe, dev, tol);
      if (!have0) {
        value0 = rep.value[0];
        have0 = true;
      }
      out.max_value_gap = std::max(out.max_value_gap, std::abs(rep.value[0] - value0));
      out.all_certified = out.all_certified && rep.verdict == Verdict::Certified;
      out.cross.push_back(std::move(rep));
    }
  return out;
}

// Two profiles are essentially equivalent when their composed action maps
// agree almost surely under the shared primitives.
inline bool essential_equivalence(const GameSpec& ga, const PolicyProfile& pa,
                                  const GameSpec& gb, const PolicyProfile& pb,
                                  std::uint64_t seed = kDefaultSeed) {
  detail::require(ga.primitives.family == gb.primitives.family,
                  "essential_equivalence: primitive families differ");
  detail::require(ga.num_dms() == gb.num_dms(),
                  "essential_equivalence: DM counts differ");
  if (ga.primitives.family == Family::Finite) {
    detail::require(ga.primitives.joint_card() == gb.primitives.joint_card(),
                    "essential_equivalence: primitive supports differ");
    auto ca = compose_finite(ga, pa);
    auto cb = compose_finite(gb, pb);
    for (std::int64_t z = 0; z < ga.primitives.joint_card(); ++z)
      if (ca.act[z] != cb.act[z]) return false;
    return true;
  }
  detail::require(ga.primitives.dim() == gb.primitives.dim() &&
                      (ga.primitives.mean - gb.primitives.mean).norm() == 0.0 &&
                      (ga.primitives.cov - gb.primitives.cov).norm() == 0.0,
                  "essential_equivalence: primitives differ");
  const auto ca = compose_actions(ga, pa);
  const auto cb = compose_actions(gb, pb);
  const auto& Sig = ga.primitives.cov;
  const auto& mu = ga.primitives.mean;
  for (int m = 0; m < ga.num_dms(); ++m) {
    const MatrixXd D = ca.gain[m] - cb.gain[m];
    const VectorXd dm = D * mu + (ca.offset[m] - cb.offset[m]);
    if (dm.cwiseAbs().maxCoeff() > 1e-10) return false;
    if ((D * Sig * D.transpose()).cwiseAbs().maxCoeff() > 1e-20) return false;
  }
  // Sampled cross-check of the same statement.
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  const MatrixXd chol = Sig.llt().matrixL();
  for (int s = 0; s < 1000; ++s) {
    VectorXd e(mu.size());
    for (int i = 0; i < e.size(); ++i) e[i] = nd(rng);
    const VectorXd zeta = mu + chol * e;
    for (int m = 0; m < ga.num_dms(); ++m) {
      const VectorXd da = ca.gain[m] * zeta + ca.offset[m];
      const VectorXd db = cb.gain[m] * zeta + cb.offset[m];
      if ((da - db).cwiseAbs().maxCoeff() > 1e-10) return false;
    }
  }
  return true;
}

}  // namespace isred
