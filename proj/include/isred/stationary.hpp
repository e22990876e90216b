// Stationarity machinery for affine-Gaussian-quadratic games: total-derivative
// conditional gradients (deviations propagate through downstream observations
// and shared actions), the direct linear solver for stationary profiles of
// static games, and best-response iteration.
#pragma once

#include "isred/game_ops.hpp"

namespace isred {

namespace detail {

inline MatrixXd kron(const MatrixXd& A, const MatrixXd& B) {
  MatrixXd K(A.rows() * B.rows(), A.cols() * B.cols());
  for (int i = 0; i < A.rows(); ++i)
    for (int j = 0; j < A.cols(); ++j)
      K.block(i * B.rows(), j * B.cols(), B.rows(), B.cols()) = A(i, j) * B;
  return K;
}

inline VectorXd vec(const MatrixXd& A) {
  return Eigen::Map<const VectorXd>(A.data(), A.size());
}

inline MatrixXd unvec(const VectorXd& v, int rows, int cols) {
  return Eigen::Map<const MatrixXd>(v.data(), rows, cols);
}

}  // namespace detail

// Total response of every action to an exogenous shift of DM m's action, with
// all policies held fixed: a lower-triangular block matrix with identity
// diagonal blocks. Chains run through D couplings (dynamic variants) and
// shared-action segments (CS variants).
inline MatrixXd response_matrix(const GameSpec& g, const PolicyProfile& p) {
  const int M = g.num_dms();
  const int du = g.total_action_dim();
  MatrixXd L = MatrixXd::Zero(du, du);
  for (int m = 0; m < M; ++m) {
    const int dm = g.action_dim(m), om = g.action_offset(m);
    L.block(om, om, dm, dm) = MatrixXd::Identity(dm, dm);
    // dy[j], da[j]: derivative of yhat_j / u_j w.r.t. the shift at m.
    std::vector<MatrixXd> dy(M), da(M);
    da[m] = MatrixXd::Identity(dm, dm);
    for (int j = m + 1; j < M; ++j) {
      const auto& k = g.obs[j];
      MatrixXd dyj = MatrixXd::Zero(k.obs_dim(), dm);
      if (variant_is_dynamic(g.variant)) {
        int col = 0;
        for (int l : k.deps) {
          if (l >= m && da[l].size() > 0)
            dyj += k.D.middleCols(col, g.action_dim(l)) * da[l];
          col += g.action_dim(l);
        }
      }
      dy[j] = dyj;
      const auto lay = info_layout(g, j);
      MatrixXd dinfo = MatrixXd::Zero(lay.dim, dm);
      for (const auto& seg : lay.segments) {
        if (seg.kind == InfoSegment::Kind::Obs) {
          if (seg.dm > m && dy[seg.dm].size() > 0)
            dinfo.middleRows(seg.offset, seg.size) = dy[seg.dm];
        } else if (seg.dm >= m && da[seg.dm].size() > 0) {
          dinfo.middleRows(seg.offset, seg.size) = da[seg.dm];
        }
      }
      da[j] = p.dm[j].affine.A * dinfo;
      L.block(g.action_offset(j), om, g.action_dim(j), dm) = da[j];
    }
  }
  return L;
}

// Affine-in-zeta representation phi(zeta) = K zeta + k of the conditional
// first-order term of DM m: the u_m-directional derivative of the owner's
// cost along the total response, using the half-gradient M z + b/2.
struct AffineFunction {
  MatrixXd K;
  VectorXd k;
};

namespace detail {

inline AffineFunction total_gradient(const GameSpec& g, const ComposedAffine& comp,
                                     const MatrixXd& L, int m) {
  const int dz = g.primitives.dim();
  const int du = g.total_action_dim();
  const auto& q = g.costs.quad[g.dms[m].player];
  // z(zeta) = Z zeta + z0.
  MatrixXd Z(dz + du, dz);
  VectorXd z0 = VectorXd::Zero(dz + du);
  Z.topRows(dz) = MatrixXd::Identity(dz, dz);
  for (int j = 0; j < g.num_dms(); ++j) {
    Z.middleRows(dz + g.action_offset(j), g.action_dim(j)) = comp.act_gain[j];
    z0.segment(dz + g.action_offset(j), g.action_dim(j)) = comp.act_off[j];
  }
  // Half-gradient in all actions, then contract with the response column.
  const MatrixXd Gu = q.M.middleRows(dz, du);
  const MatrixXd resp = L.middleCols(g.action_offset(m), g.action_dim(m));
  AffineFunction f;
  f.K = resp.transpose() * (Gu * Z);
  f.k = resp.transpose() * (Gu * z0 + 0.5 * q.b.segment(dz, du));
  return f;
}

// Eigenvalue pseudo-inverse of a symmetric PSD matrix.
inline MatrixXd psd_pinv(const MatrixXd& S, double rel_tol = 1e-12) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(S);
  const double cut = rel_tol * std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
  VectorXd inv = es.eigenvalues();
  for (int i = 0; i < inv.size(); ++i) inv[i] = inv[i] > cut ? 1.0 / inv[i] : 0.0;
  return es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace detail

// Per-DM stationarity residuals: the size of E[grad | y_m] as a function on
// the support of y_m, reported as max of the mean part and the per-row
// standard deviation of the conditional function. Zero iff stationary.
inline VectorXd stationarity_residual(const GameSpec& g, const PolicyProfile& p) {
  detail::require(g.primitives.family == Family::Gaussian &&
                      g.costs.kind == CostSpec::Kind::Quadratic,
                  "stationarity: closed form needs the Gaussian-quadratic family");
  const auto comp = compose_affine(g, p);
  const MatrixXd L = response_matrix(g, p);
  const auto& Sig = g.primitives.cov;
  const auto& mu = g.primitives.mean;
  VectorXd out(g.num_dms());
  for (int m = 0; m < g.num_dms(); ++m) {
    const auto f = detail::total_gradient(g, comp, L, m);
    const MatrixXd T = comp.info_gain[m];
    // E[phi | info]: mean part is E[phi]; the fluctuation is the projection
    // of Cov(phi, info) onto the info covariance.
    const VectorXd mean_part = f.K * mu + f.k;
    const MatrixXd Sinfo = T * Sig * T.transpose();
    const MatrixXd C = (f.K * Sig * T.transpose()) * detail::psd_pinv(Sinfo);
    const MatrixXd V = C * Sinfo * C.transpose();
    double r = mean_part.cwiseAbs().maxCoeff();
    for (int i = 0; i < V.rows(); ++i)
      r = std::max(r, std::sqrt(std::max(0.0, V(i, i))));
    out[m] = r;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Direct stationary solve for static games

namespace detail {

// Stacked static observation rows of the DMs whose information m holds.
inline MatrixXd static_stack(const GameSpec& g, int m) {
  const auto closure = info_closure(g, m);
  int dim = 0;
  for (int p : closure) dim += g.obs[p].obs_dim();
  MatrixXd V(dim, g.primitives.dim());
  int r = 0;
  for (int p : closure) {
    V.middleRows(r, g.obs[p].obs_dim()) = g.obs[p].H;
    r += g.obs[p].obs_dim();
  }
  return V;
}

// Gradient pieces of DM m's owner cost: grad_m = P zeta + sum_j Q_j u_j + q.
struct GradPieces {
  MatrixXd P;
  std::vector<MatrixXd> Q;
  VectorXd q;
};

inline GradPieces grad_pieces(const GameSpec& g, int m) {
  const int dz = g.primitives.dim();
  const auto& c = g.costs.quad[g.dms[m].player];
  GradPieces gp;
  const int om = dz + g.action_offset(m), dm = g.action_dim(m);
  gp.P = 2.0 * c.M.block(om, 0, dm, dz);
  for (int j = 0; j < g.num_dms(); ++j)
    gp.Q.push_back(2.0 * c.M.block(om, dz + g.action_offset(j), dm, g.action_dim(j)));
  gp.q = c.b.segment(om, dm);
  return gp;
}

// Composed static coordinates: one (W, w) pair per DM over its static stack.
struct StaticCoords {
  std::vector<MatrixXd> W;
  std::vector<VectorXd> w;
};

inline PolicyProfile coords_to_profile(const GameSpec& g, const StaticCoords& c) {
  PolicyProfile p = zero_affine_profile(g);
  for (int m = 0; m < g.num_dms(); ++m) {
    const auto lay = info_layout(g, m);
    int col = 0;
    for (const auto& seg : lay.segments) {
      if (seg.kind != InfoSegment::Kind::Obs) continue;
      p.dm[m].affine.A.middleCols(seg.offset, seg.size) =
          c.W[m].middleCols(col, seg.size);
      col += seg.size;
    }
    p.dm[m].affine.a = c.w[m];
  }
  return p;
}

struct ThetaIndex {
  std::vector<int> w_off, wvec_off, dims_k;
  int total = 0;
};

inline ThetaIndex theta_index(const GameSpec& g, const std::vector<int>& dms) {
  ThetaIndex ix;
  ix.w_off.assign(g.num_dms(), -1);
  ix.wvec_off.assign(g.num_dms(), -1);
  ix.dims_k.assign(g.num_dms(), 0);
  for (int m : dms) {
    const int k = static_cast<int>(static_stack(g, m).rows());
    ix.dims_k[m] = k;
    ix.wvec_off[m] = ix.total;
    ix.total += g.action_dim(m) * k;
    ix.w_off[m] = ix.total;
    ix.total += g.action_dim(m);
  }
  return ix;
}

}  // namespace detail

struct StationarySolveResult {
  bool feasible = false;
  PolicyProfile profile;
  VectorXd residuals;          // stationarity residuals of the solution
  double ls_residual_inf = 0;  // infeasibility certificate: inf-norm of the
                               // least-squares residual of the linear system
  int manifold_dim = 0;        // solution-space dimension (0 = unique)
};

// Assemble and solve the linear stationarity system of a static game in the
// composed action-map coordinates u_m = W_m (V_m zeta) + w_m, where V_m
// stacks the static observations available to DM m. The conditions are
// E[grad_m] = 0 and Cov(grad_m, V_m zeta) = 0 per DM. Control-sharing info
// adds no further coordinates (shared actions are functions of the stacks),
// so the returned profile carries zero gains on the action segments.
inline StationarySolveResult solve_affine_stationary(const GameSpec& g) {
  detail::require(g.variant == Variant::Static || g.variant == Variant::StaticCS,
                  "solve_affine_stationary: static variants only");
  detail::require(g.primitives.family == Family::Gaussian &&
                      g.costs.kind == CostSpec::Kind::Quadratic,
                  "solve_affine_stationary: Gaussian-quadratic games only");
  validate_game(g);
  const int M = g.num_dms();
  const int dz = g.primitives.dim();
  for (int m = 0; m < M; ++m) {
    const auto& c = g.costs.quad[g.dms[m].player];
    const int om = dz + g.action_offset(m), dm = g.action_dim(m);
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(c.M.block(om, om, dm, dm));
    detail::require(es.eigenvalues().minCoeff() > 0.0,
                    "solve_affine_stationary: own-action block of DM " +
                        std::to_string(m) + " is not definite in its owner's cost");
  }

  std::vector<int> all(M);
  for (int m = 0; m < M; ++m) all[m] = m;
  const auto ix = detail::theta_index(g, all);
  std::vector<MatrixXd> V(M);
  for (int m = 0; m < M; ++m) V[m] = detail::static_stack(g, m);
  const auto& Sig = g.primitives.cov;
  const auto& mu = g.primitives.mean;

  int rows = 0;
  for (int m = 0; m < M; ++m) rows += g.action_dim(m) * (1 + ix.dims_k[m]);
  MatrixXd A = MatrixXd::Zero(rows, ix.total);
  VectorXd rhs = VectorXd::Zero(rows);
  int r = 0;
  for (int m = 0; m < M; ++m) {
    const auto gp = detail::grad_pieces(g, m);
    const int dm = g.action_dim(m);
    // Mean condition.
    for (int j = 0; j < M; ++j) {
      const VectorXd Vmu = V[j] * mu;
      A.block(r, ix.wvec_off[j], dm, g.action_dim(j) * ix.dims_k[j]) =
          detail::kron(Vmu.transpose(), gp.Q[j]);
      A.block(r, ix.w_off[j], dm, g.action_dim(j)) = gp.Q[j];
    }
    rhs.segment(r, dm) = -(gp.P * mu + gp.q);
    r += dm;
    // Covariance condition against the DM's own static stack.
    const MatrixXd SV = Sig * V[m].transpose();  // dz x k_m
    for (int j = 0; j < M; ++j) {
      const MatrixXd B = V[j] * SV;  // k_j x k_m
      A.block(r, ix.wvec_off[j], dm * ix.dims_k[m], g.action_dim(j) * ix.dims_k[j]) =
          detail::kron(B.transpose(), gp.Q[j]);
    }
    rhs.segment(r, dm * ix.dims_k[m]) = -detail::vec(gp.P * SV);
    r += dm * ix.dims_k[m];
  }

  Eigen::CompleteOrthogonalDecomposition<MatrixXd> cod(A);
  const VectorXd theta = cod.solve(rhs);
  const VectorXd resid = A * theta - rhs;

  StationarySolveResult out;
  out.ls_residual_inf = resid.size() ? resid.cwiseAbs().maxCoeff() : 0.0;
  out.manifold_dim = ix.total - static_cast<int>(cod.rank());
  if (out.ls_residual_inf > 1e-8) {
    out.feasible = false;
    return out;
  }
  detail::StaticCoords coords;
  coords.W.resize(M);
  coords.w.resize(M);
  for (int m = 0; m < M; ++m) {
    coords.W[m] = detail::unvec(theta.segment(ix.wvec_off[m], g.action_dim(m) * ix.dims_k[m]),
                                g.action_dim(m), ix.dims_k[m]);
    coords.w[m] = theta.segment(ix.w_off[m], g.action_dim(m));
  }
  out.profile = detail::coords_to_profile(g, coords);
  out.residuals = stationarity_residual(g, out.profile);
  out.feasible = out.residuals.maxCoeff() <= 1e-10;
  return out;
}

// ---------------------------------------------------------------------------
// Best-response iteration

struct BestResponseTrace {
  bool converged = false;
  int iterations = 0;
  std::vector<double> step_norms;
  double contraction_estimate = 0.0;  // max observed step ratio
  PolicyProfile profile;
};

enum class SweepOrder { Jacobi, GaussSeidel };

// Iterate exact per-player affine best responses on a static game. Each
// player's subproblem is the linear stationarity system of its own DMs with
// the other players' coordinates frozen.
inline BestResponseTrace best_response_iteration(const GameSpec& g,
                                                 const PolicyProfile& init,
                                                 int max_iter, double tol,
                                                 SweepOrder order = SweepOrder::Jacobi) {
  detail::require(g.variant == Variant::Static || g.variant == Variant::StaticCS,
                  "best_response_iteration: static variants only");
  detail::require(g.primitives.family == Family::Gaussian &&
                      g.costs.kind == CostSpec::Kind::Quadratic,
                  "best_response_iteration: Gaussian-quadratic games only");
  validate_profile(g, init);
  const int M = g.num_dms();
  const auto& Sig = g.primitives.cov;
  const auto& mu = g.primitives.mean;
  std::vector<MatrixXd> V(M);
  for (int m = 0; m < M; ++m) V[m] = detail::static_stack(g, m);

  // Project the initial profile onto composed coordinates.
  detail::StaticCoords cur;
  cur.W.resize(M);
  cur.w.resize(M);
  {
    const auto comp = compose_affine(g, init);
    for (int m = 0; m < M; ++m) {
      const MatrixXd Sv = V[m] * Sig * V[m].transpose();
      cur.W[m] = comp.act_gain[m] * Sig * V[m].transpose() * detail::psd_pinv(Sv);
      cur.w[m] = comp.act_off[m] + (comp.act_gain[m] - cur.W[m] * V[m]) * mu;
    }
  }

  auto player_best_response = [&](int player, const detail::StaticCoords& held)
      -> detail::StaticCoords {
    const auto mine = g.dms_of_player(player);
    const auto ix = detail::theta_index(g, mine);
    int rows = 0;
    for (int m : mine) rows += g.action_dim(m) * (1 + static_cast<int>(V[m].rows()));
    MatrixXd A = MatrixXd::Zero(rows, ix.total);
    VectorXd rhs = VectorXd::Zero(rows);
    int r = 0;
    for (int m : mine) {
      const auto gp = detail::grad_pieces(g, m);
      const int dm = g.action_dim(m);
      VectorXd cmean = gp.P * mu + gp.q;
      MatrixXd ccov = gp.P * Sig * V[m].transpose();
      for (int j = 0; j < M; ++j) {
        if (ix.wvec_off[j] >= 0) continue;  // own unknowns handled below
        cmean += gp.Q[j] * (held.W[j] * (V[j] * mu) + held.w[j]);
        ccov += gp.Q[j] * held.W[j] * (V[j] * Sig * V[m].transpose());
      }
      for (int j : mine) {
        const VectorXd Vmu = V[j] * mu;
        A.block(r, ix.wvec_off[j], dm, g.action_dim(j) * ix.dims_k[j]) =
            detail::kron(Vmu.transpose(), gp.Q[j]);
        A.block(r, ix.w_off[j], dm, g.action_dim(j)) = gp.Q[j];
      }
      rhs.segment(r, dm) = -cmean;
      r += dm;
      const int km = static_cast<int>(V[m].rows());
      for (int j : mine) {
        const MatrixXd B = V[j] * Sig * V[m].transpose();
        A.block(r, ix.wvec_off[j], dm * km, g.action_dim(j) * ix.dims_k[j]) =
            detail::kron(B.transpose(), gp.Q[j]);
      }
      rhs.segment(r, dm * km) = -detail::vec(ccov);
      r += dm * km;
    }
    Eigen::CompleteOrthogonalDecomposition<MatrixXd> cod(A);
    const VectorXd theta = cod.solve(rhs);
    detail::require((A * theta - rhs).cwiseAbs().maxCoeff() <= 1e-8,
                    "best_response_iteration: player subproblem is ill-posed");
    detail::StaticCoords next = held;
    for (int m : mine) {
      next.W[m] = detail::unvec(
          theta.segment(ix.wvec_off[m], g.action_dim(m) * ix.dims_k[m]),
          g.action_dim(m), ix.dims_k[m]);
      next.w[m] = theta.segment(ix.w_off[m], g.action_dim(m));
    }
    return next;
  };

  BestResponseTrace trace;
  double prev_step = -1.0;
  for (int it = 0; it < max_iter; ++it) {
    detail::StaticCoords next = cur;
    if (order == SweepOrder::Jacobi) {
      for (int i = 0; i < g.num_players; ++i) {
        const auto bri = player_best_response(i, cur);
        for (int m : g.dms_of_player(i)) {
          next.W[m] = bri.W[m];
          next.w[m] = bri.w[m];
        }
      }
    } else {
      for (int i = 0; i < g.num_players; ++i) next = player_best_response(i, next);
    }
    double step = 0.0;
    for (int m = 0; m < M; ++m) {
      step = std::max(step, (next.W[m] - cur.W[m]).cwiseAbs().maxCoeff());
      step = std::max(step, (next.w[m] - cur.w[m]).cwiseAbs().maxCoeff());
    }
    trace.step_norms.push_back(step);
    if (prev_step > 1e-14)
      trace.contraction_estimate = std::max(trace.contraction_estimate, step / prev_step);
    prev_step = step;
    cur = next;
    trace.iterations = it + 1;
    if (step < tol) {
      trace.converged = true;
      break;
    }
  }
  trace.profile = detail::coords_to_profile(g, cur);
  return trace;
}

}  // namespace isred
