// Intrinsic-model game descriptions: primitives, decision makers, observation
// kernels, costs, and policy profiles. Two closed families are supported,
// finite-support and affine-Gaussian-quadratic; everything downstream
// (reductions, equilibrium checks, LQ builders) works on these types.
#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace isred {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline constexpr std::uint64_t kDefaultSeed = 0x5EED;

// Structural or argument problems in a specification or request.
struct SpecError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Family { Finite, Gaussian };

// Which information structure the game description is currently in.
// Dynamic observations are yhat = G(H zeta) + D u_deps; static ones drop the
// action coupling and the mixing, yhat = H zeta. The CS forms additionally
// hand each DM the actions of the DMs feeding its observation.
enum class Variant { General, Dynamic, Static, DynamicCS, StaticCS };

inline bool variant_is_dynamic(Variant v) {
  return v == Variant::General || v == Variant::Dynamic || v == Variant::DynamicCS;
}
inline bool variant_is_cs(Variant v) {
  return v == Variant::DynamicCS || v == Variant::StaticCS;
}

inline const char* to_string(Variant v) {
  switch (v) {
    case Variant::General: return "General";
    case Variant::Dynamic: return "Dynamic";
    case Variant::Static: return "Static";
    case Variant::DynamicCS: return "DynamicCS";
    case Variant::StaticCS: return "StaticCS";
  }
  return "?";
}

inline std::optional<Variant> variant_from_string(const std::string& s) {
  if (s == "General") return Variant::General;
  if (s == "Dynamic") return Variant::Dynamic;
  if (s == "Static") return Variant::Static;
  if (s == "DynamicCS") return Variant::DynamicCS;
  if (s == "StaticCS") return Variant::StaticCS;
  return std::nullopt;
}

// One independent finite-support primitive block (point values + masses).
struct FiniteBlock {
  std::string name;
  std::vector<double> support;
  std::vector<double> probs;

  int card() const { return static_cast<int>(support.size()); }
};

struct GaussianBlock {
  std::string name;
  int dim = 0;
};

// The stacked exogenous vector zeta. Block 0 is the cost-relevant w0; block
// 1+m is DM m's private block. Reduced games may append further blocks.
struct PrimitiveModel {
  Family family = Family::Gaussian;

  // Finite family: independent blocks, joint law is the product.
  std::vector<FiniteBlock> finite_blocks;

  // Gaussian family: one jointly Gaussian vector with named sub-blocks.
  std::vector<GaussianBlock> gaussian_blocks;
  VectorXd mean;
  MatrixXd cov;

  int num_blocks() const {
    return family == Family::Finite ? static_cast<int>(finite_blocks.size())
                                    : static_cast<int>(gaussian_blocks.size());
  }

  int dim() const {
    if (family == Family::Finite) return num_blocks();
    int d = 0;
    for (const auto& b : gaussian_blocks) d += b.dim;
    return d;
  }

  int block_dim(int b) const {
    return family == Family::Finite ? 1 : gaussian_blocks[b].dim;
  }

  int block_offset(int b) const {
    if (family == Family::Finite) return b;
    int off = 0;
    for (int i = 0; i < b; ++i) off += gaussian_blocks[i].dim;
    return off;
  }

  // Finite: number of joint realizations of zeta.
  std::int64_t joint_card() const {
    std::int64_t n = 1;
    for (const auto& b : finite_blocks) n *= b.card();
    return n;
  }

  // Finite: value index of block b inside joint index z (block 0 most significant).
  int block_index_of(std::int64_t z, int b) const {
    std::int64_t stride = 1;
    for (int i = b + 1; i < num_blocks(); ++i) stride *= finite_blocks[i].card();
    return static_cast<int>((z / stride) % finite_blocks[b].card());
  }

  double joint_prob(std::int64_t z) const {
    double p = 1.0;
    for (int b = 0; b < num_blocks(); ++b)
      p *= finite_blocks[b].probs[block_index_of(z, b)];
    return p;
  }

  // Finite: embed joint index z as the vector of block support values.
  VectorXd embed(std::int64_t z) const {
    VectorXd v(num_blocks());
    for (int b = 0; b < num_blocks(); ++b)
      v[b] = finite_blocks[b].support[block_index_of(z, b)];
    return v;
  }
};

// A one-shot decision maker: DM `stage` of player `player`, with a global
// position `order` in the sequential play (0-based everywhere).
struct DmId {
  int player = 0;
  int stage = 0;
  int order = 0;
};

// Observation kernel of one DM together with its information wiring.
// `deps` lists DMs whose actions enter yhat; `fwd` lists DMs whose full
// information vector is forwarded here.
struct ObsKernel {
  std::vector<int> deps;
  std::vector<int> fwd;

  // Gaussian: yhat = G * (H * zeta) + D * u_deps, D column blocks in deps order.
  MatrixXd G, H, D;

  // Finite: symbol = table[z_joint * prod(dep action cards) + dep_action_index].
  int card = 0;
  std::vector<int> table;

  int obs_dim() const { return static_cast<int>(G.rows()); }
};

struct QuadraticCost {
  MatrixXd M;   // symmetric, over z = [zeta; u_0; ...; u_{M-1}]
  VectorXd b;
  double c = 0.0;
};

// Per-player costs. Quadratic costs act on the stacked [zeta; actions]
// vector; table costs are indexed by (zeta joint index, joint action index).
struct CostSpec {
  enum class Kind { Quadratic, Table };
  Kind kind = Kind::Quadratic;
  std::vector<QuadraticCost> quad;
  std::vector<std::vector<double>> table;
  bool zero_sum = false;

  int num_players() const {
    return kind == Kind::Quadratic ? static_cast<int>(quad.size())
                                   : static_cast<int>(table.size());
  }
};

struct GameSpec {
  Variant variant = Variant::Dynamic;
  int num_players = 0;
  PrimitiveModel primitives;
  std::vector<DmId> dms;  // sorted by order

  // Per DM: Gaussian action dimension, or finite embedded action values.
  std::vector<int> action_dims;
  std::vector<std::vector<double>> action_values;

  std::vector<ObsKernel> obs;
  CostSpec costs;

  int num_dms() const { return static_cast<int>(dms.size()); }

  int action_dim(int m) const {
    return primitives.family == Family::Gaussian
               ? action_dims[m]
               : 1;
  }
  int action_card(int m) const { return static_cast<int>(action_values[m].size()); }

  int total_action_dim() const {
    int d = 0;
    for (int m = 0; m < num_dms(); ++m) d += action_dim(m);
    return d;
  }
  int action_offset(int m) const {
    int off = 0;
    for (int j = 0; j < m; ++j) off += action_dim(j);
    return off;
  }
  std::int64_t joint_action_card() const {
    std::int64_t n = 1;
    for (int m = 0; m < num_dms(); ++m) n *= action_card(m);
    return n;
  }

  // z-vector layout for quadratic costs: [zeta; u_0; ...].
  int z_dim() const { return primitives.dim() + total_action_dim(); }

  std::vector<int> dms_of_player(int i) const {
    std::vector<int> out;
    for (int m = 0; m < num_dms(); ++m)
      if (dms[m].player == i) out.push_back(m);
    return out;
  }
};

// Transitive closure of the forwarded-information sets: S(m) = {m} plus the
// closures of everything DM m forwards. Sorted ascending; m is last only by
// coincidence of ordering, callers should not rely on position.
inline std::vector<int> info_closure(const GameSpec& g, int m) {
  std::set<int> s;
  std::vector<int> stack = {m};
  while (!stack.empty()) {
    int j = stack.back();
    stack.pop_back();
    if (!s.insert(j).second) continue;
    for (int f : g.obs[j].fwd) stack.push_back(f);
  }
  return {s.begin(), s.end()};
}

// Actions visible to DM m under a control-sharing variant: the union of the
// action-precedence sets of every DM whose information m holds.
inline std::vector<int> shared_actions(const GameSpec& g, int m) {
  std::set<int> s;
  for (int p : info_closure(g, m))
    for (int j : g.obs[p].deps) s.insert(j);
  return {s.begin(), s.end()};
}

// One slice of a DM's information vector: either DM `dm`'s observation or
// DM `dm`'s action (actions appear only in CS variants).
struct InfoSegment {
  enum class Kind { Obs, Act };
  Kind kind = Kind::Obs;
  int dm = 0;
  int offset = 0;  // position within the info vector (Gaussian)
  int size = 0;
};

struct InfoLayout {
  std::vector<InfoSegment> segments;
  int dim = 0;             // Gaussian info vector dimension
  std::int64_t card = 1;   // Finite info alphabet size

  // Finite: joint info index from per-segment values (first segment most
  // significant), and the reverse.
  std::int64_t index(const std::vector<int>& vals,
                     const std::vector<int>& cards) const {
    std::int64_t idx = 0;
    for (size_t s = 0; s < segments.size(); ++s) idx = idx * cards[s] + vals[s];
    return idx;
  }
};

// Canonical information layout of DM m for the game's variant:
// forwarded observations in global order, then (CS only) shared actions in
// global order, then the DM's own observation.
inline InfoLayout info_layout(const GameSpec& g, int m) {
  InfoLayout lay;
  const bool fin = g.primitives.family == Family::Finite;
  auto push = [&](InfoSegment::Kind k, int dm, int size, int card) {
    InfoSegment seg;
    seg.kind = k;
    seg.dm = dm;
    seg.offset = lay.dim;
    seg.size = size;
    lay.segments.push_back(seg);
    lay.dim += size;
    lay.card *= card;
  };
  for (int p : info_closure(g, m)) {
    if (p == m) continue;
    push(InfoSegment::Kind::Obs, p, fin ? 1 : g.obs[p].obs_dim(),
         fin ? g.obs[p].card : 1);
  }
  if (variant_is_cs(g.variant)) {
    for (int j : shared_actions(g, m))
      push(InfoSegment::Kind::Act, j, fin ? 1 : g.action_dim(j),
           fin ? g.action_card(j) : 1);
  }
  push(InfoSegment::Kind::Obs, m, fin ? 1 : g.obs[m].obs_dim(),
       fin ? g.obs[m].card : 1);
  return lay;
}

struct AffinePolicy {
  MatrixXd A;
  VectorXd a;
};

struct TablePolicy {
  std::vector<int> act;  // action index per joint info index
};

struct Policy {
  enum class Kind { Affine, Table };
  Kind kind = Kind::Affine;
  AffinePolicy affine;
  TablePolicy table;
};

struct PolicyProfile {
  Variant variant = Variant::Dynamic;
  std::vector<Policy> dm;
};

inline PolicyProfile zero_affine_profile(const GameSpec& g) {
  PolicyProfile p;
  p.variant = g.variant;
  p.dm.resize(g.num_dms());
  for (int m = 0; m < g.num_dms(); ++m) {
    p.dm[m].kind = Policy::Kind::Affine;
    p.dm[m].affine.A = MatrixXd::Zero(g.action_dim(m), info_layout(g, m).dim);
    p.dm[m].affine.a = VectorXd::Zero(g.action_dim(m));
  }
  return p;
}

// A copy of the game in another information-structure variant. The kernels
// carry both the dynamic (G, D) and static (H) data, so flipping the tag is
// enough; CS tags change the info layouts.
inline GameSpec with_variant(const GameSpec& g, Variant v) {
  GameSpec out = g;
  out.variant = v;
  return out;
}

namespace detail {

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw SpecError(msg);
}

}  // namespace detail

// Structural validation of every GameSpec invariant: probability masses,
// covariance positivity, dimension chains, acyclic precedence, zero-sum
// consistency. Throws SpecError naming the first violation.
inline void validate_game(const GameSpec& g) {
  using detail::require;
  const int M = g.num_dms();
  require(g.num_players >= 1, "game: needs at least one player");
  require(static_cast<int>(g.obs.size()) == M, "game: obs kernel count != DM count");

  std::vector<int> orders;
  std::set<std::pair<int, int>> seen;
  for (const auto& dm : g.dms) {
    orders.push_back(dm.order);
    require(dm.player >= 0 && dm.player < g.num_players, "dm: player out of range");
    require(seen.insert({dm.player, dm.stage}).second, "dm: duplicate (player, stage)");
  }
  std::vector<int> sorted = orders;
  std::sort(sorted.begin(), sorted.end());
  for (int m = 0; m < M; ++m)
    require(sorted[m] == m, "dm: orders are not a permutation of 0..M-1");
  for (int m = 0; m < M; ++m)
    require(g.dms[m].order == m, "dm: list must be sorted by global order");

  const auto& pr = g.primitives;
  if (pr.family == Family::Finite) {
    for (const auto& b : pr.finite_blocks) {
      require(b.card() >= 1, "primitives: empty block " + b.name);
      require(b.support.size() == b.probs.size(), "primitives: support/probs mismatch");
      double s = 0.0;
      for (double p : b.probs) {
        require(p >= 0.0, "primitives: negative mass in " + b.name);
        s += p;
      }
      require(std::abs(s - 1.0) <= 1e-12, "primitives: masses of " + b.name +
                                              " sum to " + std::to_string(s));
    }
    require(static_cast<int>(g.action_values.size()) == M, "actions: value table count");
    for (int m = 0; m < M; ++m)
      require(!g.action_values[m].empty(), "actions: empty action set");
  } else {
    const int d = pr.dim();
    require(pr.mean.size() == d, "primitives: mean dimension");
    require(pr.cov.rows() == d && pr.cov.cols() == d, "primitives: cov dimension");
    require((pr.cov - pr.cov.transpose()).cwiseAbs().maxCoeff() <= 1e-10,
            "primitives: cov not symmetric");
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(pr.cov);
    const double lo = es.eigenvalues().minCoeff(), hi = es.eigenvalues().maxCoeff();
    require(lo > 1e-10 * std::max(hi, 1.0), "primitives: cov not positive definite");
    require(static_cast<int>(g.action_dims.size()) == M, "actions: dim count");
  }

  for (int m = 0; m < M; ++m) {
    const auto& k = g.obs[m];
    for (int j : k.deps)
      require(j >= 0 && j < m, "obs: precedence of DM " + std::to_string(m) +
                                   " references DM " + std::to_string(j) +
                                   " not strictly earlier (cycle)");
    for (int j : k.fwd)
      require(j >= 0 && j < m, "obs: forward set of DM " + std::to_string(m) +
                                   " references DM " + std::to_string(j) +
                                   " not strictly earlier (cycle)");
    if (pr.family == Family::Gaussian) {
      require(k.G.rows() == k.G.cols(), "obs: G of DM " + std::to_string(m) + " not square");
      require(k.H.rows() == k.G.rows() && k.H.cols() == pr.dim(),
              "obs: H of DM " + std::to_string(m) + " has wrong shape");
      int dep_dim = 0;
      for (int j : k.deps) dep_dim += g.action_dim(j);
      require(k.D.rows() == k.G.rows() && k.D.cols() == dep_dim,
              "obs: D of DM " + std::to_string(m) + " has wrong shape");
    } else {
      require(k.card >= 1, "obs: empty alphabet at DM " + std::to_string(m));
      std::int64_t dep_card = 1;
      for (int j : k.deps) dep_card *= g.action_card(j);
      require(static_cast<std::int64_t>(k.table.size()) == pr.joint_card() * dep_card,
              "obs: table size of DM " + std::to_string(m));
      for (int v : k.table)
        require(v >= 0 && v < k.card, "obs: table symbol out of range");
    }
  }

  require(g.costs.num_players() == g.num_players, "costs: player count");
  if (g.costs.kind == CostSpec::Kind::Quadratic) {
    require(pr.family == Family::Gaussian, "costs: quadratic costs need Gaussian family");
    const int dz = g.z_dim();
    for (const auto& q : g.costs.quad) {
      require(q.M.rows() == dz && q.M.cols() == dz, "costs: M dimension");
      require((q.M - q.M.transpose()).cwiseAbs().maxCoeff() <= 1e-10, "costs: M not symmetric");
      require(q.b.size() == dz, "costs: b dimension");
    }
    if (g.costs.zero_sum) {
      require(g.num_players == 2, "costs: zero-sum needs two players");
      require((g.costs.quad[0].M + g.costs.quad[1].M).cwiseAbs().maxCoeff() <= 1e-10 &&
                  (g.costs.quad[0].b + g.costs.quad[1].b).cwiseAbs().maxCoeff() <= 1e-10 &&
                  std::abs(g.costs.quad[0].c + g.costs.quad[1].c) <= 1e-10,
              "costs: zero-sum flag but c1 != -c2");
    }
  } else {
    const std::int64_t n = pr.joint_card() * g.joint_action_card();
    for (const auto& t : g.costs.table)
      require(static_cast<std::int64_t>(t.size()) == n, "costs: table size");
    if (g.costs.zero_sum) {
      require(g.num_players == 2, "costs: zero-sum needs two players");
      for (std::int64_t i = 0; i < n; ++i)
        require(std::abs(g.costs.table[0][i] + g.costs.table[1][i]) <= 1e-12,
                "costs: zero-sum flag but c1 != -c2");
    }
  }
}

// Per-DM confirmation that whenever (j,l)'s action affects this DM's
// observation, (j,l)'s full information is forwarded here.
struct NestednessReport {
  bool nested = true;
  std::vector<std::pair<int, int>> violations;  // (dm, offending precedent)
};

inline NestednessReport validate_partial_nestedness(const GameSpec& g) {
  validate_game(g);  // malformed precedence (cycles) surfaces here
  NestednessReport rep;
  for (int m = 0; m < g.num_dms(); ++m) {
    auto closure = info_closure(g, m);
    for (int j : g.obs[m].deps) {
      if (!std::binary_search(closure.begin(), closure.end(), j)) {
        rep.nested = false;
        rep.violations.emplace_back(m, j);
      }
    }
  }
  return rep;
}

inline void validate_profile(const GameSpec& g, const PolicyProfile& p) {
  using detail::require;
  require(p.variant == g.variant, "profile: representation tag does not match game variant");
  require(static_cast<int>(p.dm.size()) == g.num_dms(), "profile: policy count");
  for (int m = 0; m < g.num_dms(); ++m) {
    const auto lay = info_layout(g, m);
    if (p.dm[m].kind == Policy::Kind::Affine) {
      require(g.primitives.family == Family::Gaussian,
              "profile: affine policy in finite game");
      require(p.dm[m].affine.A.rows() == g.action_dim(m) &&
                  p.dm[m].affine.A.cols() == lay.dim,
              "profile: gain shape of DM " + std::to_string(m));
      require(p.dm[m].affine.a.size() == g.action_dim(m),
              "profile: offset shape of DM " + std::to_string(m));
    } else {
      require(static_cast<std::int64_t>(p.dm[m].table.act.size()) == lay.card,
              "profile: table of DM " + std::to_string(m) + " is not total");
      for (int a : p.dm[m].table.act)
        require(a >= 0 && a < g.action_card(m), "profile: action index out of range");
    }
  }
}

}  // namespace isred
