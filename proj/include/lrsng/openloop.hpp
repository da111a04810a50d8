#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "lrsng/errors.hpp"
#include "lrsng/estimator.hpp"
#include "lrsng/evaluate.hpp"
#include "lrsng/linalg.hpp"
#include "lrsng/model.hpp"
#include "lrsng/random.hpp"
#include "lrsng/riccati.hpp"
#include "lrsng/scenario_tree.hpp"

namespace lrsng {

enum class Player { local, remote };

// One dim-vector per item (node or class) per depth, stored flat.
class Layered {
 public:
  Layered() = default;

  Layered(int dim, const std::vector<std::size_t>& counts) : dim_(dim) {
    levels_.reserve(counts.size());
    for (auto c : counts) levels_.emplace_back(c * static_cast<std::size_t>(dim), 0.0);
  }

  int dim() const { return dim_; }
  std::size_t depths() const { return levels_.size(); }
  std::size_t count(std::size_t d) const {
    return dim_ == 0 ? 0 : levels_[d].size() / static_cast<std::size_t>(dim_);
  }

  Eigen::Map<Vector> operator()(std::size_t d, std::size_t i) {
    return {levels_[d].data() + i * static_cast<std::size_t>(dim_), dim_};
  }
  Eigen::Map<const Vector> operator()(std::size_t d, std::size_t i) const {
    return {levels_[d].data() + i * static_cast<std::size_t>(dim_), dim_};
  }

  std::vector<double>& level(std::size_t d) { return levels_[d]; }
  const std::vector<double>& level(std::size_t d) const { return levels_[d]; }

  void fill(double v) {
    for (auto& l : levels_) std::fill(l.begin(), l.end(), v);
  }

  double max_abs() const {
    double m = 0.0;
    for (const auto& l : levels_)
      for (double v : l) m = std::max(m, std::abs(v));
    return m;
  }

 private:
  int dim_ = 0;
  std::vector<std::vector<double>> levels_;
};

// Open-loop controls on the tree: u^L per node (local classes are single
// nodes) and u^R per remote class, for stages k = 0..N. Measurability holds
// by construction.
struct AdaptedControlProfile {
  Layered uL;
  Layered uR;
};

namespace detail {

inline std::vector<std::size_t> node_counts(const ScenarioTree& t, std::size_t depths) {
  std::vector<std::size_t> c;
  for (std::size_t d = 0; d < depths; ++d) c.push_back(t.levels[d].size());
  return c;
}

inline std::vector<std::size_t> class_counts(const ScenarioTree& t) {
  std::vector<std::size_t> c;
  for (const auto& m : t.remote_members) c.push_back(m.size());
  return c;
}

inline std::size_t stages(const ScenarioTree& t) {
  return static_cast<std::size_t>(t.horizon) + 1;
}

}  // namespace detail

inline AdaptedControlProfile zero_profile(const ScenarioTree& t, const GameSpec& s) {
  return {Layered(s.m1, detail::node_counts(t, detail::stages(t))),
          Layered(s.m2, detail::class_counts(t))};
}

// States x_d at every node, d = 0..N+1. With homogeneous set the initial
// points and noise are replaced by zero, which leaves the linear part of the
// control-to-state map.
inline Layered forward_states(const ScenarioTree& t, const GameSpec& s,
                              const AdaptedControlProfile& u,
                              bool homogeneous = false) {
  Layered x(s.n, detail::node_counts(t, t.depth_count()));
  for (std::size_t i = 0; i < t.levels[0].size(); ++i) {
    if (homogeneous) continue;
    x(0, i) = t.x0.points[static_cast<std::size_t>(t.levels[0][i].x0_branch)];
  }
  Vector drift(s.n);
  for (std::size_t d = 0; d + 1 < t.depth_count(); ++d) {
    const auto& level = t.levels[d];
    for (std::size_t i = 0; i < level.size(); ++i) {
      const auto& nd = level[i];
      drift.noalias() = s.A * x(d, i);
      drift.noalias() += s.BL * u.uL(d, i);
      drift.noalias() += s.BR * u.uR(d, static_cast<std::size_t>(nd.remote_class));
      for (int c = 0; c < nd.num_children; ++c) {
        const auto ci = static_cast<std::size_t>(nd.first_child + c);
        auto xc = x(d + 1, ci);
        xc = drift;
        if (!homogeneous)
          xc += t.w.points[static_cast<std::size_t>(t.levels[d + 1][ci].w_branch)];
      }
    }
  }
  return x;
}

inline CostPair tree_cost(const ScenarioTree& t, const GameSpec& s,
                          const AdaptedControlProfile& u) {
  const Layered x = forward_states(t, s, u);
  CostPair j;
  for (std::size_t d = 0; d < t.depth_count(); ++d) {
    const auto& level = t.levels[d];
    const bool terminal = d + 1 == t.depth_count();
    double jl = 0.0, jr = 0.0;
    for (std::size_t i = 0; i < level.size(); ++i) {
      const auto xi = x(d, i);
      double cl, cr;
      if (terminal) {
        cl = xi.dot(s.PL_term * xi);
        cr = xi.dot(s.PR_term * xi);
      } else {
        const auto ul = u.uL(d, i);
        const auto ur = u.uR(d, static_cast<std::size_t>(level[i].remote_class));
        cl = xi.dot(s.QL * xi) + ul.dot(s.SL * ul) + ur.dot(s.ML * ur);
        cr = xi.dot(s.QR * xi) + ul.dot(s.SR * ul) + ur.dot(s.MR * ur);
      }
      jl += level[i].prob * cl;
      jr += level[i].prob * cr;
    }
    j.jl += jl;
    j.jr += jr;
  }
  return j;
}

// ---------------------------------------------------------------------------
// Conditional expectations

// E[v | F^L_k] for a field v on the depth-(k+1) nodes: the probability
// weighted average over each depth-k node's children.
inline Vector expect_given_node(const ScenarioTree& t, const Layered& v,
                                std::size_t k, std::size_t i) {
  const auto& nd = t.levels[k][i];
  Vector acc = Vector::Zero(v.dim());
  for (int c = 0; c < nd.num_children; ++c) {
    const auto ci = static_cast<std::size_t>(nd.first_child + c);
    acc += t.levels[k + 1][ci].cond_prob * v(k + 1, ci);
  }
  return acc;
}

// E[v | F^R_k] for a field v given per depth-k node.
inline Vector expect_given_class(const ScenarioTree& t, const Layered& v,
                                 std::size_t k, std::size_t cls) {
  Vector acc = Vector::Zero(v.dim());
  const double mass = t.remote_prob[k][cls];
  if (mass <= 0.0) return acc;
  for (int i : t.remote_members[k][cls])
    acc += t.levels[k][static_cast<std::size_t>(i)].prob * v(k, static_cast<std::size_t>(i));
  return acc / mass;
}

// E[v | F^R_k] for a field v on the depth-(k+1) nodes, averaging directly over
// all grandchildren of the class without the intermediate F^L_k step.
inline Vector expect_next_given_class(const ScenarioTree& t, const Layered& v,
                                      std::size_t k, std::size_t cls) {
  Vector acc = Vector::Zero(v.dim());
  double mass = 0.0;
  for (int i : t.remote_members[k][cls]) {
    const auto& nd = t.levels[k][static_cast<std::size_t>(i)];
    for (int c = 0; c < nd.num_children; ++c) {
      const auto ci = static_cast<std::size_t>(nd.first_child + c);
      const double pr = t.levels[k + 1][ci].prob;
      acc += pr * v(k + 1, ci);
      mass += pr;
    }
  }
  return mass > 0.0 ? Vector(acc / mass) : acc;
}

// max |E[E[v | F^L_k] | F^R_k] - E[v | F^R_k]| over all stages and remote
// classes, for a field v on depths 1..N+1.
inline double tower_property_gap(const ScenarioTree& t, const Layered& v) {
  double gap = 0.0;
  for (std::size_t k = 0; k + 1 < t.depth_count(); ++k) {
    Layered inner(v.dim(), {t.levels[k].size()});
    for (std::size_t i = 0; i < t.levels[k].size(); ++i)
      inner(0, i) = expect_given_node(t, v, k, i);
    for (std::size_t cls = 0; cls < t.remote_members[k].size(); ++cls) {
      if (t.remote_prob[k][cls] <= 0.0) continue;
      Vector nested_mean = Vector::Zero(v.dim());
      for (int i : t.remote_members[k][cls])
        nested_mean += t.levels[k][static_cast<std::size_t>(i)].prob *
                       inner(0, static_cast<std::size_t>(i));
      nested_mean /= t.remote_prob[k][cls];
      const Vector direct = expect_next_given_class(t, v, k, cls);
      gap = std::max(gap, (nested_mean - direct).cwiseAbs().maxCoeff());
    }
  }
  return gap;
}

// Every remote class at every stage is a union of local classes (single
// nodes), and every node belongs to exactly one remote class.
inline bool remote_refines_local(const ScenarioTree& t) {
  for (std::size_t k = 0; k < t.remote_members.size(); ++k) {
    std::vector<int> seen(t.levels[k].size(), 0);
    for (std::size_t cls = 0; cls < t.remote_members[k].size(); ++cls) {
      for (int i : t.remote_members[k][cls]) {
        const auto idx = static_cast<std::size_t>(i);
        if (t.levels[k][idx].remote_class != static_cast<int>(cls)) return false;
        ++seen[idx];
      }
    }
    for (int c : seen)
      if (c != 1) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Costates and stationarity

// θ^L_k and θ^R_k live on the depth-(k+1) nodes, k = 0..N. Depth 0 is
// unused.
struct CostateField {
  Layered thetaL;
  Layered thetaR;
};

namespace detail {

inline CostateField costates_from_states(const ScenarioTree& t, const GameSpec& s,
                                         const Layered& x, bool homogeneous_terms) {
  (void)homogeneous_terms;
  const auto counts = node_counts(t, t.depth_count());
  CostateField f{Layered(s.n, counts), Layered(s.n, counts)};
  const std::size_t last = t.depth_count() - 1;
  for (std::size_t i = 0; i < t.levels[last].size(); ++i) {
    f.thetaL(last, i).noalias() = s.PL_term * x(last, i);
    f.thetaR(last, i).noalias() = s.PR_term * x(last, i);
  }
  Vector el(s.n), er(s.n);
  for (std::size_t d = last; d-- > 1;) {
    const auto& level = t.levels[d];
    for (std::size_t i = 0; i < level.size(); ++i) {
      const auto& nd = level[i];
      el.setZero();
      er.setZero();
      for (int c = 0; c < nd.num_children; ++c) {
        const auto ci = static_cast<std::size_t>(nd.first_child + c);
        const double q = t.levels[d + 1][ci].cond_prob;
        el += q * f.thetaL(d + 1, ci);
        er += q * f.thetaR(d + 1, ci);
      }
      auto tl = f.thetaL(d, i);
      auto tr = f.thetaR(d, i);
      tl.noalias() = s.QL * x(d, i);
      tl.noalias() += s.A.transpose() * el;
      tr.noalias() = s.QR * x(d, i);
      tr.noalias() += s.A.transpose() * er;
    }
  }
  return f;
}

}  // namespace detail

// Backward recursion θ_{k-1} = Q x_k + Aᵀ E[θ_k | F^L_k] from
// θ_N = P_{N+1} x_{N+1}, for both players. Both recursions condition on the
// local filtration.
inline CostateField costates(const ScenarioTree& t, const GameSpec& s,
                             const AdaptedControlProfile& u) {
  return detail::costates_from_states(t, s, forward_states(t, s, u), false);
}

// Θ^L(node, k) = S^L u^L + E[BLᵀ θ^L_k | F^L_k] and
// Θ^R(class, k) = M^R u^R + E[BRᵀ θ^R_k | F^R_k].
struct StationarityResiduals {
  Layered local;   // per node, k = 0..N
  Layered remote;  // per remote class, k = 0..N
  std::size_t skipped_classes = 0;  // zero-probability classes

  double max_abs() const { return std::max(local.max_abs(), remote.max_abs()); }
};

namespace detail {

inline StationarityResiduals residuals_from(const ScenarioTree& t, const GameSpec& s,
                                            const AdaptedControlProfile& u,
                                            const CostateField& f) {
  StationarityResiduals r{Layered(s.m1, node_counts(t, stages(t))),
                          Layered(s.m2, class_counts(t)), 0};
  Vector el(s.n);
  for (std::size_t k = 0; k < stages(t); ++k) {
    const auto& level = t.levels[k];
    for (std::size_t i = 0; i < level.size(); ++i) {
      const auto& nd = level[i];
      el.setZero();
      for (int c = 0; c < nd.num_children; ++c) {
        const auto ci = static_cast<std::size_t>(nd.first_child + c);
        el += t.levels[k + 1][ci].cond_prob * f.thetaL(k + 1, ci);
      }
      auto out = r.local(k, i);
      out.noalias() = s.SL * u.uL(k, i);
      out.noalias() += s.BL.transpose() * el;
    }
    for (std::size_t cls = 0; cls < t.remote_members[k].size(); ++cls) {
      auto out = r.remote(k, cls);
      if (t.remote_prob[k][cls] <= 0.0) {
        out.setZero();
        ++r.skipped_classes;
        continue;
      }
      const Vector er = expect_next_given_class(t, f.thetaR, k, cls);
      out.noalias() = s.MR * u.uR(k, cls);
      out.noalias() += s.BR.transpose() * er;
    }
  }
  return r;
}

}  // namespace detail

inline StationarityResiduals stationarity_residuals(const ScenarioTree& t,
                                                    const GameSpec& s,
                                                    const AdaptedControlProfile& u) {
  return detail::residuals_from(t, s, u, costates(t, s, u));
}

// ---------------------------------------------------------------------------
// Open-loop equilibrium

namespace detail {

inline std::size_t profile_size(const AdaptedControlProfile& u) {
  std::size_t n = 0;
  for (std::size_t d = 0; d < u.uL.depths(); ++d) n += u.uL.level(d).size();
  for (std::size_t d = 0; d < u.uR.depths(); ++d) n += u.uR.level(d).size();
  return n;
}

// u^L levels first, then u^R levels.
inline Vector flatten(const Layered& a, const Layered& b) {
  std::size_t n = 0;
  for (std::size_t d = 0; d < a.depths(); ++d) n += a.level(d).size();
  for (std::size_t d = 0; d < b.depths(); ++d) n += b.level(d).size();
  Vector out(static_cast<Eigen::Index>(n));
  Eigen::Index pos = 0;
  for (const Layered* l : {&a, &b})
    for (std::size_t d = 0; d < l->depths(); ++d)
      for (double v : l->level(d)) out(pos++) = v;
  return out;
}

inline void unflatten(const Vector& v, Layered& a, Layered& b) {
  Eigen::Index pos = 0;
  for (Layered* l : {&a, &b})
    for (std::size_t d = 0; d < l->depths(); ++d)
      for (double& x : l->level(d)) x = v(pos++);
}

// Locates flat index j inside the profile layout.
inline double& profile_entry(AdaptedControlProfile& u, std::size_t j) {
  for (Layered* l : {&u.uL, &u.uR}) {
    for (std::size_t d = 0; d < l->depths(); ++d) {
      auto& level = l->level(d);
      if (j < level.size()) return level[j];
      j -= level.size();
    }
  }
  throw StructuralError("profile index out of range");
}

}  // namespace detail

struct OpenLoopSolution {
  AdaptedControlProfile profile;
  double max_residual = 0.0;
  std::size_t unknowns = 0;
};

inline constexpr double kOpenLoopResidualTolerance = 1e-10;

// States and costates are affine in the controls, so the stationarity
// conditions form a square linear system H u + r₀ = 0 over all u^L node
// values and u^R class values. r₀ is the residual at u = 0; column j of H is
// the residual of the homogeneous problem (x₀ = 0, w = 0) driven by the j-th
// unit control.
inline OpenLoopSolution solve_open_loop(const ScenarioTree& t, const GameSpec& s) {
  AdaptedControlProfile u = zero_profile(t, s);
  const std::size_t dim = detail::profile_size(u);

  const auto r0 = stationarity_residuals(t, s, u);
  const Vector rhs = -detail::flatten(r0.local, r0.remote);

  Matrix H(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
  for (std::size_t j = 0; j < dim; ++j) {
    detail::profile_entry(u, j) = 1.0;
    const Layered x = forward_states(t, s, u, true);
    const auto f = detail::costates_from_states(t, s, x, true);
    const auto r = detail::residuals_from(t, s, u, f);
    H.col(static_cast<Eigen::Index>(j)) = detail::flatten(r.local, r.remote);
    detail::profile_entry(u, j) = 0.0;
  }

  Eigen::PartialPivLU<Matrix> lu(H);
  Vector sol = lu.solve(rhs);
  const double scale = std::max(1.0, rhs.cwiseAbs().maxCoeff());
  const bool suspect = !sol.allFinite() || lu.rcond() < 1e-12 ||
                       (H * sol - rhs).cwiseAbs().maxCoeff() > 1e-8 * scale;
  if (suspect) {
    // A consistent but singular system would still "solve"; only a full
    // rank certifies uniqueness.
    Eigen::FullPivLU<Matrix> full(H);
    if (full.rank() < static_cast<Eigen::Index>(dim))
      throw SingularSystemError(static_cast<long long>(dim),
                                static_cast<long long>(full.rank()));
    sol = full.solve(rhs);
  }

  OpenLoopSolution out;
  out.unknowns = dim;
  detail::unflatten(sol, u.uL, u.uR);
  out.max_residual = stationarity_residuals(t, s, u).max_abs();
  out.profile = std::move(u);
  return out;
}

// ---------------------------------------------------------------------------
// Variational identity

// Perturbation direction for one player, given per node at every stage
// k = 0..N. A remote direction must be constant on each remote class.
struct Direction {
  Player player = Player::local;
  Layered values;
};

namespace detail {

// Per-class values of a remote direction; throws if it is not F^R-adapted.
inline Layered remote_direction_values(const ScenarioTree& t, const Direction& dir) {
  Layered out(dir.values.dim(), class_counts(t));
  for (std::size_t k = 0; k < out.depths(); ++k) {
    for (std::size_t cls = 0; cls < t.remote_members[k].size(); ++cls) {
      const auto& members = t.remote_members[k][cls];
      const auto first = static_cast<std::size_t>(members.front());
      const Vector ref = dir.values(k, first);
      const double tol = 1e-12 * std::max(1.0, ref.cwiseAbs().maxCoeff());
      for (int i : members) {
        if ((dir.values(k, static_cast<std::size_t>(i)) - ref).cwiseAbs().maxCoeff() > tol)
          throw MeasurabilityError("remote direction is not adapted to F^R at stage " +
                                   std::to_string(k) + " (class " + std::to_string(cls) + ")");
      }
      out(k, cls) = ref;
    }
  }
  return out;
}

}  // namespace detail

inline AdaptedControlProfile perturbed(const ScenarioTree& t,
                                       const AdaptedControlProfile& u,
                                       const Direction& dir, double eps) {
  AdaptedControlProfile out = u;
  if (dir.player == Player::local) {
    for (std::size_t k = 0; k < out.uL.depths(); ++k)
      for (std::size_t i = 0; i < out.uL.count(k); ++i) out.uL(k, i) += eps * dir.values(k, i);
  } else {
    const Layered per_class = detail::remote_direction_values(t, dir);
    for (std::size_t k = 0; k < out.uR.depths(); ++k)
      for (std::size_t c = 0; c < out.uR.count(k); ++c) out.uR(k, c) += eps * per_class(k, c);
  }
  return out;
}

inline Direction zero_direction(const ScenarioTree& t, const GameSpec& s, Player who) {
  return {who, Layered(who == Player::local ? s.m1 : s.m2,
                       detail::node_counts(t, detail::stages(t)))};
}

// Entries uniform on [-1, 1]; a remote direction draws one value per class
// and copies it to every member node.
inline Direction random_direction(const ScenarioTree& t, const GameSpec& s,
                                  Player who, Stream& rng) {
  Direction dir = zero_direction(t, s, who);
  for (std::size_t k = 0; k < dir.values.depths(); ++k) {
    if (who == Player::local) {
      for (double& v : dir.values.level(k)) v = rng.uniform(-1.0, 1.0);
    } else {
      for (const auto& members : t.remote_members[k]) {
        Vector v(s.m2);
        for (Eigen::Index e = 0; e < v.size(); ++e) v(e) = rng.uniform(-1.0, 1.0);
        for (int i : members) dir.values(k, static_cast<std::size_t>(i)) = v;
      }
    }
  }
  return dir;
}

// Second-order term δJ^L(δu) (or ΔJ^R for a remote direction): the cost of
// the variation state z_{k+1} = A z_k + B δu_k, z₀ = 0.
inline double second_variation(const ScenarioTree& t, const GameSpec& s,
                               const Direction& dir) {
  const bool local = dir.player == Player::local;
  const Matrix& B = local ? s.BL : s.BR;
  const Matrix& Q = local ? s.QL : s.QR;
  const Matrix& W = local ? s.SL : s.MR;
  const Matrix& P = local ? s.PL_term : s.PR_term;
  if (!local) (void)detail::remote_direction_values(t, dir);

  Layered z(s.n, detail::node_counts(t, t.depth_count()));
  double total = 0.0;
  Vector drift(s.n);
  for (std::size_t d = 0; d < t.depth_count(); ++d) {
    const auto& level = t.levels[d];
    const bool terminal = d + 1 == t.depth_count();
    double acc = 0.0;
    for (std::size_t i = 0; i < level.size(); ++i) {
      const auto zi = z(d, i);
      if (terminal) {
        acc += level[i].prob * zi.dot(P * zi);
        continue;
      }
      const auto du = dir.values(d, i);
      acc += level[i].prob * (zi.dot(Q * zi) + du.dot(W * du));
      drift.noalias() = s.A * zi;
      drift.noalias() += B * du;
      for (int c = 0; c < level[i].num_children; ++c)
        z(d + 1, static_cast<std::size_t>(level[i].first_child + c)) = drift;
    }
    total += acc;
  }
  return total;
}

// First-order term Σ_k E[(Bᵀθ_k + W u_k)ᵀ δu_k] of the deviating player.
inline double first_variation(const ScenarioTree& t, const GameSpec& s,
                              const AdaptedControlProfile& u, const Direction& dir) {
  const bool local = dir.player == Player::local;
  if (!local) (void)detail::remote_direction_values(t, dir);
  const auto f = costates(t, s, u);
  const Layered& theta = local ? f.thetaL : f.thetaR;
  double total = 0.0;
  for (std::size_t k = 0; k < detail::stages(t); ++k) {
    const auto& level = t.levels[k];
    double acc = 0.0;
    for (std::size_t i = 0; i < level.size(); ++i) {
      const Vector e = expect_given_node(t, theta, k, i);
      Vector g;
      if (local) {
        g = s.BL.transpose() * e + s.SL * u.uL(k, i);
      } else {
        g = s.BR.transpose() * e +
            s.MR * u.uR(k, static_cast<std::size_t>(level[i].remote_class));
      }
      acc += level[i].prob * g.dot(dir.values(k, i));
    }
    total += acc;
  }
  return total;
}

// |J(u + ε·δu) - J(u) - ε²·δJ(δu) - 2ε·Σ E[(Bᵀθ + W u)ᵀ δu]| for the player
// owning the direction. The identity is exact for every ε.
inline double variational_identity_check(const ScenarioTree& t, const GameSpec& s,
                                         const AdaptedControlProfile& u,
                                         const Direction& dir, double eps) {
  const auto base = tree_cost(t, s, u);
  const auto moved = tree_cost(t, s, perturbed(t, u, dir, eps));
  const bool local = dir.player == Player::local;
  const double lhs = local ? moved.jl - base.jl : moved.jr - base.jr;
  const double rhs = eps * eps * second_variation(t, s, dir) +
                     2.0 * eps * first_variation(t, s, u, dir);
  return std::abs(lhs - rhs);
}

// Smallest J(u + ε·δu) - J(u) of the deviating player over `count` random
// adapted directions with ε uniform on (0, max_eps].
inline double worst_unilateral_gain(const ScenarioTree& t, const GameSpec& s,
                                    const AdaptedControlProfile& u, Player who,
                                    std::uint64_t count, double max_eps,
                                    std::uint64_t seed) {
  const auto base = tree_cost(t, s, u);
  double worst = INFINITY;
  for (std::uint64_t i = 0; i < count; ++i) {
    Stream rng(seed, (who == Player::local ? 0 : 1) + 2 * i);
    const Direction dir = random_direction(t, s, who, rng);
    const double eps = max_eps * (1.0 - rng.uniform());
    const auto j = tree_cost(t, s, perturbed(t, u, dir, eps));
    worst = std::min(worst, who == Player::local ? j.jl - base.jl : j.jr - base.jr);
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Closed-loop policies on the tree

struct ClosedLoopOnTree {
  AdaptedControlProfile profile;
  Layered xhat;    // depths 0..N
  Layered xtilde;  // depths 0..N
};

// Runs the estimator along every path and evaluates the linear policy. The
// resulting u^R must agree across each remote class; a mismatch means the
// policy is not F^R-adapted on this tree and raises MeasurabilityError.
inline ClosedLoopOnTree closed_loop_profile(const ScenarioTree& t, const GameSpec& s,
                                            const PolicySequence& policy) {
  if (policy.KLt.size() != detail::stages(t) || policy.KRt.size() != detail::stages(t))
    throw StructuralError("policy length does not match tree horizon");
  const auto counts = detail::node_counts(t, detail::stages(t));
  ClosedLoopOnTree out{zero_profile(t, s), Layered(s.n, counts), Layered(s.n, counts)};
  std::vector<std::vector<bool>> assigned;
  for (const auto& m : t.remote_members) assigned.emplace_back(m.size(), false);

  Layered x(s.n, detail::node_counts(t, t.depth_count()));
  for (std::size_t i = 0; i < t.levels[0].size(); ++i) {
    const auto& nd = t.levels[0][i];
    x(0, i) = t.x0.points[static_cast<std::size_t>(nd.x0_branch)];
    const auto st = estimator_init(s, x(0, i), nd.gamma == 1);
    out.xhat(0, i) = st.xhat;
    out.xtilde(0, i) = st.xtilde;
  }

  for (std::size_t k = 0; k < detail::stages(t); ++k) {
    const auto& level = t.levels[k];
    for (std::size_t i = 0; i < level.size(); ++i) {
      const auto& nd = level[i];
      const EstimatorState st{out.xhat(k, i), out.xtilde(k, i), static_cast<int>(k)};
      const Vector U = policy.KLt[k] * st.xhat;
      const Vector utilde = policy.KRt[k] * st.xtilde;
      out.profile.uL(k, i) = U.head(s.m1) + utilde;
      const auto cls = static_cast<std::size_t>(nd.remote_class);
      auto ur = out.profile.uR(k, cls);
      if (!assigned[k][cls]) {
        ur = U.tail(s.m2);
        assigned[k][cls] = true;
      } else {
        const double tol = 1e-9 * std::max(1.0, ur.cwiseAbs().maxCoeff());
        if ((ur - U.tail(s.m2)).cwiseAbs().maxCoeff() > tol)
          throw MeasurabilityError("closed-loop u^R differs within remote class " +
                                   std::to_string(cls) + " at stage " + std::to_string(k));
      }
      const Vector drift = s.A * x(k, i) + s.BL * out.profile.uL(k, i) + s.BR * Vector(ur);
      for (int c = 0; c < nd.num_children; ++c) {
        const auto ci = static_cast<std::size_t>(nd.first_child + c);
        const auto& child = t.levels[k + 1][ci];
        const Vector& w = t.w.points[static_cast<std::size_t>(child.w_branch)];
        x(k + 1, ci) = drift + w;
        if (k + 1 < detail::stages(t)) {
          const auto next = estimator_step(s, st, U, utilde, w, x(k + 1, ci), child.gamma == 1);
          out.xhat(k + 1, ci) = next.xhat;
          out.xtilde(k + 1, ci) = next.xtilde;
        }
      }
    }
  }
  return out;
}

// Exact E[x̂_{k|k} x̃_kᵀ] on the tree, k = 0..N.
inline std::vector<Matrix> tree_cross_moments(const ScenarioTree& t,
                                              const ClosedLoopOnTree& cl) {
  std::vector<Matrix> out;
  for (std::size_t k = 0; k < cl.xhat.depths(); ++k) {
    Matrix m = Matrix::Zero(cl.xhat.dim(), cl.xhat.dim());
    for (std::size_t i = 0; i < t.levels[k].size(); ++i)
      m += t.levels[k][i].prob * (cl.xhat(k, i) * cl.xtilde(k, i).transpose());
    out.push_back(std::move(m));
  }
  return out;
}

// States as nested vectors, for observation_partition.
inline std::vector<std::vector<Vector>> nested(const Layered& x) {
  std::vector<std::vector<Vector>> out(x.depths());
  for (std::size_t d = 0; d < x.depths(); ++d)
    for (std::size_t i = 0; i < x.count(d); ++i) out[d].push_back(x(d, i));
  return out;
}

}  // namespace lrsng
