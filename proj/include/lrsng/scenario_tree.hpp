#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lrsng/errors.hpp"
#include "lrsng/linalg.hpp"
#include "lrsng/model.hpp"

namespace lrsng {

// Finite distribution over vectors.
struct Support {
  std::vector<Vector> points;
  std::vector<double> probs;

  std::size_t size() const { return points.size(); }
};

// Product of two-point laws ±σ_j (probability ½ each) over the coordinates
// with nonzero variance, shifted by mean. Matches the mean and a diagonal
// covariance exactly. A zero covariance gives the single point mean.
inline Support two_point_support(const Vector& mean, const Matrix& cov,
                                 const std::string& name) {
  const auto n = mean.size();
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      if (i != j && cov(i, j) != 0.0)
        throw UnsupportedConfiguration(
            name + " must be diagonal for the scenario tree");

  std::vector<Eigen::Index> active;
  for (Eigen::Index j = 0; j < n; ++j)
    if (cov(j, j) > 0.0) active.push_back(j);

  Support s;
  const std::size_t count = std::size_t{1} << active.size();
  for (std::size_t mask = 0; mask < count; ++mask) {
    Vector v = mean;
    for (std::size_t b = 0; b < active.size(); ++b) {
      const auto j = active[b];
      const double sigma = std::sqrt(cov(j, j));
      v(j) += (mask >> b) & 1U ? sigma : -sigma;
    }
    s.points.push_back(std::move(v));
    s.probs.push_back(1.0 / static_cast<double>(count));
  }
  return s;
}

// A node at depth d carries the state x_d. Depth 0 branches on (x₀, γ₀);
// depths 1..N branch on (w_{d-1}, γ_d); the terminal depth N+1 branches on
// w_N only.
struct TreeNode {
  int parent = -1;
  int gamma = -1;      // γ_d, or -1 on the terminal depth
  int x0_branch = -1;  // depth 0 only
  int w_branch = -1;   // branch of w_{d-1}; -1 at depth 0
  double prob = 0.0;   // path probability
  double cond_prob = 0.0;  // probability given the parent
  int first_child = 0;
  int num_children = 0;
  int remote_class = -1;  // depths 0..N
};

struct ScenarioTree {
  int horizon = 0;  // N
  int n = 0;
  Support x0;
  Support w;
  std::vector<int> gamma_values;
  std::vector<double> gamma_probs;

  std::vector<std::vector<TreeNode>> levels;  // depth 0..N+1

  // Remote information classes per stage k = 0..N: node indices at depth k
  // and the class probability.
  std::vector<std::vector<std::vector<int>>> remote_members;
  std::vector<std::vector<double>> remote_prob;

  std::size_t depth_count() const { return levels.size(); }

  std::size_t node_count() const {
    std::size_t total = 0;
    for (const auto& l : levels) total += l.size();
    return total;
  }

  std::size_t remote_class_count(int k) const {
    return remote_members[static_cast<std::size_t>(k)].size();
  }

  const TreeNode& node(int depth, int i) const {
    return levels[static_cast<std::size_t>(depth)][static_cast<std::size_t>(i)];
  }
};

struct TreeOptions {
  std::optional<int> horizon;
  long long node_cap = 100000;
};

// Node count the tree would have, without building it.
inline long long tree_node_count(std::size_t x0_points, std::size_t w_points,
                                 std::size_t gamma_branches, int horizon) {
  long double level = static_cast<long double>(x0_points * gamma_branches);
  long double total = level;
  for (int d = 1; d <= horizon; ++d) {
    level *= static_cast<long double>(w_points * gamma_branches);
    total += level;
  }
  total += level * static_cast<long double>(w_points);
  if (total > 9.0e18L) return static_cast<long long>(9.0e18L);
  return static_cast<long long>(total);
}

namespace detail {

// Observation key of a node at depth k: the received/dropped pattern γ₀..γ_k
// followed by the primitive path (x₀ branch, w₀..w_{j-1} branches) that
// generated the last received state x_j. Everything the remote player saw is
// a function of this key, and distinct keys give distinct received signals
// for generic data.
inline std::vector<int> remote_key(const ScenarioTree& t, int depth, int index) {
  std::vector<int> gammas(static_cast<std::size_t>(depth) + 1);
  std::vector<int> path;  // w branches, newest first, then x0 branch
  int last_received = -1;
  int d = depth;
  int i = index;
  std::vector<std::pair<int, int>> chain;  // (depth, index) from depth down to 0
  while (d >= 0) {
    chain.emplace_back(d, i);
    const auto& nd = t.node(d, i);
    gammas[static_cast<std::size_t>(d)] = nd.gamma;
    if (last_received < 0 && nd.gamma == 1) last_received = d;
    i = nd.parent;
    --d;
  }
  std::vector<int> key = gammas;
  if (last_received >= 0) {
    key.push_back(-2);  // separator
    for (auto it = chain.rbegin(); it != chain.rend(); ++it) {
      const auto [dd, ii] = *it;
      if (dd > last_received) break;
      const auto& nd = t.node(dd, ii);
      key.push_back(dd == 0 ? nd.x0_branch : nd.w_branch);
    }
  }
  return key;
}

}  // namespace detail

inline ScenarioTree build_tree(const GameSpec& s, const TreeOptions& opt = {}) {
  require_shapes(s);
  ScenarioTree t;
  t.horizon = opt.horizon.value_or(s.N);
  if (t.horizon < 0) throw StructuralError("tree horizon must be nonnegative");
  t.n = s.n;
  t.x0 = two_point_support(s.mu, s.Sigma_x0, "Sigma_x0");
  t.w = two_point_support(Vector::Zero(s.n), s.Sigma_w, "Sigma_w");
  if (s.p >= 1.0) {
    t.gamma_values = {1};
    t.gamma_probs = {1.0};
  } else if (s.p <= 0.0) {
    t.gamma_values = {0};
    t.gamma_probs = {1.0};
  } else {
    t.gamma_values = {0, 1};
    t.gamma_probs = {1.0 - s.p, s.p};
  }

  const long long count = tree_node_count(t.x0.size(), t.w.size(),
                                          t.gamma_values.size(), t.horizon);
  if (count > opt.node_cap) throw TreeSizeError(count, opt.node_cap);

  const auto depths = static_cast<std::size_t>(t.horizon) + 2;
  t.levels.resize(depths);

  auto& root = t.levels[0];
  for (std::size_t b = 0; b < t.x0.size(); ++b) {
    for (std::size_t g = 0; g < t.gamma_values.size(); ++g) {
      TreeNode nd;
      nd.gamma = t.gamma_values[g];
      nd.x0_branch = static_cast<int>(b);
      nd.cond_prob = t.x0.probs[b] * t.gamma_probs[g];
      nd.prob = nd.cond_prob;
      root.push_back(nd);
    }
  }

  for (std::size_t d = 1; d < depths; ++d) {
    const bool terminal = d == depths - 1;
    auto& prev = t.levels[d - 1];
    auto& cur = t.levels[d];
    for (std::size_t i = 0; i < prev.size(); ++i) {
      prev[i].first_child = static_cast<int>(cur.size());
      for (std::size_t b = 0; b < t.w.size(); ++b) {
        const std::size_t gammas = terminal ? 1 : t.gamma_values.size();
        for (std::size_t g = 0; g < gammas; ++g) {
          TreeNode nd;
          nd.parent = static_cast<int>(i);
          nd.w_branch = static_cast<int>(b);
          nd.gamma = terminal ? -1 : t.gamma_values[g];
          nd.cond_prob = t.w.probs[b] * (terminal ? 1.0 : t.gamma_probs[g]);
          nd.prob = prev[i].prob * nd.cond_prob;
          cur.push_back(nd);
        }
      }
      prev[i].num_children = static_cast<int>(cur.size()) - prev[i].first_child;
    }
  }

  t.remote_members.resize(depths - 1);
  t.remote_prob.resize(depths - 1);
  for (std::size_t k = 0; k + 1 < depths; ++k) {
    std::map<std::vector<int>, int> ids;
    auto& level = t.levels[k];
    for (std::size_t i = 0; i < level.size(); ++i) {
      auto key = detail::remote_key(t, static_cast<int>(k), static_cast<int>(i));
      auto [it, inserted] = ids.emplace(std::move(key), static_cast<int>(ids.size()));
      if (inserted) {
        t.remote_members[k].emplace_back();
        t.remote_prob[k].push_back(0.0);
      }
      const auto c = static_cast<std::size_t>(it->second);
      level[i].remote_class = it->second;
      t.remote_members[k][c].push_back(static_cast<int>(i));
      t.remote_prob[k][c] += level[i].prob;
    }
  }
  return t;
}

// Partition of the depth-k nodes by literal equality of the received signals
// γ₀x₀, ..., γ_k x_k, with a dropped packet encoded as a distinct "nothing"
// symbol rather than the zero vector. states[d][i] is x_d at node i.
// Returns a class id per node.
inline std::vector<int> observation_partition(
    const ScenarioTree& t, int k, const std::vector<std::vector<Vector>>& states) {
  using Signal = std::vector<double>;
  std::map<std::vector<std::pair<int, Signal>>, int> ids;
  std::vector<int> out;
  const auto& level = t.levels[static_cast<std::size_t>(k)];
  out.reserve(level.size());
  for (std::size_t i = 0; i < level.size(); ++i) {
    std::vector<std::pair<int, Signal>> key(static_cast<std::size_t>(k) + 1);
    int d = k;
    int idx = static_cast<int>(i);
    while (d >= 0) {
      const auto& nd = t.node(d, idx);
      auto& slot = key[static_cast<std::size_t>(d)];
      slot.first = nd.gamma;
      if (nd.gamma == 1) {
        const Vector& x = states[static_cast<std::size_t>(d)][static_cast<std::size_t>(idx)];
        slot.second.assign(x.data(), x.data() + x.size());
      }
      idx = nd.parent;
      --d;
    }
    auto [it, inserted] = ids.emplace(std::move(key), static_cast<int>(ids.size()));
    out.push_back(it->second);
  }
  return out;
}

}  // namespace lrsng
