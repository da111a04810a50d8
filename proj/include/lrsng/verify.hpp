#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lrsng/evaluate.hpp"
#include "lrsng/openloop.hpp"
#include "lrsng/report.hpp"
#include "lrsng/riccati.hpp"
#include "lrsng/scenario_tree.hpp"

namespace lrsng {

// Check suites shared by the command-line tool. Each returns the costs to put
// in the report and the list of named checks.
struct SuiteResult {
  CostReport costs;
  std::vector<CheckResult> checks;

  bool pass() const { return all_pass(checks); }
};

namespace detail {

inline std::string fmt(double v) { return format_double(v); }

inline double relative_gap(double a, double b) {
  const double scale = std::max(std::abs(a), std::abs(b));
  return scale == 0.0 ? 0.0 : std::abs(a - b) / scale;
}

}  // namespace detail

// GL_k and GR_k positive definite at every stage.
inline CheckResult feasibility_check(const RiccatiSolution& sol, double pd_pivot = 1e-12) {
  for (std::size_t k = 0; k < sol.GL.size(); ++k) {
    if (!is_positive_definite(sol.GL[k], pd_pivot))
      return {"riccati_feasible", false, "GL not positive definite at k=" + std::to_string(k)};
    if (!is_positive_definite(sol.GR[k], pd_pivot))
      return {"riccati_feasible", false, "GR not positive definite at k=" + std::to_string(k)};
  }
  return {"riccati_feasible", true,
          "GL and GR positive definite for k=0.." + std::to_string(sol.horizon())};
}

inline CheckResult convergence_check(const RiccatiSolution& sol, double tol, int required) {
  const int k_star = gain_convergence(sol, tol);
  return {"gain_convergence", k_star >= required,
          "k* = " + std::to_string(k_star) + " at tol " + detail::fmt(tol) +
              ", required >= " + std::to_string(required)};
}

struct ClosedLoopOptions {
  RemoteGainForm form = RemoteGainForm::best_response;
  std::uint64_t seed = 0;
  std::uint64_t trajectories = 100000;
  std::uint64_t decomposition_trajectories = 1000;
  std::uint64_t identity_policies = 20;
  double identity_spread = 0.1;
  NashOptions nash{};
  unsigned workers = 0;
  double pd_pivot = 1e-12;
};

inline SuiteResult closed_loop_suite(const GameSpec& s, const ClosedLoopOptions& opt) {
  SuiteResult out;
  auto& checks = out.checks;
  const auto sol = solve(s, opt.form, {opt.pd_pivot, -1e-10});
  const auto policy = PolicySequence::from_solution(sol);
  checks.push_back(feasibility_check(sol, opt.pd_pivot));

  const auto analytic = analytic_costs(s, sol);
  const auto moments = propagate_moments(s, policy);
  const double rel = std::max(detail::relative_gap(analytic.jl, moments.jl),
                              detail::relative_gap(analytic.jr, moments.jr));
  checks.push_back({"analytic_vs_moments", rel <= 1e-8,
                    "analytic (" + detail::fmt(analytic.jl) + ", " + detail::fmt(analytic.jr) +
                        ") vs moments (" + detail::fmt(moments.jl) + ", " +
                        detail::fmt(moments.jr) + "), max rel " + detail::fmt(rel)});

  out.costs = monte_carlo(s, policy, opt.trajectories, opt.seed, opt.workers);
  const auto& mc = out.costs;
  const double zl = std::abs(mc.jl - analytic.jl) / mc.jl_se;
  const double zr = std::abs(mc.jr - analytic.jr) / mc.jr_se;
  checks.push_back({"monte_carlo_within_3se", zl <= 3.0 && zr <= 3.0,
                    "|MC - exact| / SE = " + detail::fmt(zl) + " (L), " + detail::fmt(zr) + " (R)"});
  const double rl = detail::relative_gap(mc.jl, analytic.jl);
  const double rr = detail::relative_gap(mc.jr, analytic.jr);
  checks.push_back({"monte_carlo_within_2pct", rl <= 0.02 && rr <= 0.02,
                    "relative gap " + detail::fmt(rl) + " (L), " + detail::fmt(rr) + " (R)"});
  checks.push_back({"costs_nonnegative",
                    analytic.jl >= 0.0 && analytic.jr >= 0.0 && mc.jl >= 0.0 && mc.jr >= 0.0,
                    "analytic and sampled costs"});

  NashOptions nash = opt.nash;
  nash.seed = opt.seed;
  const auto nr = nash_check(s, policy, nash);
  checks.insert(checks.end(), nr.checks.begin(), nr.checks.end());

  double worst_local = 0.0, worst_remote = 0.0;
  for (std::uint64_t i = 0; i < opt.identity_policies; ++i) {
    Stream rng(opt.seed ^ 0x9e3779b97f4a7c15ULL, i);
    PolicySequence dev = policy;
    const auto dl = detail::random_gain_offsets(policy.KLt, opt.identity_spread, rng);
    const auto dr = detail::random_gain_offsets(policy.KRt, opt.identity_spread, rng);
    for (std::size_t k = 0; k < dev.KLt.size(); ++k) {
      dev.KLt[k] += dl[k];
      dev.KRt[k] += dr[k];
    }
    worst_local = std::max(worst_local, local_completing_square(s, sol, dev).relative());
    worst_remote = std::max(worst_remote, remote_completing_square(s, sol, dev).relative());
  }
  checks.push_back({"completing_square_local", worst_local <= 1e-8,
                    "max rel residual " + detail::fmt(worst_local) + " over " +
                        std::to_string(opt.identity_policies) + " policies"});
  checks.push_back({"completing_square_remote", worst_remote <= 1e-8,
                    "max rel residual " + detail::fmt(worst_remote) + " over " +
                        std::to_string(opt.identity_policies) + " policies"});

  double worst_decomp = 0.0;
  bool resets = true;
  for (std::uint64_t i = 0; i < opt.decomposition_trajectories; ++i) {
    Stream rng(opt.seed, i);
    const auto sample = simulate_trajectory(s, policy, rng, true);
    const auto dc = check_decomposition(sample.trace);
    worst_decomp = std::max(worst_decomp, dc.max_error);
    resets = resets && dc.reset_exact;
  }
  checks.push_back({"estimator_decomposition", worst_decomp <= 1e-12,
                    "max |x - xhat - xtilde| = " + detail::fmt(worst_decomp) + " over " +
                        std::to_string(opt.decomposition_trajectories) + " trajectories"});
  checks.push_back({"estimator_reset", resets, "received packets leave xtilde exactly zero"});

  const auto cm = sample_cross_moments(s, policy, opt.trajectories, opt.seed, opt.workers);
  double worst_z = 0.0;
  for (std::size_t k = 0; k < cm.mean.size(); ++k)
    for (Eigen::Index e = 0; e < cm.mean[k].size(); ++e) {
      const double m = std::abs(cm.mean[k](e));
      const double se = cm.se[k](e);
      const double z = se > 0.0 ? m / se : (m == 0.0 ? 0.0 : INFINITY);
      worst_z = std::max(worst_z, z);
    }
  checks.push_back({"cross_moment_zero", worst_z <= 4.0,
                    "max |E[xhat xtilde']| / SE = " + detail::fmt(worst_z)});
  return out;
}

struct OpenLoopOptions {
  std::optional<int> tree_horizon;
  long long node_cap = 100000;
  std::uint64_t seed = 0;
  std::uint64_t perturbations = 100;
  double max_epsilon = 1.0;
  std::uint64_t identity_pairs = 50;
  RemoteGainForm form = RemoteGainForm::best_response;
  double pd_pivot = 1e-12;
};

// A small scalar instance for tree mode: n = m1 = m2 = 1, N = 2.
inline GameSpec scalar_tree_spec() {
  GameSpec s;
  s.n = s.m1 = s.m2 = 1;
  s.N = 2;
  s.p = 0.5;
  const auto one = [](double v) { return Matrix::Constant(1, 1, v); };
  s.A = one(1.2);
  s.BL = one(0.3);
  s.BR = one(0.1);
  s.QL = s.QR = s.SL = s.SR = s.ML = s.MR = one(1.0);
  s.PL_term = s.PR_term = one(1.0);
  s.mu = Vector::Zero(1);
  s.Sigma_x0 = one(1.0);
  s.Sigma_w = one(1.0);
  return s;
}

inline SuiteResult open_loop_suite(const GameSpec& spec, const OpenLoopOptions& opt) {
  SuiteResult out;
  auto& checks = out.checks;
  const int horizon = opt.tree_horizon.value_or(spec.N);
  const GameSpec s = with_horizon(spec, horizon);
  const auto tree = build_tree(s, {horizon, opt.node_cap});

  const auto sol = solve_open_loop(tree, s);
  const auto& u = sol.profile;
  const auto cost = tree_cost(tree, s, u);
  out.costs = {cost.jl, cost.jr, 0.0, 0.0, 0, opt.seed};

  checks.push_back({"open_loop_residual", sol.max_residual <= kOpenLoopResidualTolerance,
                    "max stationarity residual " + detail::fmt(sol.max_residual) + " over " +
                        std::to_string(sol.unknowns) + " unknowns, " +
                        std::to_string(tree.node_count()) + " nodes"});

  const auto f = costates(tree, s, u);
  const double tower = std::max(tower_property_gap(tree, f.thetaL), tower_property_gap(tree, f.thetaR));
  checks.push_back({"tower_property", tower <= 1e-12, "max gap " + detail::fmt(tower)});
  checks.push_back({"remote_refines_local", remote_refines_local(tree),
                    "every remote class is a union of nodes"});

  for (Player who : {Player::local, Player::remote}) {
    const bool local = who == Player::local;
    const char* tag = local ? "local" : "remote";
    const double eps_grid[] = {1e-3, 1e-1, 0.37, 1.0};
    double worst = 0.0;
    double min_second = INFINITY;
    for (std::uint64_t i = 0; i < opt.identity_pairs; ++i) {
      Stream rng(opt.seed ^ 0x5bd1e995ULL, (local ? 0 : 1) + 2 * i);
      const auto dir = random_direction(tree, s, who, rng);
      const double eps = eps_grid[i % 4];
      worst = std::max(worst, variational_identity_check(tree, s, u, dir, eps));
      min_second = std::min(min_second, second_variation(tree, s, dir));
    }
    checks.push_back({std::string("variational_identity_") + tag, worst <= 1e-10,
                      "max |LHS - RHS| = " + detail::fmt(worst) + " over " +
                          std::to_string(opt.identity_pairs) + " (direction, eps) pairs"});
    checks.push_back({std::string("convexity_") + tag, min_second >= 0.0,
                      "min second variation " + detail::fmt(min_second)});
    const double gain = worst_unilateral_gain(tree, s, u, who, opt.perturbations,
                                              opt.max_epsilon, opt.seed);
    checks.push_back({std::string("open_loop_perturbation_") + tag, gain >= -1e-10,
                      "min J(deviation) - J(equilibrium) = " + detail::fmt(gain) + " over " +
                          std::to_string(opt.perturbations) + " adapted perturbations"});
  }

  // Closed-loop equilibrium of the same instance mapped onto the tree.
  const auto rsol = solve(s, opt.form, {opt.pd_pivot, -1e-10});
  const auto policy = PolicySequence::from_solution(rsol);
  const auto cl = closed_loop_profile(tree, s, policy);
  const auto cl_cost = tree_cost(tree, s, cl.profile);
  const auto moments = propagate_moments(s, policy);
  const double cost_gap = std::max(std::abs(cl_cost.jl - moments.jl),
                                   std::abs(cl_cost.jr - moments.jr));
  checks.push_back({"closed_loop_tree_cost", cost_gap <= 1e-9,
                    "|tree_cost - propagate_moments| = " + detail::fmt(cost_gap)});
  double cross = 0.0;
  for (const auto& m : tree_cross_moments(tree, cl)) cross = std::max(cross, max_abs(m));
  checks.push_back({"closed_loop_cross_moment", cross <= 1e-12,
                    "max |E[xhat xtilde']| on tree = " + detail::fmt(cross)});
  checks.push_back({"open_vs_closed_loop_gap", true,
                    "reported only: open-loop (" + detail::fmt(cost.jl) + ", " +
                        detail::fmt(cost.jr) + "), closed-loop (" + detail::fmt(cl_cost.jl) +
                        ", " + detail::fmt(cl_cost.jr) + "), difference (" +
                        detail::fmt(cost.jl - cl_cost.jl) + ", " +
                        detail::fmt(cost.jr - cl_cost.jr) + ")"});
  return out;
}

}  // namespace lrsng
