// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <chrono>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "lrsng/evaluate.hpp"
#include "lrsng/io.hpp"
#include "lrsng/openloop.hpp"
#include "lrsng/riccati.hpp"
#include "lrsng/verify.hpp"

using namespace lrsng;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

double rel(double a, double b) {
  const double s = std::max(std::abs(a), std::abs(b));
  return s == 0.0 ? 0.0 : std::abs(a - b) / s;
}

int failures = 0;

void criterion(int id, const std::string& title, double budget_s,
               const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o{false, ""};
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::string detail = o.detail + "; " + fmt(secs) + " s";
  if (budget_s > 0.0) {
    detail += " (budget " + fmt(budget_s) + " s)";
    if (secs > budget_s) o.pass = false;
  }
  if (!o.pass) ++failures;
  std::printf("%s %2d %s: %s\n", o.pass ? "PASS" : "FAIL", id, title.c_str(), detail.c_str());
  std::fflush(stdout);
}

GameSpec random_n2_spec() {
  Stream rng(2024, 0);
  const auto rm = [&](int r, int c, double scale) {
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = scale * rng.uniform(-1.0, 1.0);
    return m;
  };
  const auto spd = [&](int n, double floor) {
    const Matrix g = rm(n, n, 1.0);
    return symmetrized(g * g.transpose() + floor * Matrix::Identity(n, n));
  };
  GameSpec s;
  s.n = 2;
  s.m1 = 2;
  s.m2 = 1;
  s.N = 15;
  s.p = 0.45;
  s.A = rm(2, 2, 0.9);
  s.BL = rm(2, 2, 1.0);
  s.BR = rm(2, 1, 1.0);
  s.QL = spd(2, 0.1);
  s.QR = spd(2, 0.1);
  s.SL = spd(2, 0.5);
  s.SR = spd(2, 0.5);
  s.ML = spd(1, 0.5);
  s.MR = spd(1, 0.5);
  s.PL_term = spd(2, 0.1);
  s.PR_term = spd(2, 0.1);
  s.mu = rm(2, 1, 1.0);
  s.Sigma_x0 = spd(2, 0.2);
  s.Sigma_w = spd(2, 0.1);
  return s;
}

}  // namespace

int main() {
  const GameSpec sec5 = reference_example();
  constexpr std::uint64_t kSeed = 42;
  constexpr std::uint64_t kTrajectories = 100000;

  criterion(1, "Riccati feasibility on the two-dimensional example", 1.0, [&] {
    const auto sol = solve(sec5);
    const auto c = feasibility_check(sol);
    return Outcome{c.pass, c.detail};
  });

  criterion(2, "gain convergence k* >= 35 at tol 1e-6", 1.0, [&] {
    const auto sol = solve(sec5);
    const int k_star = gain_convergence(sol, 1e-6);
    const int k_pub = gain_convergence(solve(sec5, RemoteGainForm::pr_only), 1e-6);
    return Outcome{k_star >= 35, "k* = " + std::to_string(k_star) +
                                     " (P^R-only remote gain: " + std::to_string(k_pub) + ")"};
  });

  criterion(3, "analytic = moments (rel 1e-8); Monte Carlo within 3 SE and 2%", 30.0, [&] {
    const auto sol = solve(sec5);
    const auto policy = PolicySequence::from_solution(sol);
    const auto a = analytic_costs(sec5, sol);
    const auto m = propagate_moments(sec5, policy);
    const double r = std::max(rel(a.jl, m.jl), rel(a.jr, m.jr));
    const auto mc = monte_carlo(sec5, policy, kTrajectories, kSeed);
    const double zl = std::abs(mc.jl - a.jl) / mc.jl_se;
    const double zr = std::abs(mc.jr - a.jr) / mc.jr_se;
    const double pl = rel(mc.jl, a.jl), pr = rel(mc.jr, a.jr);
    const bool ok = r <= 1e-8 && zl <= 3.0 && zr <= 3.0 && pl <= 0.02 && pr <= 0.02;
    return Outcome{ok, "JL* = " + fmt(a.jl) + ", JR* = " + fmt(a.jr) + ", moments rel " +
                           fmt(r) + ", MC (" + fmt(mc.jl) + " +- " + fmt(mc.jl_se) + ", " +
                           fmt(mc.jr) + " +- " + fmt(mc.jr_se) + "), z = " + fmt(zl) + "/" +
                           fmt(zr) + ", rel " + fmt(pl) + "/" + fmt(pr)};
  });

  criterion(4, "Nash certification (FD gradients, 100 deviations x 3 magnitudes)", 10.0, [&] {
    NashOptions opt;
    opt.fd_step = 1e-4;
    opt.fd_tol = 1e-5;
    opt.deviations = 100;
    opt.magnitudes = {1e-2, 1e-1, 1.0};
    opt.seed = kSeed;
    const auto rep = nash_check(sec5, solve(sec5), opt);
    return Outcome{rep.pass(), "max |dJL/dKL| = " + fmt(rep.max_grad_local) +
                                   ", max |dJR/dKR| = " + fmt(rep.max_grad_remote) +
                                   ", best improvement L " + fmt(rep.worst_improvement_local) +
                                   ", R " + fmt(rep.worst_improvement_remote)};
  });

  criterion(5, "completing-square identities, 20 random policies", 5.0, [&] {
    const auto s = random_n2_spec();
    const auto sol = solve(s);
    const auto base = PolicySequence::from_solution(sol);
    double worst_l = 0.0, worst_r = 0.0;
    for (std::uint64_t i = 0; i < 20; ++i) {
      Stream rng(kSeed, 1000 + i);
      PolicySequence dev = base;
      for (auto& k : dev.KLt)
        for (Eigen::Index e = 0; e < k.size(); ++e) k(e) += rng.uniform(-0.5, 0.5);
      for (auto& k : dev.KRt)
        for (Eigen::Index e = 0; e < k.size(); ++e) k(e) += rng.uniform(-0.5, 0.5);
      worst_l = std::max(worst_l, local_completing_square(s, sol, dev).relative());
      worst_r = std::max(worst_r, remote_completing_square(s, sol, dev).relative());
    }
    return Outcome{worst_l <= 1e-8 && worst_r <= 1e-8,
                   "max rel residual local " + fmt(worst_l) + ", remote " + fmt(worst_r)};
  });

  criterion(6, "estimator decomposition over 1000 trajectories", 0.0, [&] {
    const auto policy = PolicySequence::from_solution(solve(sec5));
    double worst = 0.0;
    bool resets = true;
    std::size_t received = 0;
    for (std::uint64_t i = 0; i < 1000; ++i) {
      Stream rng(kSeed, i);
      const auto sample = simulate_trajectory(sec5, policy, rng);
      const auto dc = check_decomposition(sample.trace);
      worst = std::max(worst, dc.max_error);
      resets = resets && dc.reset_exact;
      for (int g : sample.trace.gamma) received += static_cast<std::size_t>(g);
    }
    return Outcome{worst <= 1e-12 && resets,
                   "max |x - xhat - xtilde| = " + fmt(worst) + ", " + std::to_string(received) +
                       " received packets all reset xtilde exactly: " + (resets ? "yes" : "no")};
  });

  criterion(7, "cross moment E[xhat xtilde'] vanishes (tree exact, Monte Carlo)", 0.0, [&] {
    const auto small = with_horizon(sec5, 2);
    const auto tree = build_tree(small);
    const auto cl = closed_loop_profile(tree, small, PolicySequence::from_solution(solve(small)));
    double exact = 0.0;
    for (const auto& m : tree_cross_moments(tree, cl)) exact = std::max(exact, max_abs(m));
    const auto cm =
        sample_cross_moments(sec5, PolicySequence::from_solution(solve(sec5)), kTrajectories, kSeed);
    double worst_z = 0.0;
    for (std::size_t k = 0; k < cm.mean.size(); ++k)
      for (Eigen::Index e = 0; e < cm.mean[k].size(); ++e) {
        const double m = std::abs(cm.mean[k](e));
        const double se = cm.se[k](e);
        worst_z = std::max(worst_z, se > 0.0 ? m / se : (m == 0.0 ? 0.0 : INFINITY));
      }
    return Outcome{exact <= 1e-12 && worst_z <= 4.0,
                   "tree max " + fmt(exact) + ", Monte Carlo max |mean|/SE " + fmt(worst_z)};
  });

  criterion(8, "open-loop equilibrium on n=1 and n=2, N=2 trees", 10.0, [&] {
    bool ok = true;
    std::string detail;
    GameSpec n2 = with_horizon(sec5, 2);
    for (const auto& [name, s] : {std::pair{"n=1", scalar_tree_spec()}, std::pair{"n=2", n2}}) {
      const auto tree = build_tree(s);
      const auto sol = solve_open_loop(tree, s);
      double gain = INFINITY;
      double ident = 0.0;
      for (Player who : {Player::local, Player::remote}) {
        gain = std::min(gain, worst_unilateral_gain(tree, s, sol.profile, who, 100, 1.0, kSeed));
        const double eps_grid[] = {1e-3, 1e-1, 0.37, 1.0};
        for (std::uint64_t i = 0; i < 50; ++i) {
          Stream rng(kSeed + 1, (who == Player::local ? 0 : 1) + 2 * i);
          const auto dir = random_direction(tree, s, who, rng);
          ident = std::max(ident,
                           variational_identity_check(tree, s, sol.profile, dir, eps_grid[i % 4]));
        }
      }
      ok = ok && sol.max_residual <= 1e-10 && gain >= -1e-10 && ident <= 1e-10;
      detail += std::string(detail.empty() ? "" : "; ") + name + ": " +
                std::to_string(tree.node_count()) + " nodes, residual " + fmt(sol.max_residual) +
                ", min deviation gain " + fmt(gain) + ", identity " + fmt(ident);
    }
    return Outcome{ok, detail};
  });

  criterion(9, "closed-loop tree cost = moment propagation (1e-9)", 0.0, [&] {
    double worst = 0.0;
    for (const auto& s : {with_horizon(sec5, 2), scalar_tree_spec()}) {
      const auto tree = build_tree(s);
      const auto policy = PolicySequence::from_solution(solve(s));
      const auto j = tree_cost(tree, s, closed_loop_profile(tree, s, policy).profile);
      const auto m = propagate_moments(s, policy);
      worst = std::max({worst, std::abs(j.jl - m.jl), std::abs(j.jr - m.jr)});
    }
    return Outcome{worst <= 1e-9, "max |tree - moments| = " + fmt(worst)};
  });

  criterion(10, "byte-identical reports for 1 and 4 workers", 0.0, [&] {
    const auto policy = PolicySequence::from_solution(solve(sec5));
    const auto one = io::report_json(monte_carlo(sec5, policy, 20000, kSeed, 1), {});
    const auto four = io::report_json(monte_carlo(sec5, policy, 20000, kSeed, 4), {});
    const auto again = io::report_json(monte_carlo(sec5, policy, 20000, kSeed, 1), {});
    return Outcome{one == four && one == again,
                   std::to_string(one.size()) + "-byte reports " +
                       (one == four && one == again ? "identical" : "differ")};
  });

  {
    // Reference only: the same certification with the P^R-only remote gain.
    NashOptions opt;
    opt.deviations = 0;
    const auto rep = nash_check(sec5, solve(sec5, RemoteGainForm::pr_only), opt);
    std::printf("INFO P^R-only remote gain: max |dJR/dKR| = %s (%s)\n",
                fmt(rep.max_grad_remote).c_str(), rep.pass() ? "passes" : "fails criterion 4");
  }

  std::printf("%d criterion(s) failed\n", failures);
  return failures == 0 ? 0 : 1;
}
