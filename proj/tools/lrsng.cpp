#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "lrsng/errors.hpp"
#include "lrsng/evaluate.hpp"
#include "lrsng/io.hpp"
#include "lrsng/model.hpp"
#include "lrsng/riccati.hpp"
#include "lrsng/verify.hpp"

namespace fs = std::filesystem;
using namespace lrsng;

namespace {

constexpr double kConvergenceTol = 1e-6;
constexpr int kRequiredConvergence = 35;

struct RunConfig {
  std::string command;
  std::string spec_path;
  std::string out_dir = ".";
  std::uint64_t seed = 0;
  std::uint64_t trajectories = 100000;
  double fd_step = 1e-4;
  double fd_tol = 1e-5;
  std::uint64_t deviations = 100;
  std::optional<double> magnitude;
  std::optional<int> tree_horizon;
  long long node_cap = 100000;
  unsigned workers = 0;
  double pd_tol = 1e-12;
  double psd_tol = -1e-10;
  std::string remote_gain = "best_response";
};

GameSpec load(const RunConfig& cfg) {
  if (cfg.spec_path.empty()) throw ParseError(cfg.command + " needs --spec");
  return io::load_spec(cfg.spec_path, {cfg.pd_tol, cfg.psd_tol});
}

NashOptions nash_options(const RunConfig& cfg) {
  NashOptions n;
  n.fd_step = cfg.fd_step;
  n.fd_tol = cfg.fd_tol;
  n.deviations = cfg.deviations;
  if (cfg.magnitude) n.magnitudes = {*cfg.magnitude};
  else n.magnitudes = {1e-2, 1e-1, 1.0};
  n.seed = cfg.seed;
  return n;
}

ClosedLoopOptions closed_loop_options(const RunConfig& cfg) {
  ClosedLoopOptions o;
  o.form = parse_remote_gain_form(cfg.remote_gain);
  o.seed = cfg.seed;
  o.trajectories = cfg.trajectories;
  o.nash = nash_options(cfg);
  o.workers = cfg.workers;
  o.pd_pivot = cfg.pd_tol;
  return o;
}

void emit_report(const RunConfig& cfg, const std::string& name, const CostReport& costs,
                 const std::vector<CheckResult>& checks) {
  io::write_file(fs::path(cfg.out_dir) / name, io::report_json(costs, checks));
  for (const auto& c : checks)
    std::cout << (c.pass ? "PASS " : "FAIL ") << c.name << ": " << c.detail << "\n";
}

// Writes gains.csv and riccati.json; returns the analytic costs.
CostPair write_solution(const RunConfig& cfg, const GameSpec& s, const RiccatiSolution& sol) {
  const auto costs = analytic_costs(s, sol);
  io::write_file(fs::path(cfg.out_dir) / "gains.csv", io::gains_csv(sol));
  io::write_file(fs::path(cfg.out_dir) / "riccati.json",
                 io::riccati_json(sol, costs, kConvergenceTol));
  std::cout << "k* = " << gain_convergence(sol, kConvergenceTol) << " at tol "
            << kConvergenceTol << "\n";
  return costs;
}

int cmd_solve(const RunConfig& cfg) {
  const auto s = load(cfg);
  const auto sol = solve(s, parse_remote_gain_form(cfg.remote_gain), {cfg.pd_tol, cfg.psd_tol});
  const auto costs = write_solution(cfg, s, sol);
  const std::vector<CheckResult> checks{feasibility_check(sol, cfg.pd_tol)};
  emit_report(cfg, "report.json", {costs.jl, costs.jr, 0.0, 0.0, 0, cfg.seed}, checks);
  return all_pass(checks) ? 0 : 1;
}

int cmd_simulate(const RunConfig& cfg) {
  const auto s = load(cfg);
  const auto sol = solve(s, parse_remote_gain_form(cfg.remote_gain), {cfg.pd_tol, cfg.psd_tol});
  const auto rep = monte_carlo(s, PolicySequence::from_solution(sol), cfg.trajectories,
                               cfg.seed, cfg.workers);
  emit_report(cfg, "report.json", rep, {});
  return 0;
}

int cmd_evaluate(const RunConfig& cfg) {
  const auto s = load(cfg);
  const auto sol = solve(s, parse_remote_gain_form(cfg.remote_gain), {cfg.pd_tol, cfg.psd_tol});
  emit_report(cfg, "report.json", exact_report(s, PolicySequence::from_solution(sol), cfg.seed),
              {});
  return 0;
}

int cmd_verify_closed_loop(const RunConfig& cfg) {
  const auto s = load(cfg);
  auto res = closed_loop_suite(s, closed_loop_options(cfg));
  emit_report(cfg, "report.json", res.costs, res.checks);
  return res.pass() ? 0 : 1;
}

int cmd_verify_open_loop(const RunConfig& cfg) {
  const GameSpec s = cfg.spec_path.empty() ? scalar_tree_spec() : load(cfg);
  OpenLoopOptions o;
  o.tree_horizon = cfg.tree_horizon;
  o.node_cap = cfg.node_cap;
  o.seed = cfg.seed;
  o.perturbations = cfg.deviations;
  if (cfg.magnitude) o.max_epsilon = *cfg.magnitude;
  o.form = parse_remote_gain_form(cfg.remote_gain);
  o.pd_pivot = cfg.pd_tol;
  const auto res = open_loop_suite(s, o);
  emit_report(cfg, "report.json", res.costs, res.checks);
  return res.pass() ? 0 : 1;
}

int cmd_example_sec5(const RunConfig& cfg) {
  const GameSpec s = cfg.spec_path.empty() ? reference_example() : load(cfg);
  const auto form = parse_remote_gain_form(cfg.remote_gain);
  const auto sol = solve(s, form, {cfg.pd_tol, cfg.psd_tol});
  write_solution(cfg, s, sol);
  auto res = closed_loop_suite(s, closed_loop_options(cfg));
  res.checks.insert(res.checks.begin() + 1,
                    convergence_check(sol, kConvergenceTol, kRequiredConvergence));
  emit_report(cfg, "report.json", res.costs, res.checks);
  return res.pass() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Local/remote stochastic Nash game toolkit"};
  app.require_subcommand(1);
  RunConfig cfg;

  const auto add_common = [&cfg](CLI::App* sub) {
    sub->add_option("--spec", cfg.spec_path, "Game config (JSON)");
    sub->add_option("--out", cfg.out_dir, "Output directory")->capture_default_str();
    sub->add_option("--seed", cfg.seed, "Random seed")
        ->envname("LRSNG_SEED")
        ->capture_default_str();
    sub->add_option("--trajectories", cfg.trajectories, "Monte Carlo trajectories")
        ->check(CLI::Range(std::uint64_t{2}, std::uint64_t{1} << 40))
        ->capture_default_str();
    sub->add_option("--fd-step", cfg.fd_step, "Central-difference step")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    sub->add_option("--fd-tol", cfg.fd_tol, "Gradient tolerance")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    sub->add_option("--deviations", cfg.deviations, "Random deviations per player")
        ->capture_default_str();
    sub->add_option("--magnitude", cfg.magnitude,
                    "Deviation magnitude (default: 0.01, 0.1 and 1)")
        ->check(CLI::PositiveNumber);
    sub->add_option("--tree-horizon", cfg.tree_horizon, "Scenario tree horizon override")
        ->check(CLI::NonNegativeNumber);
    sub->add_option("--node-cap", cfg.node_cap, "Scenario tree node cap")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    sub->add_option("--workers", cfg.workers, "Monte Carlo threads (0 = all cores)")
        ->capture_default_str();
    sub->add_option("--pd-tol", cfg.pd_tol, "Positive-definite pivot tolerance")
        ->capture_default_str();
    sub->add_option("--psd-tol", cfg.psd_tol, "Positive-semidefinite pivot tolerance")
        ->capture_default_str();
    sub->add_option("--remote-gain", cfg.remote_gain, "best_response or pr_only")
        ->check(CLI::IsMember({"best_response", "pr_only"}))
        ->capture_default_str();
  };

  const std::pair<const char*, const char*> commands[] = {
      {"solve", "Solve the coupled Riccati recursion; write gains and costs"},
      {"simulate", "Monte Carlo costs of the equilibrium"},
      {"evaluate", "Exact second-moment costs of the equilibrium"},
      {"verify-closed-loop", "Run the closed-loop invariant suite"},
      {"verify-open-loop", "Solve and check the open-loop game on a scenario tree"},
      {"example-sec5", "Reproduce the two-dimensional example end to end"}};
  for (const auto& [name, help] : commands) add_common(app.add_subcommand(name, help));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }
  cfg.command = app.get_subcommands().front()->get_name();

  try {
    if (cfg.command == "solve") return cmd_solve(cfg);
    if (cfg.command == "simulate") return cmd_simulate(cfg);
    if (cfg.command == "evaluate") return cmd_evaluate(cfg);
    if (cfg.command == "verify-closed-loop") return cmd_verify_closed_loop(cfg);
    if (cfg.command == "verify-open-loop") return cmd_verify_open_loop(cfg);
    return cmd_example_sec5(cfg);
  } catch (const Error& e) {
    std::cerr << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
