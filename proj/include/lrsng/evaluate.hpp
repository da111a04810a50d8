#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "lrsng/errors.hpp"
#include "lrsng/estimator.hpp"
#include "lrsng/linalg.hpp"
#include "lrsng/model.hpp"
#include "lrsng/random.hpp"
#include "lrsng/report.hpp"
#include "lrsng/riccati.hpp"

namespace lrsng {

// Linear feedback pair in the estimator-based class:
//   u^L_k = [I 0]·KLt_k·x̂_{k|k} + KRt_k·x̃_k,   u^R_k = [0 I]·KLt_k·x̂_{k|k}.
struct PolicySequence {
  std::vector<Matrix> KLt;  // (m1+m2)×n, k = 0..N
  std::vector<Matrix> KRt;  // m1×n, k = 0..N

  static PolicySequence from_solution(const RiccatiSolution& sol) {
    return {sol.KL, sol.KR};
  }

  static PolicySequence zero(const GameSpec& s) {
    const auto len = static_cast<std::size_t>(s.N) + 1;
    return {std::vector<Matrix>(len, Matrix::Zero(s.m1 + s.m2, s.n)),
            std::vector<Matrix>(len, Matrix::Zero(s.m1, s.n))};
  }
};

inline void require_policy(const GameSpec& s, const PolicySequence& policy) {
  const auto len = static_cast<std::size_t>(s.N) + 1;
  if (policy.KLt.size() != len || policy.KRt.size() != len)
    throw StructuralError("policy length does not match N + 1 = " +
                          std::to_string(len));
  for (std::size_t k = 0; k < len; ++k) {
    if (policy.KLt[k].rows() != s.m1 + s.m2 || policy.KLt[k].cols() != s.n ||
        policy.KRt[k].rows() != s.m1 || policy.KRt[k].cols() != s.n)
      throw StructuralError("policy gain shape mismatch at stage " +
                            std::to_string(k));
    if (!policy.KLt[k].allFinite() || !policy.KRt[k].allFinite())
      throw StructuralError("policy gain not finite at stage " +
                            std::to_string(k));
  }
}

// ---------------------------------------------------------------------------
// Monte Carlo

// Realized path of one simulated trajectory. States and estimator quantities
// run k = 0..N+1, controls k = 0..N.
struct TrajectoryTrace {
  std::vector<Vector> x, xhat, xtilde;
  std::vector<Vector> uL, uR;
  std::vector<int> gamma;
};

struct TrajectorySample {
  double jl = 0.0;
  double jr = 0.0;
  TrajectoryTrace trace;
};

namespace detail {

struct SimulationContext {
  const GameSpec& spec;
  const PolicySequence& policy;
  GaussianSampler x0;
  GaussianSampler w;

  SimulationContext(const GameSpec& s, const PolicySequence& pol)
      : spec(s),
        policy(pol),
        x0(s.mu, s.Sigma_x0),
        w(Vector::Zero(s.n), s.Sigma_w) {}
};

// Draw order per trajectory: γ₀, x₀, then for k = 0..N: w_k, γ_{k+1}.
inline TrajectorySample simulate(const SimulationContext& ctx, Stream& rng,
                                 bool keep_trace) {
  const GameSpec& s = ctx.spec;
  TrajectorySample out;
  auto& tr = out.trace;

  int gamma = rng.bernoulli(s.p) ? 1 : 0;
  Vector x = ctx.x0(rng);
  EstimatorState est = estimator_init(s, x, gamma == 1);

  if (keep_trace) {
    const auto len = static_cast<std::size_t>(s.N) + 2;
    tr.x.reserve(len);
    tr.xhat.reserve(len);
    tr.xtilde.reserve(len);
    tr.gamma.reserve(len);
    tr.x.push_back(x);
    tr.xhat.push_back(est.xhat);
    tr.xtilde.push_back(est.xtilde);
    tr.gamma.push_back(gamma);
  }

  for (int k = 0; k <= s.N; ++k) {
    const auto i = static_cast<std::size_t>(k);
    const Vector U = ctx.policy.KLt[i] * est.xhat;
    const Vector utilde = ctx.policy.KRt[i] * est.xtilde;
    const Vector uL = U.head(s.m1) + utilde;
    const Vector uR = U.tail(s.m2);

    out.jl += x.dot(s.QL * x) + uL.dot(s.SL * uL) + uR.dot(s.ML * uR);
    out.jr += x.dot(s.QR * x) + uL.dot(s.SR * uL) + uR.dot(s.MR * uR);

    const Vector w = ctx.w(rng);
    Vector x_next = s.A * x + s.BL * uL + s.BR * uR + w;
    gamma = rng.bernoulli(s.p) ? 1 : 0;
    est = estimator_step(s, est, U, utilde, w, x_next, gamma == 1);
    x = std::move(x_next);

    if (keep_trace) {
      tr.uL.push_back(uL);
      tr.uR.push_back(uR);
      tr.x.push_back(x);
      tr.xhat.push_back(est.xhat);
      tr.xtilde.push_back(est.xtilde);
      tr.gamma.push_back(gamma);
    }
  }
  out.jl += x.dot(s.PL_term * x);
  out.jr += x.dot(s.PR_term * x);
  return out;
}

inline unsigned resolve_workers(unsigned workers) {
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  return workers;
}

// Runs fn(i) for i in [0, count) across workers. Each index is handled by
// exactly one worker; callers write results into slot i.
template <typename Fn>
void parallel_for(std::size_t count, unsigned workers, Fn&& fn) {
  workers = static_cast<unsigned>(
      std::min<std::size_t>(resolve_workers(workers), std::max<std::size_t>(count, 1)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < count; i += workers) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};

// Mean and standard error, summed in index order.
inline MeanSe mean_se(const std::vector<double>& values) {
  const auto n = static_cast<double>(values.size());
  double sum = 0.0;
  for (double v : values) sum += v;
  const double mean = sum / n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double var = values.size() > 1 ? ss / (n - 1.0) : 0.0;
  return {mean, std::sqrt(var / n)};
}

}  // namespace detail

// One trajectory drawn from the given stream.
inline TrajectorySample simulate_trajectory(const GameSpec& s,
                                            const PolicySequence& policy,
                                            Stream& rng, bool keep_trace = true) {
  require_shapes(s);
  require_policy(s, policy);
  const detail::SimulationContext ctx(s, policy);
  return detail::simulate(ctx, rng, keep_trace);
}

// Trajectory i uses Stream(seed, i), so the report does not depend on the
// number of workers or their schedule.
inline CostReport monte_carlo(const GameSpec& s, const PolicySequence& policy,
                              std::uint64_t trajectories, std::uint64_t seed,
                              unsigned workers = 0) {
  require_shapes(s);
  require_policy(s, policy);
  if (trajectories < 2)
    throw StructuralError("monte_carlo needs at least 2 trajectories");

  const detail::SimulationContext ctx(s, policy);
  std::vector<double> jl(trajectories), jr(trajectories);
  detail::parallel_for(trajectories, workers, [&](std::size_t i) {
    Stream rng(seed, i);
    const auto sample = detail::simulate(ctx, rng, false);
    jl[i] = sample.jl;
    jr[i] = sample.jr;
  });

  const auto l = detail::mean_se(jl);
  const auto r = detail::mean_se(jr);
  return {l.mean, r.mean, l.se, r.se, trajectories, seed};
}

// Largest |x_k - x̂_{k|k} - x̃_k| along a trace, and whether every received
// packet left an exactly zero error.
struct DecompositionCheck {
  double max_error = 0.0;
  bool reset_exact = true;
};

inline DecompositionCheck check_decomposition(const TrajectoryTrace& tr) {
  DecompositionCheck c;
  for (std::size_t k = 0; k < tr.x.size(); ++k) {
    c.max_error = std::max(c.max_error, max_abs(tr.x[k] - tr.xhat[k] - tr.xtilde[k]));
    if (tr.gamma[k] == 1 && !tr.xtilde[k].isZero(0.0)) c.reset_exact = false;
  }
  return c;
}

// Sample mean and standard error of x̂_{k|k} x̃_kᵀ per stage k = 0..N+1.
struct CrossMoments {
  std::vector<Matrix> mean;
  std::vector<Matrix> se;
};

inline CrossMoments sample_cross_moments(const GameSpec& s,
                                         const PolicySequence& policy,
                                         std::uint64_t trajectories,
                                         std::uint64_t seed,
                                         unsigned workers = 0) {
  require_shapes(s);
  require_policy(s, policy);
  if (trajectories < 2)
    throw StructuralError("sample_cross_moments needs at least 2 trajectories");
  const detail::SimulationContext ctx(s, policy);
  const auto stages = static_cast<std::size_t>(s.N) + 2;
  const auto nn = static_cast<std::size_t>(s.n * s.n);
  const std::size_t width = stages * nn;

  // Fixed-size chunks accumulated in index order, then reduced in chunk
  // order, so the sums do not depend on the worker count.
  constexpr std::uint64_t kChunk = 1024;
  const std::size_t chunks = (trajectories + kChunk - 1) / kChunk;
  std::vector<std::vector<double>> sums(chunks), squares(chunks);
  detail::parallel_for(chunks, workers, [&](std::size_t c) {
    auto& sum = sums[c];
    auto& sq = squares[c];
    sum.assign(width, 0.0);
    sq.assign(width, 0.0);
    const std::uint64_t end = std::min<std::uint64_t>(trajectories, (c + 1) * kChunk);
    for (std::uint64_t i = c * kChunk; i < end; ++i) {
      Stream rng(seed, i);
      const auto sample = detail::simulate(ctx, rng, true);
      for (std::size_t k = 0; k < stages; ++k) {
        const Matrix prod = sample.trace.xhat[k] * sample.trace.xtilde[k].transpose();
        for (std::size_t e = 0; e < nn; ++e) {
          const double v = prod(static_cast<Eigen::Index>(e));
          sum[k * nn + e] += v;
          sq[k * nn + e] += v * v;
        }
      }
    }
  });

  std::vector<double> sum(width, 0.0), sq(width, 0.0);
  for (std::size_t c = 0; c < chunks; ++c)
    for (std::size_t j = 0; j < width; ++j) {
      sum[j] += sums[c][j];
      sq[j] += squares[c][j];
    }

  const auto n = static_cast<double>(trajectories);
  CrossMoments cm;
  for (std::size_t k = 0; k < stages; ++k) {
    Matrix mean(s.n, s.n), se(s.n, s.n);
    for (std::size_t e = 0; e < nn; ++e) {
      const double m = sum[k * nn + e] / n;
      const double var = std::max(0.0, (sq[k * nn + e] - n * m * m) / (n - 1.0));
      mean(static_cast<Eigen::Index>(e)) = m;
      se(static_cast<Eigen::Index>(e)) = std::sqrt(var / n);
    }
    cm.mean.push_back(std::move(mean));
    cm.se.push_back(std::move(se));
  }
  return cm;
}

// ---------------------------------------------------------------------------
// Exact second-moment evaluation

// E[x̂ x̂ᵀ] and E[x̃ x̃ᵀ] at one stage. The cross moment E[x̂ x̃ᵀ] vanishes for
// every policy in the class, so it is not carried.
struct MomentState {
  Matrix Mhat;
  Matrix Mtilde;
};

struct MomentEvaluation {
  double jl = 0.0;
  double jr = 0.0;
  std::vector<MomentState> moments;  // k = 0..N+1
};

inline MomentEvaluation propagate_moments(const GameSpec& s,
                                          const PolicySequence& policy) {
  require_shapes(s);
  require_policy(s, policy);
  const auto c = composites(s);

  MomentEvaluation ev;
  ev.moments.reserve(static_cast<std::size_t>(s.N) + 2);
  Matrix Mhat = initial_estimate_moment(s);
  Matrix Mtilde = initial_error_moment(s);

  for (int k = 0; k <= s.N; ++k) {
    const auto i = static_cast<std::size_t>(k);
    const Matrix& KL = policy.KLt[i];
    const Matrix& KR = policy.KRt[i];
    ev.moments.push_back({Mhat, Mtilde});

    ev.jl += ((s.QL + KL.transpose() * c.LambdaL * KL) * Mhat).trace() +
             ((s.QL + KR.transpose() * s.SL * KR) * Mtilde).trace();
    ev.jr += ((s.QR + KL.transpose() * c.LambdaR * KL) * Mhat).trace() +
             ((s.QR + KR.transpose() * s.SR * KR) * Mtilde).trace();

    const Matrix FL = s.A + c.B_cal * KL;
    const Matrix FR = s.A + s.BL * KR;
    const Matrix innovation = FR * Mtilde * FR.transpose() + s.Sigma_w;
    Mhat = symmetrized(FL * Mhat * FL.transpose() + s.p * innovation);
    Mtilde = symmetrized((1.0 - s.p) * innovation);
  }
  ev.moments.push_back({Mhat, Mtilde});
  const Matrix terminal = Mhat + Mtilde;
  ev.jl += (s.PL_term * terminal).trace();
  ev.jr += (s.PR_term * terminal).trace();
  return ev;
}

inline CostReport exact_report(const GameSpec& s, const PolicySequence& policy,
                               std::uint64_t seed = 0) {
  const auto ev = propagate_moments(s, policy);
  return {ev.jl, ev.jr, 0.0, 0.0, 0, seed};
}

// ---------------------------------------------------------------------------
// Completing-square identities

struct IdentityResidual {
  double lhs = 0.0;  // cost difference
  double rhs = 0.0;  // quadratic penalty on the gain deviation

  double relative() const {
    const double scale = std::max(std::abs(lhs), std::abs(rhs));
    return scale == 0.0 ? 0.0 : std::abs(lhs - rhs) / scale;
  }
};

// J^L(policy) - J^L(K^L, policy's K̃^R) against
// Σ_k tr((K̃^L_k - K^L_k)ᵀ GL_k (K̃^L_k - K^L_k) M̂_k), M̂ under the policy.
inline IdentityResidual local_completing_square(const GameSpec& s,
                                                const RiccatiSolution& sol,
                                                const PolicySequence& policy) {
  const auto ev = propagate_moments(s, policy);
  const auto ref = propagate_moments(s, PolicySequence{sol.KL, policy.KRt});
  IdentityResidual r;
  r.lhs = ev.jl - ref.jl;
  for (std::size_t k = 0; k < sol.KL.size(); ++k) {
    const Matrix d = policy.KLt[k] - sol.KL[k];
    r.rhs += (d.transpose() * sol.GL[k] * d * ev.moments[k].Mhat).trace();
  }
  return r;
}

// J^R(K^L, K̃^R) - J^R(K^L, K^R) against
// Σ_k tr((K̃^R_k - K^R_k)ᵀ GR_k (K̃^R_k - K^R_k) M̃_k). Only the policy's K̃^R
// is used; the local gains stay at equilibrium.
inline IdentityResidual remote_completing_square(const GameSpec& s,
                                                 const RiccatiSolution& sol,
                                                 const PolicySequence& policy) {
  const PolicySequence deviated{sol.KL, policy.KRt};
  const auto ev = propagate_moments(s, deviated);
  const auto ref = propagate_moments(s, PolicySequence::from_solution(sol));
  IdentityResidual r;
  r.lhs = ev.jr - ref.jr;
  for (std::size_t k = 0; k < sol.KR.size(); ++k) {
    const Matrix d = policy.KRt[k] - sol.KR[k];
    r.rhs += (d.transpose() * sol.GR[k] * d * ev.moments[k].Mtilde).trace();
  }
  return r;
}

// ---------------------------------------------------------------------------
// Nash certification

struct NashOptions {
  double fd_step = 1e-4;
  double fd_tol = 1e-5;
  std::uint64_t deviations = 100;
  std::vector<double> magnitudes{0.1};
  std::uint64_t seed = 0;
  double improvement_tol = 1e-9;
};

struct NashReport {
  double max_grad_local = 0.0;   // max |∂J^L/∂K^L entry|
  double max_grad_remote = 0.0;  // max |∂J^R/∂K^R entry|
  std::string worst_local_entry;
  std::string worst_remote_entry;
  // Largest drop J(equilibrium) - J(deviated) seen by the deviating player;
  // negative when every deviation costs more.
  double worst_improvement_local = -INFINITY;
  double worst_improvement_remote = -INFINITY;
  std::vector<CheckResult> checks;

  bool pass() const { return all_pass(checks); }
};

namespace detail {

inline std::string entry_label(int k, Eigen::Index r, Eigen::Index c) {
  return "k=" + std::to_string(k) + " (" + std::to_string(r) + "," +
         std::to_string(c) + ")";
}

inline std::string format_double(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

// Random gain sequence with entries uniform on [-magnitude, magnitude].
inline std::vector<Matrix> random_gain_offsets(const std::vector<Matrix>& like,
                                               double magnitude, Stream& rng) {
  std::vector<Matrix> out;
  out.reserve(like.size());
  for (const auto& g : like) {
    Matrix d(g.rows(), g.cols());
    for (Eigen::Index e = 0; e < d.size(); ++e) d(e) = rng.uniform(-magnitude, magnitude);
    out.push_back(std::move(d));
  }
  return out;
}

}  // namespace detail

// Checks that neither player gains from a unilateral change of its own gain
// sequence, using the exact moment evaluator. A local deviation moves both
// û^L and u^R (they share K̃^L); a remote-error deviation moves only the
// x̃-feedback of u^L.
inline NashReport nash_check(const GameSpec& s, const PolicySequence& candidate,
                             const NashOptions& opt = {}) {
  require_policy(s, candidate);
  NashReport rep;
  const double h = opt.fd_step;
  const auto base = propagate_moments(s, candidate);

  PolicySequence probe = candidate;
  for (std::size_t k = 0; k < candidate.KLt.size(); ++k) {
    for (Eigen::Index e = 0; e < candidate.KLt[k].size(); ++e) {
      const double v = candidate.KLt[k](e);
      probe.KLt[k](e) = v + h;
      const double up = propagate_moments(s, probe).jl;
      probe.KLt[k](e) = v - h;
      const double down = propagate_moments(s, probe).jl;
      probe.KLt[k](e) = v;
      const double g = std::abs(up - down) / (2.0 * h);
      if (g > rep.max_grad_local) {
        rep.max_grad_local = g;
        const auto rows = candidate.KLt[k].rows();
        rep.worst_local_entry = detail::entry_label(static_cast<int>(k), e % rows, e / rows);
      }
    }
    for (Eigen::Index e = 0; e < candidate.KRt[k].size(); ++e) {
      const double v = candidate.KRt[k](e);
      probe.KRt[k](e) = v + h;
      const double up = propagate_moments(s, probe).jr;
      probe.KRt[k](e) = v - h;
      const double down = propagate_moments(s, probe).jr;
      probe.KRt[k](e) = v;
      const double g = std::abs(up - down) / (2.0 * h);
      if (g > rep.max_grad_remote) {
        rep.max_grad_remote = g;
        const auto rows = candidate.KRt[k].rows();
        rep.worst_remote_entry = detail::entry_label(static_cast<int>(k), e % rows, e / rows);
      }
    }
  }

  std::uint64_t stream_index = 0;
  for (double magnitude : opt.magnitudes) {
    for (std::uint64_t d = 0; d < opt.deviations; ++d) {
      Stream rng_l(opt.seed, stream_index++);
      PolicySequence dev = candidate;
      const auto off_l = detail::random_gain_offsets(candidate.KLt, magnitude, rng_l);
      for (std::size_t k = 0; k < dev.KLt.size(); ++k) dev.KLt[k] += off_l[k];
      rep.worst_improvement_local = std::max(
          rep.worst_improvement_local, base.jl - propagate_moments(s, dev).jl);

      Stream rng_r(opt.seed, stream_index++);
      dev = candidate;
      const auto off_r = detail::random_gain_offsets(candidate.KRt, magnitude, rng_r);
      for (std::size_t k = 0; k < dev.KRt.size(); ++k) dev.KRt[k] += off_r[k];
      rep.worst_improvement_remote = std::max(
          rep.worst_improvement_remote, base.jr - propagate_moments(s, dev).jr);
    }
  }

  const auto fmt = detail::format_double;
  rep.checks.push_back({"nash_gradient_local", rep.max_grad_local <= opt.fd_tol,
                        "max |dJL/dKL| = " + fmt(rep.max_grad_local) + " at " +
                            rep.worst_local_entry + ", tol " + fmt(opt.fd_tol)});
  rep.checks.push_back({"nash_gradient_remote", rep.max_grad_remote <= opt.fd_tol,
                        "max |dJR/dKR| = " + fmt(rep.max_grad_remote) + " at " +
                            rep.worst_remote_entry + ", tol " + fmt(opt.fd_tol)});
  if (opt.deviations > 0 && !opt.magnitudes.empty()) {
    rep.checks.push_back(
        {"nash_deviation_local", rep.worst_improvement_local <= opt.improvement_tol,
         "largest JL improvement over " + std::to_string(opt.deviations) +
             " deviations per magnitude: " + fmt(rep.worst_improvement_local)});
    rep.checks.push_back(
        {"nash_deviation_remote", rep.worst_improvement_remote <= opt.improvement_tol,
         "largest JR improvement over " + std::to_string(opt.deviations) +
             " deviations per magnitude: " + fmt(rep.worst_improvement_remote)});
  }
  return rep;
}

inline NashReport nash_check(const GameSpec& s, const RiccatiSolution& sol,
                             const NashOptions& opt = {}) {
  return nash_check(s, PolicySequence::from_solution(sol), opt);
}

}  // namespace lrsng
