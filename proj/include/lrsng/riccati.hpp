#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "lrsng/errors.hpp"
#include "lrsng/linalg.hpp"
#include "lrsng/model.hpp"

namespace lrsng {

// How the remote-error gain K^R_k is formed.
//
// best_response: K^R = -(S^R + BLᵀ W BL)⁻¹ BLᵀ W A with
//   W = p·Ω^R_{k+1} + (1-p)·P^R_{k+1}, the continuation value the estimation
//   error actually sees (it is received with probability p and then valued
//   through x̂). This is the gain that makes K^R a best response.
// pr_only: W replaced by P^R_{k+1}, dropping the received-branch value
//   Ω^R. Agrees with best_response when p = 0 and at k = N.
enum class RemoteGainForm { best_response, pr_only };

inline std::string_view to_string(RemoteGainForm form) {
  return form == RemoteGainForm::best_response ? "best_response" : "pr_only";
}

inline RemoteGainForm parse_remote_gain_form(std::string_view s) {
  if (s == "best_response") return RemoteGainForm::best_response;
  if (s == "pr_only") return RemoteGainForm::pr_only;
  throw ParseError("unknown remote gain form '" + std::string(s) +
                   "' (expected best_response or pr_only)");
}

struct RiccatiStep {
  Matrix PL, PR, OmegaL, OmegaR;
  Matrix KL;  // (m1+m2)×n
  Matrix KR;  // m1×n
  Matrix GL;  // Λ^L + 𝔅ᵀ P^L_{k+1} 𝔅
  Matrix GR;  // S^R + BLᵀ W BL
};

struct RiccatiSolution {
  RemoteGainForm form = RemoteGainForm::best_response;
  // Indexed k = 0..N+1.
  std::vector<Matrix> PL, PR, OmegaL, OmegaR;
  // Indexed k = 0..N.
  std::vector<Matrix> KL, KR, GL, GR;

  int horizon() const { return static_cast<int>(KL.size()) - 1; }
};

inline constexpr double kRiccatiAsymmetryLimit = 1e-9;

namespace detail {

inline Matrix checked_symmetric(const Matrix& x, const char* name, int stage) {
  if (asymmetry(x) > kRiccatiAsymmetryLimit * std::max(1.0, max_abs(x)))
    throw NumericalError(std::string(name) + " lost symmetry at stage " +
                         std::to_string(stage));
  return symmetrized(x);
}

// Solves G X = rhs for a PD G. Throws RiccatiInfeasible otherwise.
inline Matrix pd_solve(const Matrix& g, const Matrix& rhs, int stage,
                       const char* which, double pivot_tol) {
  if (!is_positive_definite(g, pivot_tol)) throw RiccatiInfeasible(stage, which);
  Eigen::LLT<Matrix> llt(symmetrized(g));
  if (llt.info() != Eigen::Success) throw RiccatiInfeasible(stage, which);
  return llt.solve(rhs);
}

}  // namespace detail

// One step of the coupled backward recursion, from stage k+1 quantities to
// stage k. All right-hand sides depend only on stage k+1, so the step is
// explicit: gains first, then the four value matrices.
inline RiccatiStep backward_step(const GameSpec& s, const CompositeMatrices& c,
                                 const Matrix& PL1, const Matrix& PR1,
                                 const Matrix& OL1, const Matrix& OR1,
                                 RemoteGainForm form = RemoteGainForm::best_response,
                                 int stage = 0, double pd_pivot = 1e-12) {
  const Matrix& A = s.A;
  const Matrix& BL = s.BL;
  const Matrix& Bc = c.B_cal;
  RiccatiStep out;

  out.GL = Bc.transpose() * PL1 * Bc + c.LambdaL;
  out.KL = -detail::pd_solve(out.GL, Bc.transpose() * PL1 * A, stage,
                             "Lambda^L + B'P^L B", pd_pivot);

  const Matrix W = form == RemoteGainForm::best_response
                       ? Matrix(s.p * OR1 + (1.0 - s.p) * PR1)
                       : PR1;
  out.GR = BL.transpose() * W * BL + s.SR;
  out.KR = -detail::pd_solve(out.GR, BL.transpose() * W * A, stage,
                             "S^R + B^L'P^R B^L", pd_pivot);

  const Matrix FR = A + BL * out.KR;
  const Matrix FL = A + Bc * out.KL;

  const Matrix PL = A.transpose() * PL1 * A + s.QL -
                    out.KL.transpose() * out.GL * out.KL;
  Matrix PR;
  if (form == RemoteGainForm::best_response) {
    PR = A.transpose() * W * A + s.QR - out.KR.transpose() * out.GR * out.KR;
  } else {
    PR = A.transpose() * PR1 * A + s.QR - out.KR.transpose() * out.GR * out.KR +
         s.p * (FR.transpose() * OR1 * FR - FR.transpose() * PR1 * FR);
  }
  const Matrix OL = s.p * FR.transpose() * PL1 * FR +
                    (1.0 - s.p) * FR.transpose() * OL1 * FR + s.QL +
                    out.KR.transpose() * s.SL * out.KR;
  const Matrix OR = FL.transpose() * OR1 * FL + s.QR +
                    out.KL.transpose() * c.LambdaR * out.KL;

  out.PL = detail::checked_symmetric(PL, "P^L", stage);
  out.PR = detail::checked_symmetric(PR, "P^R", stage);
  out.OmegaL = detail::checked_symmetric(OL, "Omega^L", stage);
  out.OmegaR = detail::checked_symmetric(OR, "Omega^R", stage);
  return out;
}

inline RiccatiStep backward_step(const GameSpec& s, const Matrix& PL1,
                                 const Matrix& PR1, const Matrix& OL1,
                                 const Matrix& OR1,
                                 RemoteGainForm form = RemoteGainForm::best_response,
                                 int stage = 0) {
  return backward_step(s, composites(s), PL1, PR1, OL1, OR1, form, stage);
}

inline RiccatiSolution solve(const GameSpec& s,
                             RemoteGainForm form = RemoteGainForm::best_response,
                             const Tolerances& tol = {}) {
  require_shapes(s);
  const auto c = composites(s);
  const auto N = static_cast<std::size_t>(s.N);

  RiccatiSolution sol;
  sol.form = form;
  sol.PL.resize(N + 2);
  sol.PR.resize(N + 2);
  sol.OmegaL.resize(N + 2);
  sol.OmegaR.resize(N + 2);
  sol.KL.resize(N + 1);
  sol.KR.resize(N + 1);
  sol.GL.resize(N + 1);
  sol.GR.resize(N + 1);

  sol.PL[N + 1] = sol.OmegaL[N + 1] = symmetrized(s.PL_term);
  sol.PR[N + 1] = sol.OmegaR[N + 1] = symmetrized(s.PR_term);

  for (std::size_t k = N + 1; k-- > 0;) {
    auto step = backward_step(s, c, sol.PL[k + 1], sol.PR[k + 1],
                              sol.OmegaL[k + 1], sol.OmegaR[k + 1], form,
                              static_cast<int>(k), tol.pd_pivot);
    sol.PL[k] = std::move(step.PL);
    sol.PR[k] = std::move(step.PR);
    sol.OmegaL[k] = std::move(step.OmegaL);
    sol.OmegaR[k] = std::move(step.OmegaR);
    sol.KL[k] = std::move(step.KL);
    sol.KR[k] = std::move(step.KR);
    sol.GL[k] = std::move(step.GL);
    sol.GR[k] = std::move(step.GR);
  }
  return sol;
}

struct CostPair {
  double jl = 0.0;
  double jr = 0.0;
};

// Second moments of the initial estimate and error: x̂₀ = γ₀x₀ + (1-γ₀)μ and
// x̃₀ = (1-γ₀)(x₀-μ) give E[x̂₀x̂₀ᵀ] = pΣ + μμᵀ and E[x̃₀x̃₀ᵀ] = (1-p)Σ.
inline Matrix initial_estimate_moment(const GameSpec& s) {
  return s.p * s.Sigma_x0 + s.mu * s.mu.transpose();
}

inline Matrix initial_error_moment(const GameSpec& s) {
  return (1.0 - s.p) * s.Sigma_x0;
}

// Equilibrium costs from the value matrices.
inline CostPair analytic_costs(const GameSpec& s, const RiccatiSolution& sol) {
  require_shapes(s);
  if (sol.horizon() != s.N)
    throw StructuralError("Riccati solution horizon " +
                          std::to_string(sol.horizon()) +
                          " does not match spec N = " + std::to_string(s.N));
  const Matrix Mhat = initial_estimate_moment(s);
  const Matrix Mtilde = initial_error_moment(s);

  CostPair j;
  j.jl = (sol.PL[0] * Mhat).trace() + (sol.OmegaL[0] * Mtilde).trace();
  j.jr = (sol.OmegaR[0] * Mhat).trace() + (sol.PR[0] * Mtilde).trace();
  for (int k = 0; k <= s.N; ++k) {
    const auto i = static_cast<std::size_t>(k) + 1;
    j.jl += s.p * (s.Sigma_w * sol.PL[i]).trace() +
            (1.0 - s.p) * (s.Sigma_w * sol.OmegaL[i]).trace();
    j.jr += s.p * (s.Sigma_w * sol.OmegaR[i]).trace() +
            (1.0 - s.p) * (s.Sigma_w * sol.PR[i]).trace();
  }
  return j;
}

// Largest k* such that both gain sequences move by at most tol between
// consecutive stages for every k <= k*; -1 if even k = 0 fails.
inline int gain_convergence(const RiccatiSolution& sol, double tol) {
  const int N = sol.horizon();
  int k_star = -1;
  for (int k = 0; k < N; ++k) {
    const auto i = static_cast<std::size_t>(k);
    const double dl = max_abs(sol.KL[i] - sol.KL[i + 1]);
    const double dr = max_abs(sol.KR[i] - sol.KR[i + 1]);
    if (dl > tol || dr > tol) break;
    k_star = k;
  }
  return k_star;
}

}  // namespace lrsng
