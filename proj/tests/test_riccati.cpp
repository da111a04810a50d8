#include <gtest/gtest.h>

#include "helpers.hpp"
#include "lrsng/evaluate.hpp"
#include "lrsng/riccati.hpp"

using namespace lrsng;
using lrsng::fixtures::scalar;

namespace {

GameSpec unit_scalar_game(int N, double p) {
  GameSpec s;
  s.n = s.m1 = s.m2 = 1;
  s.N = N;
  s.p = p;
  s.A = s.BL = s.BR = scalar(1.0);
  s.QL = s.QR = s.SL = s.SR = s.ML = s.MR = scalar(1.0);
  s.PL_term = s.PR_term = scalar(1.0);
  s.mu = Vector::Zero(1);
  s.Sigma_x0 = s.Sigma_w = scalar(1.0);
  return s;
}

}  // namespace

TEST(Riccati, OneStepLocalGainByHand) {
  const auto sol = solve(unit_scalar_game(0, 0.5));
  Matrix gl(2, 2);
  gl << 2, 1, 1, 2;
  EXPECT_NEAR(max_abs(sol.GL[0] - gl), 0.0, 1e-15);
  EXPECT_NEAR(sol.KL[0](0, 0), -1.0 / 3.0, 1e-15);
  EXPECT_NEAR(sol.KL[0](1, 0), -1.0 / 3.0, 1e-15);
  // K^R = -(1 + 1)⁻¹·1 = -1/2 with W = P^R_1 = 1.
  EXPECT_NEAR(sol.KR[0](0, 0), -0.5, 1e-15);
}

TEST(Riccati, TerminalConditions) {
  const auto s = reference_example();
  const auto sol = solve(s);
  ASSERT_EQ(sol.PL.size(), 52u);
  ASSERT_EQ(sol.KL.size(), 51u);
  EXPECT_EQ(sol.horizon(), 50);
  EXPECT_EQ(sol.PL[51], s.PL_term);
  EXPECT_EQ(sol.OmegaL[51], s.PL_term);
  EXPECT_EQ(sol.PR[51], s.PR_term);
  EXPECT_EQ(sol.OmegaR[51], s.PR_term);
}

TEST(Riccati, ReferenceExampleFeasibleAndSymmetric) {
  const auto sol = solve(reference_example());
  for (std::size_t k = 0; k < sol.KL.size(); ++k) {
    EXPECT_TRUE(is_positive_definite(sol.GL[k])) << k;
    EXPECT_TRUE(is_positive_definite(sol.GR[k])) << k;
  }
  for (std::size_t k = 0; k < sol.PL.size(); ++k) {
    EXPECT_EQ(asymmetry(sol.PL[k]), 0.0);
    EXPECT_EQ(asymmetry(sol.OmegaR[k]), 0.0);
    EXPECT_TRUE(is_positive_semidefinite(sol.PL[k]));
    EXPECT_TRUE(is_positive_semidefinite(sol.PR[k]));
  }
}

// Frozen from an independent dense transcription of the recursion.
TEST(Riccati, ReferenceExampleGainConvergence) {
  EXPECT_EQ(gain_convergence(solve(reference_example()), 1e-6), 23);
  EXPECT_EQ(gain_convergence(solve(reference_example(), RemoteGainForm::pr_only), 1e-6), 22);
}

TEST(Riccati, GainConvergenceBoundaries) {
  const auto sol = solve(reference_example());
  EXPECT_EQ(gain_convergence(sol, 1e3), 49);
  EXPECT_EQ(gain_convergence(sol, 0.0), -1);
  const auto one = solve(with_horizon(reference_example(), 0));
  EXPECT_EQ(gain_convergence(one, 1.0), -1);
}

TEST(Riccati, ReferenceExampleCosts) {
  const auto s = reference_example();
  const auto best = analytic_costs(s, solve(s));
  EXPECT_NEAR(best.jl, 596.1183507502412, 596.0 * 1e-12);
  EXPECT_NEAR(best.jr, 596.1183507502412, 596.0 * 1e-12);
  const auto pub = analytic_costs(s, solve(s, RemoteGainForm::pr_only));
  EXPECT_NEAR(pub.jl, 596.4715610792931, 596.0 * 1e-12);
  EXPECT_NEAR(pub.jr, 596.4715610792931, 596.0 * 1e-12);
}

TEST(Riccati, FormsAgreeWithoutPacketsAndAtFinalStage) {
  auto s = fixtures::random_spec(11, 3, 2, 2, 6, 0.0);
  const auto a = solve(s);
  const auto b = solve(s, RemoteGainForm::pr_only);
  for (std::size_t k = 0; k < a.KR.size(); ++k) {
    EXPECT_NEAR(max_abs(a.KR[k] - b.KR[k]), 0.0, 1e-12);
    EXPECT_NEAR(max_abs(a.PR[k] - b.PR[k]), 0.0, 1e-10);
  }
  s.p = 0.4;
  const auto c = solve(s);
  const auto d = solve(s, RemoteGainForm::pr_only);
  EXPECT_NEAR(max_abs(c.KR[6] - d.KR[6]), 0.0, 1e-14);
  EXPECT_GT(max_abs(c.KR[0] - d.KR[0]), 1e-6);
}

TEST(Riccati, LocalGainFollowsJointRiccati) {
  // K^L and P^L minimize J^L over both inputs: a standard LQ recursion.
  auto s = fixtures::random_spec(5, 2, 1, 1, 5, 0.3);
  const auto sol = solve(s);
  const auto c = composites(s);
  Matrix P = s.PL_term;
  for (int k = s.N; k >= 0; --k) {
    const Matrix G = c.LambdaL + c.B_cal.transpose() * P * c.B_cal;
    const Matrix K = -G.ldlt().solve(c.B_cal.transpose() * P * s.A);
    EXPECT_NEAR(max_abs(K - sol.KL[static_cast<std::size_t>(k)]), 0.0, 1e-12);
    P = s.A.transpose() * P * s.A + s.QL - K.transpose() * G * K;
  }
}

TEST(Riccati, InfeasibleStageIsReported) {
  auto s = reference_example();
  s.SR = -10.0 * Matrix::Identity(2, 2);
  try {
    (void)solve(s);
    FAIL() << "expected RiccatiInfeasible";
  } catch (const RiccatiInfeasible& e) {
    EXPECT_EQ(e.stage(), 50);
    EXPECT_NE(std::string(e.what()).find("stage 50"), std::string::npos);
  }
}

TEST(Riccati, ShapeMismatchRejected) {
  auto s = reference_example();
  s.BL = Matrix::Zero(2, 3);
  EXPECT_THROW((void)solve(s), StructuralError);
}

TEST(Riccati, AnalyticCostsMatchMomentsOnRandomGames) {
  for (std::uint64_t seed = 1; seed <= 8; ++seed) {
    const auto s = fixtures::random_spec(seed, 1 + static_cast<int>(seed % 3), 2, 1, 7,
                                        0.1 * static_cast<double>(seed));
    for (auto form : {RemoteGainForm::best_response, RemoteGainForm::pr_only}) {
      const auto sol = solve(s, form);
      const auto a = analytic_costs(s, sol);
      const auto m = propagate_moments(s, PolicySequence::from_solution(sol));
      EXPECT_NEAR(a.jl, m.jl, 1e-10 * std::abs(m.jl)) << seed;
      EXPECT_NEAR(a.jr, m.jr, 1e-10 * std::abs(m.jr)) << seed;
    }
  }
}

TEST(Riccati, ParseRemoteGainForm) {
  EXPECT_EQ(parse_remote_gain_form("pr_only"), RemoteGainForm::pr_only);
  EXPECT_EQ(parse_remote_gain_form("best_response"), RemoteGainForm::best_response);
  EXPECT_THROW(parse_remote_gain_form("other"), ParseError);
}
