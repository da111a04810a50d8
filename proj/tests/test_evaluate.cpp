#include <gtest/gtest.h>

#include <cstring>

#include "helpers.hpp"
#include "lrsng/evaluate.hpp"

using namespace lrsng;

namespace {

PolicySequence perturbed_policy(const PolicySequence& base, std::uint64_t seed, double spread) {
  Stream rng(seed, 99);
  PolicySequence out = base;
  for (auto& k : out.KLt) k += fixtures::random_matrix(rng, static_cast<int>(k.rows()),
                                                       static_cast<int>(k.cols()), spread);
  for (auto& k : out.KRt) k += fixtures::random_matrix(rng, static_cast<int>(k.rows()),
                                                       static_cast<int>(k.cols()), spread);
  return out;
}

bool same_bits(const CostReport& a, const CostReport& b) {
  return std::memcmp(&a.jl, &b.jl, sizeof(double)) == 0 &&
         std::memcmp(&a.jr, &b.jr, sizeof(double)) == 0 &&
         std::memcmp(&a.jl_se, &b.jl_se, sizeof(double)) == 0 &&
         std::memcmp(&a.jr_se, &b.jr_se, sizeof(double)) == 0 &&
         a.trajectories == b.trajectories && a.seed == b.seed;
}

}  // namespace

TEST(Random, StreamsAreReproducibleAndDistinct) {
  Stream a(42, 7), b(42, 7), c(42, 8), d(43, 7);
  for (int i = 0; i < 10; ++i) {
    const double va = a.normal();
    EXPECT_EQ(va, b.normal());
    EXPECT_NE(va, c.normal());
    EXPECT_NE(va, d.normal());
  }
}

TEST(Random, UniformRangeAndNormalMoments) {
  Stream s(1, 0);
  double sum = 0.0, sq = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = s.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    const double z = s.normal();
    sum += z;
    sq += z * z;
  }
  EXPECT_NEAR(sum / n, 0.0, 5.0 / std::sqrt(n));
  EXPECT_NEAR(sq / n, 1.0, 5.0 * std::sqrt(2.0 / n));
}

TEST(Moments, MatchAnalyticCostsOnReferenceExample) {
  const auto s = reference_example();
  const auto sol = solve(s);
  const auto a = analytic_costs(s, sol);
  const auto m = propagate_moments(s, PolicySequence::from_solution(sol));
  EXPECT_NEAR(m.jl, a.jl, 1e-8 * a.jl);
  EXPECT_NEAR(m.jr, a.jr, 1e-8 * a.jr);
  ASSERT_EQ(m.moments.size(), 52u);
  EXPECT_EQ(m.moments[0].Mhat, initial_estimate_moment(s));
  EXPECT_EQ(m.moments[0].Mtilde, initial_error_moment(s));
}

TEST(Moments, ZeroPolicyScalarByHand) {
  // n = 1, N = 0, a = 2, zero controls: J = q·E[x0²] + P·E[(2x0 + w)²].
  GameSpec s;
  s.n = s.m1 = s.m2 = 1;
  s.N = 0;
  s.p = 0.3;
  s.A = fixtures::scalar(2.0);
  s.BL = s.BR = fixtures::scalar(1.0);
  s.QL = fixtures::scalar(0.5);
  s.QR = fixtures::scalar(1.5);
  s.SL = s.SR = s.ML = s.MR = fixtures::scalar(1.0);
  s.PL_term = fixtures::scalar(2.0);
  s.PR_term = fixtures::scalar(3.0);
  s.mu = Vector::Constant(1, 1.0);
  s.Sigma_x0 = fixtures::scalar(0.25);
  s.Sigma_w = fixtures::scalar(0.5);
  const double ex0 = 1.25;
  const double ex1 = 4.0 * ex0 + 0.5;
  const auto m = propagate_moments(s, PolicySequence::zero(s));
  EXPECT_NEAR(m.jl, 0.5 * ex0 + 2.0 * ex1, 1e-14);
  EXPECT_NEAR(m.jr, 1.5 * ex0 + 3.0 * ex1, 1e-14);
}

TEST(MonteCarlo, AgreesWithExactEvaluation) {
  const auto s = fixtures::random_spec(21, 2, 1, 2, 8, 0.4);
  const auto sol = solve(s);
  const auto policy = PolicySequence::from_solution(sol);
  const auto exact = propagate_moments(s, policy);
  const auto mc = monte_carlo(s, policy, 20000, 5);
  EXPECT_LE(std::abs(mc.jl - exact.jl), 4.0 * mc.jl_se);
  EXPECT_LE(std::abs(mc.jr - exact.jr), 4.0 * mc.jr_se);
  EXPECT_EQ(mc.trajectories, 20000u);
  EXPECT_EQ(mc.seed, 5u);
}

TEST(MonteCarlo, DeterministicAcrossRunsAndWorkers) {
  const auto s = reference_example();
  const auto policy = PolicySequence::from_solution(solve(s));
  const auto a = monte_carlo(s, policy, 3000, 42, 1);
  const auto b = monte_carlo(s, policy, 3000, 42, 1);
  const auto c = monte_carlo(s, policy, 3000, 42, 8);
  const auto d = monte_carlo(s, policy, 3000, 42, 3);
  EXPECT_TRUE(same_bits(a, b));
  EXPECT_TRUE(same_bits(a, c));
  EXPECT_TRUE(same_bits(a, d));
  const auto e = monte_carlo(s, policy, 3000, 43, 1);
  EXPECT_NE(a.jl, e.jl);
}

TEST(MonteCarlo, RejectsBadPolicy) {
  const auto s = reference_example();
  auto policy = PolicySequence::zero(s);
  policy.KRt.pop_back();
  EXPECT_THROW(monte_carlo(s, policy, 10, 0), StructuralError);
  policy = PolicySequence::zero(s);
  policy.KLt[3] = Matrix::Zero(2, 2);
  EXPECT_THROW(propagate_moments(s, policy), StructuralError);
  EXPECT_THROW(monte_carlo(s, PolicySequence::zero(s), 1, 0), StructuralError);
}

TEST(CrossMoments, SampleMeanIsNearZero) {
  const auto s = reference_example();
  const auto policy = PolicySequence::from_solution(solve(s));
  const auto cm = sample_cross_moments(s, policy, 4000, 9, 2);
  ASSERT_EQ(cm.mean.size(), 52u);
  for (std::size_t k = 0; k < cm.mean.size(); ++k)
    for (Eigen::Index e = 0; e < cm.mean[k].size(); ++e)
      EXPECT_LE(std::abs(cm.mean[k](e)), 5.0 * cm.se[k](e) + 1e-300) << k;
  const auto again = sample_cross_moments(s, policy, 4000, 9, 1);
  for (std::size_t k = 0; k < cm.mean.size(); ++k) EXPECT_EQ(cm.mean[k], again.mean[k]);
}

TEST(Nash, BestResponseEquilibriumPasses) {
  const auto s = reference_example();
  NashOptions opt;
  opt.deviations = 30;
  opt.magnitudes = {1e-2, 1e-1, 1.0};
  const auto rep = nash_check(s, solve(s), opt);
  EXPECT_TRUE(rep.pass());
  EXPECT_LE(rep.max_grad_local, 1e-5);
  EXPECT_LE(rep.max_grad_remote, 1e-5);
  EXPECT_EQ(rep.checks.size(), 4u);
}

TEST(Nash, PrOnlyRemoteGainIsNotABestResponse) {
  const auto s = reference_example();
  NashOptions opt;
  opt.deviations = 0;
  const auto rep = nash_check(s, solve(s, RemoteGainForm::pr_only), opt);
  EXPECT_FALSE(rep.pass());
  EXPECT_GT(rep.max_grad_remote, 0.1);
  EXPECT_LE(rep.max_grad_local, 1e-5);
  EXPECT_FALSE(rep.checks[1].pass);
  EXPECT_NE(rep.checks[1].detail.find("k="), std::string::npos);
}

TEST(Nash, ZeroPolicyFailsWithLocation) {
  const auto s = with_horizon(reference_example(), 5);
  NashOptions opt;
  opt.deviations = 10;
  const auto rep = nash_check(s, PolicySequence::zero(s), opt);
  EXPECT_FALSE(rep.pass());
  EXPECT_FALSE(rep.checks[0].pass);
  EXPECT_GT(rep.worst_improvement_local, 0.0);
}

TEST(CompletingSquare, IdentitiesHoldForRandomPolicies) {
  const auto s = fixtures::random_spec(77, 2, 2, 1, 12, 0.55);
  const auto sol = solve(s);
  const auto base = PolicySequence::from_solution(sol);
  for (std::uint64_t i = 0; i < 20; ++i) {
    const auto dev = perturbed_policy(base, i, 0.3);
    const auto l = local_completing_square(s, sol, dev);
    const auto r = remote_completing_square(s, sol, dev);
    EXPECT_LE(l.relative(), 1e-8) << i;
    EXPECT_LE(r.relative(), 1e-8) << i;
    EXPECT_GE(l.lhs, 0.0);
    EXPECT_GE(r.lhs, 0.0);
  }
}

TEST(CompletingSquare, EquilibriumGivesZero) {
  const auto s = reference_example();
  const auto sol = solve(s);
  const auto l = local_completing_square(s, sol, PolicySequence::from_solution(sol));
  EXPECT_EQ(l.rhs, 0.0);
  EXPECT_NEAR(l.lhs, 0.0, 1e-12);
}
