#include <gtest/gtest.h>

#include <random>

#include "mixedctrl/milp.hpp"
#include "support/instances.hpp"
#include "support/oracles.hpp"

using namespace mixedctrl;
using lp::RowSense;

TEST(Milp, Knapsack) {
  milp::MilpProblem p;
  p.lp.sense = lp::Sense::maximize;
  for (double c : {5.0, 4.0, 3.0}) p.binaries.push_back(p.lp.add_variable(0.0, 1.0, c));
  p.lp.add_row({{0, 2.0}, {1, 3.0}, {2, 1.0}}, RowSense::less_equal, 5.0);
  const auto s = milp::solve_milp(p);
  ASSERT_EQ(s.status, milp::Status::optimal);
  EXPECT_NEAR(s.objective, 9.0, 1e-9);
  EXPECT_NEAR(s.x[0], 1.0, 1e-9);
  EXPECT_NEAR(s.x[1], 1.0, 1e-9);
  EXPECT_NEAR(s.x[2], 0.0, 1e-9);
  EXPECT_GE(s.root_bound, s.objective - 1e-9);
}

TEST(Milp, IntegralRootNeedsNoBranching) {
  milp::MilpProblem p;
  p.binaries.push_back(p.lp.add_variable(0.0, 1.0, 1.0));
  p.binaries.push_back(p.lp.add_variable(0.0, 1.0, 2.0));
  p.lp.add_row({{0, 1.0}, {1, 1.0}}, RowSense::greater_equal, 1.0);
  const auto s = milp::solve_milp(p);
  ASSERT_EQ(s.status, milp::Status::optimal);
  EXPECT_EQ(s.nodes, 1u);
  EXPECT_NEAR(s.objective, 1.0, 1e-12);
}

TEST(Milp, Infeasible) {
  milp::MilpProblem p;
  p.binaries.push_back(p.lp.add_variable(0.0, 1.0, 1.0));
  p.binaries.push_back(p.lp.add_variable(0.0, 1.0, 1.0));
  // Relaxation feasible at (0.5, 0.5), no binary point is.
  p.lp.add_row({{0, 1.0}, {1, 1.0}}, RowSense::equal, 1.0);
  p.lp.add_row({{0, 1.0}, {1, -1.0}}, RowSense::equal, 0.0);
  EXPECT_EQ(milp::solve_milp(p).status, milp::Status::infeasible);

  milp::MilpProblem q;
  q.binaries.push_back(q.lp.add_variable(0.0, 1.0, 1.0));
  q.lp.add_row({{0, 1.0}}, RowSense::greater_equal, 2.0);
  EXPECT_EQ(milp::solve_milp(q).status, milp::Status::infeasible);
}

TEST(Milp, NodeLimitKeepsIncumbent) {
  std::mt19937_64 rng(3);
  auto p = instances::random_milp(rng, 12, 2, 5);
  milp::MilpConfig cfg;
  cfg.max_nodes = 2;
  const auto s = milp::solve_milp(p, cfg);
  EXPECT_TRUE(s.status == milp::Status::node_limit || s.status == milp::Status::optimal ||
              s.status == milp::Status::infeasible);
  EXPECT_LE(s.nodes, 2u);
}

TEST(Milp, HeuristicDoesNotChangeOptimum) {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 30; ++trial) {
    auto p = instances::random_milp(rng, 8, 2, 4);
    milp::MilpConfig cfg;
    cfg.abs_gap = 1e-9;
    const auto plain = milp::solve_milp(p, cfg);
    p.heuristic = [](const std::vector<double>& x) -> std::optional<std::vector<double>> {
      std::vector<double> r;
      for (std::size_t j = 0; j < 8; ++j) r.push_back(x[j] >= 0.5 ? 1.0 : 0.0);
      return r;
    };
    const auto with = milp::solve_milp(p, cfg);
    ASSERT_EQ(plain.status, with.status);
    if (plain.status == milp::Status::optimal) { EXPECT_NEAR(plain.objective, with.objective, 1e-7); }
  }
}

static void check_against_enumeration(std::uint64_t seed, int trials, std::size_t nb,
                                      std::size_t nc, std::size_t m) {
  std::mt19937_64 rng(seed);
  int solved = 0;
  for (int trial = 0; trial < trials; ++trial) {
    const auto p = instances::random_milp(rng, nb, nc, m);
    milp::MilpConfig cfg;
    cfg.abs_gap = 1e-9;
    const auto got = milp::solve_milp(p, cfg);
    const auto ref = oracle::enumerate_assignments(oracle::from_lp(p.lp), p.binaries);
    if (!ref) {
      EXPECT_EQ(got.status, milp::Status::infeasible) << "trial " << trial;
      continue;
    }
    ASSERT_EQ(got.status, milp::Status::optimal) << "trial " << trial;
    const double want = p.lp.sense == lp::Sense::maximize ? -ref->objective : ref->objective;
    EXPECT_NEAR(got.objective, want, 1e-6) << "trial " << trial;
    for (std::size_t b : p.binaries)
      EXPECT_NEAR(got.x[b], std::round(got.x[b]), 1e-6);
    EXPECT_LE(lp::max_violation(p.lp, got.x), 1e-6);
    // The root relaxation bounds the optimum.
    if (p.lp.sense == lp::Sense::maximize) EXPECT_GE(got.root_bound, got.objective - 1e-7);
    else EXPECT_LE(got.root_bound, got.objective + 1e-7);
    ++solved;
  }
  EXPECT_GT(solved, trials / 3);
}

TEST(Milp, RandomSixBinariesAgainstEnumeration) { check_against_enumeration(17, 100, 6, 2, 4); }

TEST(Milp, RandomTwelveBinariesAgainstEnumeration) { check_against_enumeration(18, 30, 12, 2, 4); }

TEST(Milp, RejectsBadBinaryIndex) {
  milp::MilpProblem p;
  p.lp.add_variable(0.0, 1.0, 1.0);
  p.binaries = {4};
  EXPECT_THROW(milp::solve_milp(p), InvalidInput);
}
