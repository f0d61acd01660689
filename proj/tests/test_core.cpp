#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "mixedctrl/core.hpp"

using namespace mixedctrl;

TEST(MixCosts, WeightedSum) {
  const auto c = mix_costs({{CostVector(20.0, {0.005}), 0.5}, {CostVector(10.0, {0.015}), 0.5}});
  EXPECT_DOUBLE_EQ(c.c0, 15.0);
  EXPECT_DOUBLE_EQ(c.c1(), 0.01);
}

TEST(MixCosts, RejectsBadInput) {
  EXPECT_THROW(mix_costs({}), InvalidInput);
  EXPECT_THROW(mix_costs({{CostVector(1.0, {0.1}), 0.7}}), InvalidInput);
  EXPECT_THROW(mix_costs({{CostVector(1.0, {0.1}), 1.5}, {CostVector(2.0, {0.1}), -0.5}}),
               InvalidInput);
  EXPECT_THROW(mix_costs({{CostVector(1.0, {0.1}), 0.5}, {CostVector(2.0, {0.1, 0.2}), 0.5}}),
               InvalidInput);
}

TEST(MixCosts, PermutationInvariantAndLinear) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + trial % 5, k = 1 + trial % 3;
    std::vector<std::pair<CostVector, double>> comps;
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> rest(k);
      for (double& r : rest) r = u(rng);
      comps.emplace_back(CostVector(100.0 * u(rng), rest), u(rng) + 0.01);
      total += comps.back().second;
    }
    for (auto& c : comps) c.second /= total;
    const auto a = mix_costs(comps, 1e-12);
    auto shuffled = comps;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    const auto b = mix_costs(shuffled, 1e-12);
    EXPECT_NEAR(a.c0, b.c0, 1e-9);
    for (std::size_t i = 0; i < k; ++i) EXPECT_NEAR(a.rest[i], b.rest[i], 1e-12);

    // Scaling every c0 by s scales the aggregate c0 by s.
    auto scaled = comps;
    for (auto& c : scaled) c.first.c0 *= 3.0;
    EXPECT_NEAR(mix_costs(scaled, 1e-12).c0, 3.0 * a.c0, 1e-9);
  }
}

TEST(Lagrangian, Value) {
  EXPECT_DOUBLE_EQ(lagrangian_value(CostVector(20.0, {0.005}), DualVector{1000.0}, Bounds{0.01}),
                   15.0);
  EXPECT_DOUBLE_EQ(lagrangian_value(CostVector(10.0, {0.015}), DualVector{1000.0}, Bounds{0.01}),
                   15.0);
  EXPECT_DOUBLE_EQ(
      lagrangian_value(CostVector(1.0, {0.5, 0.25}), DualVector{2.0, 4.0}, Bounds{0.5, 0.0}), 2.0);
  EXPECT_THROW(lagrangian_value(CostVector(1.0, {0.5}), DualVector{1.0, 1.0}, Bounds{0.5}),
               InvalidInput);
}

TEST(Lagrangian, LinearInLambda) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const CostVector c(u(rng) * 50, {u(rng), u(rng)});
    const Bounds v{u(rng), u(rng)};
    const double l1 = u(rng) * 100, l2 = u(rng) * 100, m1 = u(rng) * 100, m2 = u(rng) * 100;
    const double a = lagrangian_value(c, DualVector{l1, l2}, v);
    const double b = lagrangian_value(c, DualVector{m1, m2}, v);
    const double mid = lagrangian_value(c, DualVector{(l1 + m1) / 2, (l2 + m2) / 2}, v);
    EXPECT_NEAR(mid, (a + b) / 2, 1e-9);
  }
}

TEST(Vectors, Validation) {
  EXPECT_THROW(DualVector({-1.0}), InvalidInput);
  EXPECT_THROW(DualVector({std::numeric_limits<double>::infinity()}), InvalidInput);
  EXPECT_THROW(Bounds({std::numeric_limits<double>::quiet_NaN()}), InvalidInput);
  EXPECT_EQ(DualVector::zeros(3).k(), 3u);
  EXPECT_EQ(DualVector::scalar(2.0)[0], 2.0);
}
