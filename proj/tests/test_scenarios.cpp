#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>

#include "mixedctrl/dual.hpp"
#include "mixedctrl/scenarios.hpp"

using namespace mixedctrl;
using namespace mixedctrl::scenarios;

namespace {

// Cheapest cost of at most T moves (|d|_2 <= max_step, cost |d|_2) over
// free cells, plus the miss penalty at the end; reaching the goal stops.
double layered_shortest_path(const GridMap& m, Cell start, Cell goal, int max_step, std::size_t T,
                             double penalty) {
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> d(m.cells(), inf);
  d[m.index(start.x, start.y)] = 0.0;
  double best = inf;
  auto settle = [&] {
    const auto g = m.index(goal.x, goal.y);
    best = std::min(best, d[g]);
  };
  settle();
  for (std::size_t t = 0; t < T; ++t) {
    std::vector<double> next = d;
    for (int y = 0; y < m.height; ++y)
      for (int x = 0; x < m.width; ++x) {
        const double here = d[m.index(x, y)];
        if (here == inf || (x == goal.x && y == goal.y)) continue;
        for (int dy = -max_step; dy <= max_step; ++dy)
          for (int dx = -max_step; dx <= max_step; ++dx) {
            if (dx * dx + dy * dy > max_step * max_step) continue;
            const int nx = x + dx, ny = y + dy;
            if (!m.inside(nx, ny) || m.is_blocked(nx, ny)) continue;
            auto& slot = next[m.index(nx, ny)];
            slot = std::min(slot, here + std::sqrt(dx * dx + dy * dy));
          }
      }
    d = std::move(next);
    settle();
  }
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x) {
      const double here = d[m.index(x, y)];
      if (here == inf) continue;
      best = std::min(best, here + penalty * std::hypot(x - goal.x, y - goal.y));
    }
  return best;
}

GridParams open_grid(int w, int h) {
  GridParams p;
  p.map = GridMap(w, h);
  p.horizon = 6;
  p.start = {1, 1};
  p.goal = {w - 2, h - 2};
  p.max_step = 2;
  p.sigma = 0.0;
  p.miss_penalty = 10.0;
  return p;
}

}  // namespace

TEST(Toy, Queries) {
  auto t = toy_problem();
  EXPECT_EQ(t.oracle.query(DualVector{0.0}).cost, CostVector(10.0, {0.015}));
  EXPECT_EQ(t.oracle.query(DualVector{2000.0}).cost, CostVector(20.0, {0.005}));
  const auto r = solve_mixed(t.oracle, t.bounds);
  ASSERT_EQ(r.mixed.components.size(), 2u);
  EXPECT_NEAR(r.mixed.components[0].probability, 0.5, 1e-9);
  EXPECT_NEAR(r.mixed.components[1].probability, 0.5, 1e-9);
  EXPECT_NEAR(r.mixed.aggregate.c0, 15.0, 1e-9);
  EXPECT_NEAR(r.mixed.aggregate.c1(), 0.01, 1e-9);
  EXPECT_NEAR(r.mixed.dual[0], 1000.0, 1e-3);
}

TEST(FiniteSet, QueryIsArgmin) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<CostVector> pts;
  for (int i = 0; i < 12; ++i) pts.emplace_back(u(rng) * 50, std::vector<double>{u(rng) * 0.1});
  FiniteSetOracle o(pts);
  for (int i = 0; i < 100; ++i) {
    const double l = u(rng) * 1000.0;
    std::size_t best = 0;
    for (std::size_t j = 1; j < pts.size(); ++j)
      if (pts[j].c0 + l * pts[j].c1() < pts[best].c0 + l * pts[best].c1()) best = j;
    EXPECT_EQ(o.query(DualVector{l}).policy, best);
    const auto all = o.query_all(DualVector{l});
    ASSERT_FALSE(all.empty());
    EXPECT_EQ(all.front().policy, best);
  }
}

TEST(FiniteSet, Validation) {
  EXPECT_THROW(FiniteSetOracle({}), InvalidInput);
  EXPECT_THROW(FiniteSetOracle({CostVector(1.0, {0.1}), CostVector(1.0, {0.1, 0.2})}), InvalidInput);
  EXPECT_THROW(FiniteSetOracle({CostVector(std::nan(""), {0.1})}), InvalidInput);
  EXPECT_THROW(FiniteSetOracle({CostVector(1.0, {})}), InvalidInput);
}

TEST(GridMaps, ParseAndErrors) {
  const auto m = parse_grid_map("..#\n#..\n");
  EXPECT_EQ(m.width, 3);
  EXPECT_EQ(m.height, 2);
  EXPECT_TRUE(m.is_blocked(2, 0));
  EXPECT_TRUE(m.is_blocked(0, 1));
  EXPECT_FALSE(m.is_blocked(1, 1));
  EXPECT_EQ(parse_grid_map(m.to_text()).blocked, m.blocked);
  EXPECT_THROW(parse_grid_map(""), InvalidInput);
  EXPECT_THROW(parse_grid_map("..\n...\n"), InvalidInput);
  EXPECT_THROW(parse_grid_map(".x.\n"), InvalidInput);
  EXPECT_THROW(load_grid_map("/nonexistent/map.txt"), InvalidInput);
}

TEST(GaussianOffsets, Moments) {
  const auto point = gaussian_offsets(Eigen::Matrix2d::Zero());
  ASSERT_EQ(point.size(), 1u);
  EXPECT_EQ(point[0].p, 1.0);

  Eigen::Matrix2d cov;
  cov << 1.0, 0.3, 0.3, 0.5;
  const auto off = gaussian_offsets(cov);
  double total = 0.0, mx = 0.0, my = 0.0, sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (const auto& o : off) {
    total += o.p;
    mx += o.p * o.dx;
    my += o.p * o.dy;
    sxx += o.p * o.dx * o.dx;
    sxy += o.p * o.dx * o.dy;
    syy += o.p * o.dy * o.dy;
  }
  EXPECT_NEAR(total, 1.0, 1e-12);
  EXPECT_NEAR(mx, 0.0, 1e-12);
  EXPECT_NEAR(my, 0.0, 1e-12);
  EXPECT_NEAR(sxx, 1.0, 0.05);
  EXPECT_NEAR(sxy, 0.3, 0.05);
  EXPECT_NEAR(syy, 0.5, 0.08);

  Eigen::Matrix2d bad;
  bad << 1.0, 0.0, 0.0, -1.0;
  EXPECT_THROW(gaussian_offsets(bad), InvalidInput);
  bad << 1.0, 0.5, 0.0, 1.0;
  EXPECT_THROW(gaussian_offsets(bad), InvalidInput);
}

TEST(Grid, ModelShape) {
  const auto sc = grid_scenario(default_grid_params());
  const auto& m = sc.mdp;
  const std::size_t cells = sc.params.map.cells();
  EXPECT_EQ(m.horizon(), 2 * sc.params.horizon + 1);
  for (std::size_t k = 0; k < m.horizon(); ++k) EXPECT_EQ(m.num_states(k), cells + 1);
  for (std::size_t t = 1; t <= sc.params.horizon; ++t)
    for (std::size_t s = 0; s < cells; ++s)
      EXPECT_EQ(m.is_failure(2 * t, s), sc.params.map.blocked[s] != 0);
  // Failure is only ever entered after the noise step.
  for (std::size_t s = 0; s < cells; ++s) EXPECT_FALSE(m.is_failure(1, s));
}

TEST(Grid, StartInObstacleRejected) {
  auto p = default_grid_params();
  p.start = {5, 14};
  EXPECT_THROW(grid_scenario(p), InvalidInput);
  p = default_grid_params();
  p.goal = {40, 2};
  EXPECT_THROW(grid_scenario(p), InvalidInput);
  p = default_grid_params();
  p.sigma = -1.0;
  EXPECT_THROW(grid_scenario(p), InvalidInput);
}

TEST(Grid, ZeroNoiseOpenMapIsShortestPath) {
  for (auto [w, h, T] : {std::tuple{8, 8, 6}, std::tuple{12, 5, 3}, std::tuple{10, 10, 2}}) {
    auto p = open_grid(w, h);
    p.horizon = static_cast<std::size_t>(T);
    const auto sc = grid_scenario(p);
    const auto c = ccmdp::lagrangian_dp(sc.mdp, 0.0).cost;
    EXPECT_NEAR(c.c0, layered_shortest_path(p.map, p.start, p.goal, p.max_step, p.horizon, p.miss_penalty),
                1e-9);
    EXPECT_EQ(c.c1(), 0.0);
  }
}

TEST(Grid, ZeroNoiseAvoidsObstaclesWhenRiskIsExpensive) {
  auto p = open_grid(10, 10);
  p.map.block_rect(0, 5, 7, 5);
  p.horizon = 8;
  const auto sc = grid_scenario(p);
  const auto c = ccmdp::lagrangian_dp(sc.mdp, 1e6).cost;
  EXPECT_EQ(c.c1(), 0.0);
  EXPECT_NEAR(c.c0, layered_shortest_path(p.map, p.start, p.goal, p.max_step, p.horizon, p.miss_penalty),
              1e-9);
  const auto path = sc.nominal_path(ccmdp::lagrangian_dp(sc.mdp, 1e6).policy);
  EXPECT_EQ(path.front(), p.start);
  EXPECT_EQ(path.back(), p.goal);
  for (const auto& cell : path) EXPECT_FALSE(p.map.is_blocked(cell.x, cell.y));
}

TEST(Grid, DefaultScenarioMeetsBoundExactly) {
  const auto sc = grid_scenario(default_grid_params());
  ccmdp::MdpOracle o(sc.mdp);
  const auto r = solve_mixed(o, Bounds{sc.params.risk_bound});
  ASSERT_GT(r.mixed.dual[0], 0.0);
  EXPECT_NEAR(r.mixed.aggregate.c1(), sc.params.risk_bound, 1e-9);
  EXPECT_LE(r.mixed.components.size(), 2u);
  EXPECT_TRUE(check_optimality(r.mixed, Bounds{sc.params.risk_bound}, o).overall);
  ASSERT_TRUE(r.best_pure.has_value());
  EXPECT_LE(r.mixed.aggregate.c0, r.best_pure->cost.c0 + 1e-9);
  for (const auto& comp : r.mixed.components)
    for (const auto& cell : sc.nominal_path(comp.candidate.policy))
      EXPECT_TRUE(sc.params.map.inside(cell.x, cell.y));
}

namespace {

// Cells reachable from `from` by one correction per stage, zero noise.
std::set<std::pair<int, int>> reachable_landings(const EdlParams& p) {
  std::set<std::pair<int, int>> cur{{p.initial.x, p.initial.y}};
  for (const auto& st : p.stages) {
    std::set<std::pair<int, int>> next;
    const int r = static_cast<int>(std::ceil(st.radius / std::sqrt(st.D.eigenvalues().real().minCoeff())));
    for (auto [x, y] : cur)
      for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) {
          const Eigen::Vector2d v(dx, dy);
          if (v.dot(st.D * v) > st.radius * st.radius + 1e-9) continue;
          if (!p.hazard.inside(x + dx, y + dy)) continue;
          next.insert({x + dx, y + dy});
        }
    cur = std::move(next);
  }
  return cur;
}

}  // namespace

TEST(Edl, ZeroNoiseOpenMapLandsOnCheapestCell) {
  auto p = default_edl_params();
  p.hazard = GridMap(40, 40);
  for (auto& st : p.stages) st.sigma = Eigen::Matrix2d::Zero();
  const auto sc = edl_scenario(p);
  const auto c = ccmdp::lagrangian_dp(sc.mdp, 0.0).cost;
  // On an open map the traverse is a Manhattan tour through both targets.
  const auto [t0, t1] = p.targets;
  const int between = std::abs(t0.x - t1.x) + std::abs(t0.y - t1.y);
  double best = std::numeric_limits<double>::infinity();
  for (auto [x, y] : reachable_landings(p)) {
    const int d = std::min(std::abs(x - t0.x) + std::abs(y - t0.y), std::abs(x - t1.x) + std::abs(y - t1.y));
    best = std::min(best, p.cell_size * (d + between));
  }
  EXPECT_NEAR(c.c0, best, 1e-9);
  EXPECT_EQ(c.c1(), 0.0);
}

TEST(Edl, Validation) {
  auto p = default_edl_params();
  std::fill(p.hazard.blocked.begin(), p.hazard.blocked.end(), 1);
  EXPECT_THROW(edl_scenario(p), InvalidInput);
  p = default_edl_params();
  p.stages.resize(1);
  EXPECT_THROW(edl_scenario(p), InvalidInput);
  p = default_edl_params();
  p.hazard.block_rect(p.targets[0].x, p.targets[0].y, p.targets[0].x, p.targets[0].y);
  EXPECT_THROW(edl_scenario(p), InvalidInput);
  p = default_edl_params();
  p.stages[0].D << 1.0, 0.0, 0.0, -1.0;
  EXPECT_THROW(edl_scenario(p), InvalidInput);
}

TEST(Edl, DefaultScenarioMeetsBoundExactly) {
  const auto sc = edl_scenario(default_edl_params());
  ccmdp::MdpOracle o(sc.mdp);
  const auto r = solve_mixed(o, Bounds{sc.params.risk_bound});
  ASSERT_GT(r.mixed.dual[0], 0.0);
  EXPECT_NEAR(r.mixed.aggregate.c1(), sc.params.risk_bound, 1e-9);
  EXPECT_TRUE(check_optimality(r.mixed, Bounds{sc.params.risk_bound}, o).overall);
  for (const auto& comp : r.mixed.components) {
    const auto aims = sc.nominal_aims(comp.candidate.policy);
    EXPECT_EQ(aims.size(), sc.params.stages.size());
  }
}

TEST(Smpc, CorridorInstanceIsValid) {
  const auto inst = corridor_smpc();
  EXPECT_NO_THROW(inst.model.validate());
  EXPECT_EQ(inst.model.obstacles.size(), 2u);
  EXPECT_LE(inst.model.horizon, 10u);
}
